#include <catch2/catch_amalgamated.hpp>

#include "isac/config.hpp"

#include <cmath>
#include <limits>

using namespace isac;

namespace {

const char* kFull = R"(system:
  delta_f_hz: 120000
  k: 1024
  k1: 32
  n_cp: 128
channel:
  l: 3
  delay_offset_min_s: 1.0e-8
  delay_offset_max_s: 2.0e-7
  delay_offset_step_s: 0
  delay_spread_max_s: 2.5e-7
  min_separation_s: 8.0e-9
  on_grid: false
  snr_db: 7.5
  gain_model:
    magnitude_min: 0.25
    magnitude_max: 0.75
estimator:
  gamma_th: 0.02
  joint_refit: true
  threshold_mode: noise_floor
  noise_margin: 2
  coarse_stop: known_count
waveform:
  symbols: zadoff_chu
sweep:
  snr_db: [-5, 0, .inf]
  trials: 17
  methods: [fullband, tsde]
  master_seed: 18446744073709551615
)";

} // namespace

TEST_CASE("all keys are read")
{
    const auto cfg = parse_run_config(kFull);
    const auto& sc = cfg.sweep;
    CHECK(sc.system == SystemConfig{120e3, 1024, 32, 128});
    CHECK(sc.scenario.l == 3);
    CHECK(sc.scenario.delay_offset_min_s == 1e-8);
    CHECK(sc.scenario.delay_spread_max_s == 2.5e-7);
    CHECK_FALSE(sc.scenario.on_grid);
    REQUIRE(sc.scenario.snr_db);
    CHECK(*sc.scenario.snr_db == 7.5);
    CHECK(sc.scenario.gain_magnitude_min == 0.25);
    CHECK(sc.estimator.gamma_th == 0.02);
    CHECK(sc.estimator.joint_refit);
    CHECK(sc.estimator.threshold_mode == ThresholdMode::noise_floor);
    CHECK(sc.estimator.noise_margin == 2.0);
    CHECK(sc.estimator.coarse_stop == CoarseStop::known_count);
    CHECK(sc.symbols == SymbolKind::zadoff_chu);
    REQUIRE(sc.snr_db.size() == 3);
    CHECK(std::isinf(sc.snr_db[2]));
    CHECK(sc.trials == 17);
    CHECK(sc.methods == std::vector<Method>{Method::fullband, Method::tsde});
    CHECK(sc.master_seed == std::numeric_limits<std::uint64_t>::max());
}

TEST_CASE("defaults follow the numerology")
{
    const auto sc = parse_run_config("system:\n  k: 256\n  k1: 16\n").sweep;
    CHECK(sc.system.n_cp == 32);
    CHECK(sc.system.delta_f_hz == 120e3);
    CHECK(sc.scenario.delay_offset_min_s == Catch::Approx(sc.system.sample_period_s()));
    CHECK(sc.scenario.delay_offset_max_s == Catch::Approx(sc.system.cp_duration_s() / 2));
    CHECK(sc.scenario.delay_spread_max_s == Catch::Approx(sc.system.cp_duration_s() / 4));
    CHECK(sc.estimator == EstimatorSettings{});
    CHECK(sc.trials == 1000);
    CHECK(sc.methods.size() == 3);
    CHECK_FALSE(sc.scenario.snr_db);
}

TEST_CASE("unknown keys are reported with their line")
{
    const std::string text = "system:\n  k: 1024\n  k1: 32\nchannel:\n  l: 2\n  spread_s: 1e-7\n";
    try {
        parse_run_config(text, "cfg.yaml");
        FAIL("expected a ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.line() == 6);
        const std::string what = e.what();
        CHECK(what.find("cfg.yaml:6") != std::string::npos);
        CHECK(what.find("spread_s") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_run_config("bogus:\n  x: 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("run:\n  seed: 1\n"), ConfigError);
}

TEST_CASE("invalid values are rejected")
{
    CHECK_THROWS_AS(parse_run_config("system:\n  k: 1000\n  k1: 32\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("system:\n  k: 1024\n  k1: 1024\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("estimator:\n  gamma_th: 1.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("estimator:\n  threshold_mode: adaptive\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("estimator:\n  coarse_stop: never\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("waveform:\n  symbols: 16qam\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sweep:\n  methods: [music]\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sweep:\n  trials: 0\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sweep:\n  snr_db: []\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("sweep:\n  snr_db: [1, loud]\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("system:\n  k: twelve\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("channel:\n  l: 2.5\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("channel:\n  delay_spread_max_s: 1.0e-6\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config("system: [1, 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_run_config(""), ConfigError);
    CHECK_THROWS_AS(load_run_config("/nonexistent/config.yaml"), ConfigError);
}

TEST_CASE("manifest round trip reproduces the configuration")
{
    const auto cfg = parse_run_config(kFull);
    const auto manifest = emit_manifest(cfg, 4);
    CHECK(manifest.find("library_version") != std::string::npos);
    CHECK(manifest.find("threads: 4") != std::string::npos);
    const auto back = parse_manifest(manifest);
    CHECK(back == cfg);
    CHECK(back.sweep == cfg.sweep);
    CHECK(emit_manifest(back, 4) == manifest);

    // Values that do not print exactly in a short decimal form still survive.
    auto odd = parse_run_config("system:\n  k: 1024\n  k1: 32\n");
    odd.sweep.scenario.delay_spread_max_s = 1.0 / 3.0 * 1e-6;
    odd.sweep.estimator.gamma_th = 0.1 + 0.2;
    odd.sweep.snr_db = {std::numeric_limits<double>::infinity(), 1e-3 / 7};
    CHECK(parse_manifest(emit_manifest(odd, 1)) == odd);
    CHECK(parse_run_config(manifest) == cfg);
}

TEST_CASE("example configurations load")
{
    for (const char* name : {"reference.yaml", "noiseless.yaml"}) {
        INFO(name);
        CHECK_NOTHROW(load_run_config(std::string(ISAC_SOURCE_DIR) + "/configs/" + name));
    }
}
