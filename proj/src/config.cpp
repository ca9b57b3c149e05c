#include "isac/config.hpp"

#include <fmt/format.h>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#ifndef ISAC_TSDE_VERSION
#define ISAC_TSDE_VERSION "0.0.0"
#endif

namespace isac {

ConfigError::ConfigError(const std::string& source, int line, const std::string& message)
    : std::runtime_error(line > 0 ? fmt::format("{}:{}: {}", source, line, message)
                                  : fmt::format("{}: {}", source, message)),
      line_(line)
{
}

const char* library_version() { return ISAC_TSDE_VERSION; }

bool operator==(const RunConfig& a, const RunConfig& b) { return a.sweep == b.sweep; }

namespace {

int line_of(const YAML::Node& n) { return n.Mark().line >= 0 ? n.Mark().line + 1 : 0; }

class Reader {
public:
    explicit Reader(std::string source) : source_(std::move(source)) {}

    [[noreturn]] void fail(const YAML::Node& at, const std::string& msg) const
    {
        throw ConfigError(source_, line_of(at), msg);
    }

    void require_map(const YAML::Node& node, const std::string& where) const
    {
        if (!node.IsMap())
            fail(node, fmt::format("'{}' must be a mapping", where));
    }

    void check_keys(const YAML::Node& node, const std::string& section, const std::set<std::string>& allowed) const
    {
        require_map(node, section);
        for (auto it = node.begin(); it != node.end(); ++it) {
            const auto key = it->first.as<std::string>();
            if (!allowed.count(key))
                fail(it->first, fmt::format("unknown key '{}' in section '{}'", key, section));
        }
    }

    template <typename T>
    void read(const YAML::Node& section, const char* key, const std::string& path, T& out) const
    {
        const YAML::Node node = section[key];
        if (!node)
            return;
        if (!node.IsScalar())
            fail(node, fmt::format("'{}.{}' must be a scalar", path, key));
        try {
            out = node.as<T>();
        } catch (const YAML::Exception&) {
            fail(node, fmt::format("'{}.{}' has an invalid value '{}'", path, key, node.Scalar()));
        }
    }

    void read_int(const YAML::Node& section, const char* key, const std::string& path, int& out) const
    {
        long long v = out;
        read(section, key, path, v);
        if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
            fail(section[key], fmt::format("'{}.{}' out of range", path, key));
        out = static_cast<int>(v);
    }

    const std::string& source() const { return source_; }

private:
    std::string source_;
};

SymbolKind symbols_from_string(const std::string& s)
{
    if (s == "qpsk")
        return SymbolKind::qpsk;
    if (s == "zadoff_chu")
        return SymbolKind::zadoff_chu;
    throw std::invalid_argument("expected qpsk or zadoff_chu");
}

const char* to_string(SymbolKind k) { return k == SymbolKind::zadoff_chu ? "zadoff_chu" : "qpsk"; }

ThresholdMode threshold_mode_from_string(const std::string& s)
{
    if (s == "fixed")
        return ThresholdMode::fixed;
    if (s == "noise_floor")
        return ThresholdMode::noise_floor;
    throw std::invalid_argument("expected fixed or noise_floor");
}

const char* to_string(ThresholdMode m) { return m == ThresholdMode::noise_floor ? "noise_floor" : "fixed"; }

CoarseStop coarse_stop_from_string(const std::string& s)
{
    if (s == "detection")
        return CoarseStop::detection;
    if (s == "known_count")
        return CoarseStop::known_count;
    throw std::invalid_argument("expected detection or known_count");
}

const char* to_string(CoarseStop c) { return c == CoarseStop::known_count ? "known_count" : "detection"; }

RunConfig parse_document(const std::string& text, const std::string& source, bool allow_run_section)
{
    Reader rd(source);
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(source, e.mark.line + 1, e.msg);
    }
    if (!root || root.IsNull())
        throw ConfigError(source, 0, "empty configuration");

    std::set<std::string> sections{"system", "channel", "estimator", "waveform", "sweep"};
    if (allow_run_section)
        sections.insert("run");
    rd.check_keys(root, "<root>", sections);

    RunConfig cfg;
    SweepConfig& sc = cfg.sweep;

    if (const auto sys = root["system"]) {
        rd.check_keys(sys, "system", {"delta_f_hz", "k", "k1", "n_cp"});
        rd.read(sys, "delta_f_hz", "system", sc.system.delta_f_hz);
        rd.read_int(sys, "k", "system", sc.system.k);
        rd.read_int(sys, "k1", "system", sc.system.k1);
        sc.system.n_cp = sc.system.k / 8;
        rd.read_int(sys, "n_cp", "system", sc.system.n_cp);
        try {
            sc.system.validate();
        } catch (const std::invalid_argument& e) {
            rd.fail(sys, e.what());
        }
    }

    // Defaults for the channel window follow the numerology: one sample up to
    // half the CP for the first arrival, spread of a quarter CP.
    const double ts = sc.system.sample_period_s();
    sc.scenario.delay_offset_min_s = ts;
    sc.scenario.delay_offset_max_s = sc.system.cp_duration_s() / 2.0;
    sc.scenario.delay_spread_max_s = sc.system.cp_duration_s() / 4.0;
    if (const auto ch = root["channel"]) {
        rd.check_keys(ch, "channel",
                      {"l", "delay_spread_max_s", "delay_offset_min_s", "delay_offset_max_s", "delay_offset_step_s",
                       "on_grid", "min_separation_s", "gain_model", "snr_db"});
        auto& s = sc.scenario;
        rd.read_int(ch, "l", "channel", s.l);
        rd.read(ch, "delay_spread_max_s", "channel", s.delay_spread_max_s);
        rd.read(ch, "delay_offset_min_s", "channel", s.delay_offset_min_s);
        rd.read(ch, "delay_offset_max_s", "channel", s.delay_offset_max_s);
        rd.read(ch, "delay_offset_step_s", "channel", s.delay_offset_step_s);
        rd.read(ch, "on_grid", "channel", s.on_grid);
        rd.read(ch, "min_separation_s", "channel", s.min_separation_s);
        if (const auto snr = ch["snr_db"]; snr && !snr.IsNull()) {
            double v = 0.0;
            rd.read(ch, "snr_db", "channel", v);
            if (std::isnan(v))
                rd.fail(snr, "'channel.snr_db' must be a number or .inf");
            s.snr_db = std::isinf(v) && v > 0 ? std::nullopt : std::optional<double>(v);
        }
        if (const auto g = ch["gain_model"]) {
            rd.check_keys(g, "channel.gain_model", {"magnitude_min", "magnitude_max"});
            rd.read(g, "magnitude_min", "channel.gain_model", s.gain_magnitude_min);
            rd.read(g, "magnitude_max", "channel.gain_model", s.gain_magnitude_max);
        }
        try {
            s.validate(sc.system);
        } catch (const std::invalid_argument& e) {
            rd.fail(ch, e.what());
        }
    }

    if (const auto est = root["estimator"]) {
        rd.check_keys(est, "estimator", {"gamma_th", "joint_refit", "threshold_mode", "noise_margin", "coarse_stop"});
        rd.read(est, "gamma_th", "estimator", sc.estimator.gamma_th);
        rd.read(est, "joint_refit", "estimator", sc.estimator.joint_refit);
        rd.read(est, "noise_margin", "estimator", sc.estimator.noise_margin);
        if (const auto m = est["threshold_mode"]) {
            try {
                sc.estimator.threshold_mode = threshold_mode_from_string(m.as<std::string>());
            } catch (const std::exception& e) {
                rd.fail(m, fmt::format("'estimator.threshold_mode': {}", e.what()));
            }
        }
        if (const auto c = est["coarse_stop"]) {
            try {
                sc.estimator.coarse_stop = coarse_stop_from_string(c.as<std::string>());
            } catch (const std::exception& e) {
                rd.fail(c, fmt::format("'estimator.coarse_stop': {}", e.what()));
            }
        }
        try {
            sc.estimator.validate();
        } catch (const std::invalid_argument& e) {
            rd.fail(est, e.what());
        }
    }

    if (const auto wf = root["waveform"]) {
        rd.check_keys(wf, "waveform", {"symbols"});
        if (const auto s = wf["symbols"]) {
            try {
                sc.symbols = symbols_from_string(s.as<std::string>());
            } catch (const std::exception& e) {
                rd.fail(s, fmt::format("'waveform.symbols': {}", e.what()));
            }
        }
    }

    sc.snr_db = {-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0};
    if (const auto sw = root["sweep"]) {
        rd.check_keys(sw, "sweep", {"snr_db", "trials", "methods", "master_seed"});
        rd.read_int(sw, "trials", "sweep", sc.trials);
        rd.read(sw, "master_seed", "sweep", sc.master_seed);
        if (const auto snr = sw["snr_db"]) {
            if (!snr.IsSequence() || snr.size() == 0)
                rd.fail(snr, "'sweep.snr_db' must be a non-empty list");
            sc.snr_db.clear();
            for (const auto& v : snr) {
                try {
                    sc.snr_db.push_back(v.as<double>());
                } catch (const YAML::Exception&) {
                    rd.fail(v, fmt::format("'sweep.snr_db' entry '{}' is not a number", v.Scalar()));
                }
            }
        }
        if (const auto methods = sw["methods"]) {
            if (!methods.IsSequence() || methods.size() == 0)
                rd.fail(methods, "'sweep.methods' must be a non-empty list");
            sc.methods.clear();
            for (const auto& v : methods) {
                try {
                    sc.methods.push_back(method_from_string(v.as<std::string>()));
                } catch (const std::exception& e) {
                    rd.fail(v, fmt::format("'sweep.methods': {}", e.what()));
                }
            }
        }
        if (sc.trials < 1)
            rd.fail(sw["trials"], "'sweep.trials' must be >= 1");
    }

    if (allow_run_section) {
        if (const auto run = root["run"])
            rd.check_keys(run, "run", {"master_seed", "library_version", "threads"});
    }

    try {
        sc.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(source, 0, e.what());
    }
    return cfg;
}

std::string num(double v)
{
    if (std::isinf(v))
        return v > 0 ? ".inf" : "-.inf";
    return fmt::format("{:.17g}", v);
}

} // namespace

RunConfig parse_run_config(const std::string& text, const std::string& source)
{
    // Manifests are valid configs, so a sweep can be re-run from its own record.
    return parse_document(text, source, true);
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError(path, 0, "cannot open configuration file");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str(), path);
}

RunConfig parse_manifest(const std::string& text, const std::string& source)
{
    return parse_document(text, source, true);
}

std::string emit_manifest(const RunConfig& cfg, int threads)
{
    const SweepConfig& sc = cfg.sweep;
    const auto& s = sc.scenario;
    std::string out;
    out += "system:\n";
    out += fmt::format("  delta_f_hz: {}\n  k: {}\n  k1: {}\n  n_cp: {}\n", num(sc.system.delta_f_hz), sc.system.k,
                       sc.system.k1, sc.system.n_cp);
    out += "channel:\n";
    out += fmt::format("  l: {}\n", s.l);
    out += fmt::format("  delay_spread_max_s: {}\n", num(s.delay_spread_max_s));
    out += fmt::format("  delay_offset_min_s: {}\n", num(s.delay_offset_min_s));
    out += fmt::format("  delay_offset_max_s: {}\n", num(s.delay_offset_max_s));
    out += fmt::format("  delay_offset_step_s: {}\n", num(s.delay_offset_step_s));
    out += fmt::format("  on_grid: {}\n", s.on_grid ? "true" : "false");
    out += fmt::format("  min_separation_s: {}\n", num(s.min_separation_s));
    out += fmt::format("  snr_db: {}\n", s.snr_db ? num(*s.snr_db) : std::string("null"));
    out += fmt::format("  gain_model:\n    magnitude_min: {}\n    magnitude_max: {}\n", num(s.gain_magnitude_min),
                       num(s.gain_magnitude_max));
    out += "estimator:\n";
    out += fmt::format("  gamma_th: {}\n  joint_refit: {}\n  threshold_mode: {}\n  noise_margin: {}\n"
                       "  coarse_stop: {}\n",
                       num(sc.estimator.gamma_th), sc.estimator.joint_refit ? "true" : "false",
                       to_string(sc.estimator.threshold_mode), num(sc.estimator.noise_margin),
                       to_string(sc.estimator.coarse_stop));
    out += fmt::format("waveform:\n  symbols: {}\n", to_string(sc.symbols));
    out += "sweep:\n  snr_db: [";
    for (std::size_t i = 0; i < sc.snr_db.size(); ++i)
        out += (i ? ", " : "") + num(sc.snr_db[i]);
    out += fmt::format("]\n  trials: {}\n  methods: [", sc.trials);
    for (std::size_t i = 0; i < sc.methods.size(); ++i)
        out += (i ? ", " : "") + to_string(sc.methods[i]);
    out += fmt::format("]\n  master_seed: {}\n", sc.master_seed);
    out += fmt::format("run:\n  master_seed: {}\n  library_version: \"{}\"\n  threads: {}\n", sc.master_seed,
                       library_version(), threads);
    return out;
}

} // namespace isac
