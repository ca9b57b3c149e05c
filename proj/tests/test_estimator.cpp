#include <catch2/catch_amalgamated.hpp>

#include "isac/channel.hpp"
#include "isac/estimator.hpp"

#include <random>

using namespace isac;

namespace {

const SystemConfig kCfg{120e3, 1024, 32, 128};

CVector<double> snapshot_for(const MultipathChannel& ch, int eta, const SystemConfig& cfg = kCfg)
{
    return frequency_response(ch, eta, cfg);
}

MultipathChannel on_grid(std::initializer_list<std::pair<std::complex<double>, int>> paths,
                         const SystemConfig& cfg = kCfg)
{
    MultipathChannel ch;
    for (const auto& [g, p] : paths)
        ch.paths.push_back({g, p * cfg.sample_period_s()});
    return ch;
}

} // namespace

TEST_CASE("filter bank construction")
{
    for (int eta : {1, 5, 32}) {
        const auto bank = build_bank(eta, kCfg);
        REQUIRE(bank.size() == kCfg.n_cp);
        CHECK((bank.column(0) - CVector<double>::Ones(kCfg.k1)).norm() == 0.0);
        for (int p = 0; p < bank.size(); ++p)
            CHECK(bank.column(p).squaredNorm() == Catch::Approx(double(kCfg.k1)).epsilon(1e-14));
    }

    const SystemConfig small{15e3, 8, 4, 4};
    const auto bank = build_bank(2, small);
    const std::complex<double> j(0, 1);
    const std::complex<double> expected[] = {1.0, std::exp(-j * kPi<double> / 2.0), std::exp(-j * kPi<double>),
                                             std::exp(-j * 3.0 * kPi<double> / 2.0)};
    for (int k = 0; k < 4; ++k)
        CHECK(std::abs(bank.columns(k, 1) - expected[k]) < 1e-15);

    CHECK_THROWS_AS(build_bank(0, kCfg), std::invalid_argument);
    CHECK_THROWS_AS(build_bank(33, kCfg), std::invalid_argument);
}

TEST_CASE("matched-filter spectrum")
{
    const auto bank = build_bank(1, kCfg);
    const auto r = bank.column(40);
    const auto spec = mf_spectrum(r, bank);
    REQUIRE(spec.values.size() == kCfg.n_cp);
    Eigen::Index argmax = 0;
    spec.values.cwiseAbs().maxCoeff(&argmax);
    CHECK(argmax == 40);
    CHECK(std::abs(spec.values[40]) == Catch::Approx(1.0));

    const std::complex<double> c(0.4, -1.1);
    CHECK(std::abs(mf_spectrum(CVector<double>::Constant(kCfg.k1, c), bank).values[0] - c) < 1e-14);

    const auto region = mf_spectrum(r, bank, IndexSet{44, 40, 3});
    CHECK(region.indices == IndexSet{3, 40, 44});
    CHECK(std::abs(region.values[1] - spec.values[40]) == 0.0);

    CHECK_THROWS_AS(mf_spectrum(r, bank, IndexSet{}), std::invalid_argument);
    CHECK_THROWS_AS(mf_spectrum(r, bank, IndexSet{128}), std::invalid_argument);
    CHECK_THROWS_AS(mf_spectrum(CVector<double>::Ones(5), bank), std::invalid_argument);
}

TEST_CASE("spectrum equals the Dirichlet superposition")
{
    const double ts = kCfg.sample_period_s();
    const MultipathChannel ch{{{{0.8, 0.3}, 17.0 * ts}, {{-0.2, 0.6}, 61.4 * ts}}};
    for (int eta : {1, 3, 32}) {
        const auto bank = build_bank(eta, kCfg);
        const auto spec = mf_spectrum(snapshot_for(ch, eta), bank);
        for (int p = 0; p < kCfg.n_cp; ++p) {
            std::complex<double> expected = 0.0;
            for (const auto& path : ch.paths)
                expected += path.gain * dirichlet_gain(path.delay_s - p * ts, eta, kCfg);
            INFO("eta=" << eta << " p=" << p);
            CHECK(std::abs(spec.values[p] - expected) < 1e-10);
        }
    }
}

TEST_CASE("successive estimate on a single on-grid path")
{
    const auto bank = build_bank(1, kCfg);
    const auto est = successive_estimate(snapshot_for(on_grid({{1.0, 100}}), 1), bank, ThresholdStop{0.01}, kCfg);
    CHECK(est.indices == IndexSet{100});
    CHECK(est.l_hat == 1);
    CHECK(est.residual_ratio < 1e-20);
    CHECK_FALSE(est.cap_reached);
    CHECK(est.delays_s[0] == Catch::Approx(100 * kCfg.sample_period_s()));
}

TEST_CASE("collocated subcarriers cannot resolve two close paths")
{
    const auto ch = on_grid({{1.0, 100}, {{0.0, 1.0}, 102}});
    const auto est = successive_estimate(snapshot_for(ch, 1), build_bank(1, kCfg), ThresholdStop{0.01}, kCfg);
    CHECK(est.l_hat == 1);
}

TEST_CASE("full decimation resolves the close paths inside their bin")
{
    const auto ch = on_grid({{1.0, 100}, {{0.0, 1.0}, 102}});
    IndexSet region;
    for (int p = 96; p < 128; ++p)
        region.push_back(p);
    const auto est =
        successive_estimate(snapshot_for(ch, 32), build_bank(32, kCfg), ThresholdStop{0.01}, kCfg, region);
    CHECK(est.sorted_indices() == IndexSet{100, 102});
    CHECK(est.residual_ratio < 1e-20);
}

TEST_CASE("projection removes the selected column exactly")
{
    const auto bank = build_bank(7, kCfg);
    const DelayEstimate est = successive_estimate(bank.column(55), bank, FixedCountStop{1}, kCfg);
    CHECK(est.indices == IndexSet{55});
    CHECK(est.residual_ratio * bank.column(55).squaredNorm() <= 1e-24);
}

TEST_CASE("iteration invariants on random noisy snapshots")
{
    std::mt19937_64 rng(7);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 50; ++trial) {
        const int eta = 1 + trial % 8;
        const auto bank = build_bank(eta, kCfg);
        CVector<double> r(kCfg.k1);
        for (auto& v : r)
            v = {g(rng), g(rng)};
        r += 3.0 * bank.column(trial % kCfg.n_cp);

        // First pick maximises the spectrum.
        const auto spec = mf_spectrum(r, bank);
        Eigen::Index argmax = 0;
        spec.values.cwiseAbs().maxCoeff(&argmax);
        const auto first = successive_estimate(r, bank, FixedCountStop{1}, kCfg);
        CHECK(first.indices.front() == static_cast<int>(argmax));

        // Replay step by step: orthogonality after deflation and monotone gamma.
        CVector<double> residual = r;
        double prev_gamma = 1.0;
        for (int l = 1; l <= 6; ++l) {
            const auto est = successive_estimate(r, bank, FixedCountStop{l}, kCfg);
            REQUIRE(est.l_hat == l);
            CHECK(est.residual_ratio <= prev_gamma + 1e-15);
            CHECK(est.residual_ratio >= 0.0);
            prev_gamma = est.residual_ratio;
            const auto f = bank.column(est.indices.back());
            residual -= f * (f.dot(residual) / f.squaredNorm());
            CHECK(std::abs(f.dot(residual)) <= 1e-10 * residual.norm());
            CHECK(residual.squaredNorm() / r.squaredNorm() == Catch::Approx(est.residual_ratio).epsilon(1e-9));
            const IndexSet sorted = est.sorted_indices();
            CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
        }
    }
}

TEST_CASE("grating lobes are equally strong without a region")
{
    const int p = 45;
    const int period = kCfg.k / kCfg.eta_max();
    const auto bank = build_bank(kCfg.eta_max(), kCfg);
    const auto spec = mf_spectrum(snapshot_for(on_grid({{1.0, p}}), kCfg.eta_max()), bank);
    const double peak = spec.values.cwiseAbs().maxCoeff();
    for (int q = p % period; q < kCfg.n_cp; q += period)
        CHECK(std::abs(spec.values[q]) == Catch::Approx(peak).margin(1e-9));
    for (int q = 0; q < kCfg.n_cp; ++q)
        if (q % period != p % period)
            CHECK(std::abs(spec.values[q]) < 1e-9);
    const auto est = successive_estimate(snapshot_for(on_grid({{1.0, p}}), kCfg.eta_max()), bank,
                                         FixedCountStop{1}, kCfg);
    CHECK(est.indices.front() % period == p % period);
}

TEST_CASE("ties break towards the lowest index")
{
    const auto bank = build_bank(kCfg.eta_max(), kCfg);
    // Grating replicas at 13, 45, 77, 109 are identical columns.
    const auto est = successive_estimate(bank.column(77), bank, FixedCountStop{1}, kCfg);
    CHECK(est.indices.front() == 13);
}

TEST_CASE("stop rules and caps")
{
    const auto bank = build_bank(1, kCfg);
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    CVector<double> noise(kCfg.k1);
    for (auto& v : noise)
        v = {g(rng), g(rng)};

    const auto capped = successive_estimate(noise, bank, ThresholdStop{1e-9}, kCfg);
    CHECK(capped.cap_reached);
    CHECK(capped.l_hat == kCfg.k1);

    const auto region = successive_estimate(noise, bank, ThresholdStop{1e-9}, kCfg, IndexSet{1, 2, 3});
    CHECK(region.l_hat == 3);
    CHECK(region.cap_reached);

    const auto fixed = successive_estimate(noise, bank, FixedCountStop{4}, kCfg);
    CHECK(fixed.l_hat == 4);
    CHECK_FALSE(fixed.cap_reached);

    CHECK_THROWS_AS(successive_estimate(CVector<double>::Zero(kCfg.k1), bank, ThresholdStop{}, kCfg),
                    std::invalid_argument);
    CHECK_THROWS_AS(successive_estimate(noise, bank, ThresholdStop{1.5}, kCfg), std::invalid_argument);
    CHECK_THROWS_AS(successive_estimate(noise, bank, FixedCountStop{0}, kCfg), std::invalid_argument);
    CHECK_THROWS_AS(successive_estimate(noise, bank, ThresholdStop{}, kCfg, IndexSet{}), std::invalid_argument);
}

TEST_CASE("noise-floor threshold scales with the snapshot noise")
{
    const auto bank = build_bank(1, kCfg);
    const CVector<double> r = bank.column(10);
    SensingSnapshot<double> snap{r, 1, 0.25 * r.squaredNorm()};
    const auto est = successive_estimate(snap, bank, NoiseFloorStop{2.0, 1e-6}, kCfg);
    REQUIRE(est.gamma_th);
    CHECK(*est.gamma_th == Catch::Approx(0.5));
    snap.noise_energy = 0.0;
    CHECK(*successive_estimate(snap, bank, NoiseFloorStop{2.0, 1e-6}, kCfg).gamma_th == Catch::Approx(1e-6));
}

TEST_CASE("joint refit matches single-column deflation on orthogonal columns and never does worse")
{
    const SystemConfig cfg{120e3, 64, 64, 32};
    const auto bank = build_bank(1, cfg);
    const auto ch = on_grid({{0.9, 4}, {{0.2, 0.5}, 20}}, cfg);
    const auto r = snapshot_for(ch, 1, cfg);
    const auto single = successive_estimate(r, bank, FixedCountStop{2}, cfg);
    const auto joint = successive_estimate(r, bank, FixedCountStop{2}, cfg, std::nullopt, {true, false});
    CHECK(single.sorted_indices() == joint.sorted_indices());

    const auto close = snapshot_for(on_grid({{1.0, 100}, {{0.0, 1.0}, 110}}), 1);
    const auto b1 = build_bank(1, kCfg);
    const auto s = successive_estimate(close, b1, FixedCountStop{3}, kCfg);
    const auto j = successive_estimate(close, b1, FixedCountStop{3}, kCfg, std::nullopt, {true, false});
    CHECK(j.residual_ratio <= s.residual_ratio + 1e-12);
}

TEST_CASE("spectrum trace is kept on request")
{
    const auto bank = build_bank(1, kCfg);
    const auto r = bank.column(12);
    const auto est = successive_estimate(r, bank, FixedCountStop{1}, kCfg, IndexSet{10, 11, 12}, {false, true});
    CHECK(est.spectrum_indices == IndexSet{10, 11, 12});
    REQUIRE(est.spectrum_magnitude.size() == 3);
    CHECK(est.spectrum_magnitude[2] == Catch::Approx(1.0));
}

TEST_CASE("single-precision instantiation")
{
    const auto bank = build_bank<float>(4, kCfg);
    CVector<float> r = bank.column(21);
    const auto est = successive_estimate(r, bank, ThresholdStop{0.01}, kCfg);
    CHECK(est.indices == IndexSet{21});
}
