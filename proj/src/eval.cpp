#include "isac/eval.hpp"

#include <Eigen/LU>
#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <thread>

namespace isac {

namespace {

std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t kChannelStream = 0x6368616eULL;
constexpr std::uint64_t kDetectionRun = 0;
constexpr std::uint64_t kNmseRun = 1;

} // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> tags)
{
    std::uint64_t h = splitmix64(master);
    for (std::uint64_t t : tags)
        h = splitmix64(h ^ splitmix64(t + 0x632be59bd9b4e019ULL));
    return h;
}

SimulatedUplink::SimulatedUplink(SystemConfig cfg, MultipathChannel channel, std::optional<double> snr_db,
                                 SymbolKind symbols, Rng& rng)
    : cfg_(cfg), channel_(std::move(channel)), snr_db_(snr_db), symbols_(symbols), rng_(&rng)
{
    cfg_.validate();
    channel_.validate(cfg_);
    if (snr_db_ && std::isinf(*snr_db_) && *snr_db_ > 0)
        snr_db_.reset();
}

SensingSnapshot<double> SimulatedUplink::operator()(int eta)
{
    const auto map = SubcarrierMap::for_config(eta, cfg_);
    map.validate(cfg_);
    ++transmissions_;

    // A random block can spread to an exact spectral zero (QPSK at K1 = 32 does
    // so roughly one time in ten); sensing then waits for the next block.
    CVector<double> spread_values;
    for (int attempt = 0;; ++attempt) {
        spread_values = spread(make_symbol_block<double>(symbols_, cfg_.k1, *rng_), cfg_);
        const double floor = 1e-12 * spread_values.squaredNorm() / static_cast<double>(cfg_.k1);
        if (spread_values.cwiseAbs2().minCoeff() > floor)
            break;
        if (attempt == 1000)
            throw std::runtime_error("SimulatedUplink: no usable symbol block in 1000 draws");
    }
    // Mapping then demapping is the identity on the used subcarriers, so the
    // channel is applied there directly.
    const CVector<double> received = apply_channel_awgn(spread_values, channel_, eta, snr_db_, *rng_, cfg_);

    SensingSnapshot<double> snap{sensing_snapshot(received, spread_values), eta, 0.0};
    if (snr_db_) {
        const double sigma2 = noise_variance(spread_values, *snr_db_);
        snap.noise_energy = sigma2 * spread_values.cwiseAbs2().cwiseInverse().sum();
    }
    return snap;
}

double detection_probability(std::span<const DetectionOutcome> outcomes)
{
    if (outcomes.empty())
        throw std::invalid_argument("detection_probability: no outcomes");
    const auto hits = std::count_if(outcomes.begin(), outcomes.end(),
                                    [](const DetectionOutcome& o) { return o.l_hat == o.l_true; });
    return static_cast<double>(hits) / static_cast<double>(outcomes.size());
}

double nmse(std::span<const double> true_delays_s, std::span<const double> est_delays_s)
{
    if (true_delays_s.empty() || true_delays_s.size() != est_delays_s.size())
        throw std::invalid_argument("nmse: need equal, non-zero numbers of true and estimated delays");
    std::vector<double> t(true_delays_s.begin(), true_delays_s.end());
    std::vector<double> e(est_delays_s.begin(), est_delays_s.end());
    std::sort(t.begin(), t.end());
    std::sort(e.begin(), e.end());
    double acc = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (t[i] == 0.0)
            throw std::invalid_argument("nmse: true delay of zero");
        const double d = (t[i] - e[i]) / t[i];
        acc += d * d;
    }
    return acc / static_cast<double>(t.size());
}

IndexSet oracle_exhaustive(const CVector<double>& r, const MatchedFilterBank<double>& bank, int l_true,
                           const std::optional<IndexSet>& domain)
{
    if (l_true < 1 || l_true > 2)
        throw std::invalid_argument("oracle_exhaustive: only 1 or 2 paths supported");
    const IndexSet cand = detail::checked_domain(domain, bank.size());
    if (cand.size() > 256)
        throw std::invalid_argument("oracle_exhaustive: candidate domain larger than 256 indices");
    if (r.size() != bank.k1)
        throw std::invalid_argument("oracle_exhaustive: snapshot length mismatch");
    if (static_cast<int>(cand.size()) < l_true)
        throw std::invalid_argument("oracle_exhaustive: fewer candidates than paths");

    auto residual = [&](const IndexSet& subset) {
        CMatrix<double> fs(bank.k1, static_cast<Eigen::Index>(subset.size()));
        for (std::size_t j = 0; j < subset.size(); ++j)
            fs.col(static_cast<Eigen::Index>(j)) = bank.column(subset[j]);
        // Normal equations solved explicitly: (F^H F) c = F^H r.
        const CMatrix<double> gram = fs.adjoint() * fs;
        const CVector<double> rhs = fs.adjoint() * r;
        const CVector<double> coef = gram.fullPivLu().solve(rhs);
        return (r - fs * coef).squaredNorm();
    };

    IndexSet best;
    double best_res = std::numeric_limits<double>::infinity();
    if (l_true == 1) {
        for (int p : cand) {
            const double res = residual({p});
            if (res < best_res) {
                best_res = res;
                best = {p};
            }
        }
    } else {
        for (std::size_t i = 0; i < cand.size(); ++i)
            for (std::size_t j = i + 1; j < cand.size(); ++j) {
                const double res = residual({cand[i], cand[j]});
                if (res < best_res) {
                    best_res = res;
                    best = {cand[i], cand[j]};
                }
            }
    }
    return best;
}

std::string to_string(Method m)
{
    switch (m) {
    case Method::tsde:
        return "tsde";
    case Method::collocated:
        return "collocated";
    case Method::fullband:
        return "fullband";
    }
    return "unknown";
}

Method method_from_string(const std::string& name)
{
    if (name == "tsde")
        return Method::tsde;
    if (name == "collocated")
        return Method::collocated;
    if (name == "fullband")
        return Method::fullband;
    throw std::invalid_argument("unknown method '" + name + "' (expected tsde, collocated or fullband)");
}

StopRule EstimatorSettings::detection_rule() const
{
    if (threshold_mode == ThresholdMode::noise_floor)
        return NoiseFloorStop{noise_margin, gamma_th};
    return ThresholdStop{gamma_th};
}

void EstimatorSettings::validate() const
{
    if (!(gamma_th > 0.0 && gamma_th < 1.0))
        throw std::invalid_argument("estimator: gamma_th must lie in (0, 1)");
    if (!(noise_margin > 0.0))
        throw std::invalid_argument("estimator: noise_margin must be positive");
}

void SweepConfig::validate() const
{
    system.require_partial_band();
    scenario.validate(system);
    estimator.validate();
    if (trials < 1)
        throw std::invalid_argument("sweep: trials must be >= 1");
    if (snr_db.empty())
        throw std::invalid_argument("sweep: snr grid is empty");
    for (double s : snr_db)
        if (std::isnan(s) || (std::isinf(s) && s < 0))
            throw std::invalid_argument("sweep: snr values must be finite or +inf");
    if (methods.empty())
        throw std::invalid_argument("sweep: no methods selected");
    if (scenario.delay_offset_min_s < system.sample_period_s() * (1.0 - 1e-9))
        throw std::invalid_argument("sweep: delay_offset_min_s must be at least one sample period "
                                    "so that NMSE is defined");
}

const ReportRow& MonteCarloReport::row(Method m, double snr_db) const
{
    for (const auto& r : rows)
        if (r.method == m && r.snr_db == snr_db)
            return r;
    throw std::out_of_range("MonteCarloReport: no row for " + to_string(m) + " at " + std::to_string(snr_db) + " dB");
}

std::string MonteCarloReport::to_csv() const
{
    std::string out = "method,snr_db,trials,pd,nmse\n";
    for (const auto& r : rows)
        out += fmt::format("{},{:.2f},{},{:.6f},{:.12f}\n", to_string(r.method), r.snr_db, r.trials, r.pd, r.nmse);
    return out;
}

namespace {

struct TrialResult {
    int l_hat = 0;
    bool detection_ok = false;
    bool detection_failed = false;
    bool nmse_valid = false;
    double nmse = 0.0;
    bool stage1_miss = false;
    double seconds = 0.0;
};

struct WorkerState {
    BankCache<double> partial;
    BankCache<double> full;
};

DelayEstimate estimate_once(Method method, SimulatedUplink& link, const SystemConfig& cfg, const StopRule& stop,
                            const std::optional<StopRule>& coarse_stop, const EstimatorOptions& opts, WorkerState& ws,
                            std::optional<SearchRegion>* region_out)
{
    switch (method) {
    case Method::tsde: {
        auto res = coarse_stop ? run_tsde<double>(link, cfg, *coarse_stop, stop, ws.partial, opts)
                               : run_tsde<double>(link, cfg, stop, ws.partial, opts);
        if (region_out)
            *region_out = res.region;
        return res.final_estimate();
    }
    case Method::collocated:
        return successive_estimate(link(1), ws.partial.get(1), stop, cfg, std::nullopt, opts);
    case Method::fullband: {
        const SystemConfig fb = full_band(cfg);
        return successive_estimate(link(1), ws.full.get(1), stop, fb, std::nullopt, opts);
    }
    }
    throw std::logic_error("estimate_once: unknown method");
}

TrialResult run_trial(const SweepConfig& sc, Method method, std::size_t snr_index, int trial, WorkerState& ws)
{
    const auto start = std::chrono::steady_clock::now();
    TrialResult out;
    const double snr = sc.snr_db[snr_index];
    const std::optional<double> snr_opt = std::isinf(snr) ? std::nullopt : std::optional<double>(snr);
    const SystemConfig link_cfg = method == Method::fullband ? full_band(sc.system) : sc.system;
    const auto method_tag = static_cast<std::uint64_t>(method);
    const auto trial_tag = static_cast<std::uint64_t>(trial);

    // Same channel for every method and SNR point of a given trial.
    Rng channel_rng(derive_seed(sc.master_seed, {kChannelStream, trial_tag}));
    const MultipathChannel channel = generate_channel(sc.scenario, channel_rng, sc.system);
    const int l_true = channel.path_count();
    const EstimatorOptions opts = sc.estimator.options();

    try {
        Rng rng(derive_seed(sc.master_seed, {method_tag, snr_index, trial_tag, kDetectionRun}));
        SimulatedUplink link(link_cfg, channel, snr_opt, sc.symbols, rng);
        const auto est = estimate_once(method, link, sc.system, sc.estimator.detection_rule(), std::nullopt, opts, ws,
                                           nullptr);
        out.l_hat = est.l_hat;
        out.detection_failed = est.cap_reached;
        out.detection_ok = !est.cap_reached && est.l_hat == l_true;
    } catch (const std::exception&) {
        out.detection_failed = true;
    }

    try {
        Rng rng(derive_seed(sc.master_seed, {method_tag, snr_index, trial_tag, kNmseRun}));
        SimulatedUplink link(link_cfg, channel, snr_opt, sc.symbols, rng);
        std::optional<SearchRegion> region;
        std::optional<StopRule> coarse;
        if (sc.estimator.coarse_stop == CoarseStop::detection)
            coarse = sc.estimator.detection_rule();
        const auto est = estimate_once(method, link, sc.system, FixedCountStop{l_true}, coarse, opts, ws, &region);
        if (!est.cap_reached) {
            out.nmse = nmse(channel.sorted_delays(), est.delays_s);
            out.nmse_valid = true;
        }
        if (region) {
            const double ts = sc.system.sample_period_s();
            for (double tau : channel.sorted_delays())
                if (!region->contains(static_cast<int>(std::lround(tau / ts))))
                    out.stage1_miss = true;
        }
    } catch (const std::exception&) {
        out.nmse_valid = false;
    }

    out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

} // namespace

MonteCarloReport run_sweep(const SweepConfig& sc, int threads)
{
    sc.validate();
    const std::size_t n_snr = sc.snr_db.size();
    const std::size_t n_trials = static_cast<std::size_t>(sc.trials);
    const std::size_t per_method = n_snr * n_trials;
    const std::size_t total = sc.methods.size() * per_method;
    std::vector<TrialResult> results(total);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        WorkerState ws{BankCache<double>(sc.system), BankCache<double>(full_band(sc.system))};
        for (std::size_t i = next.fetch_add(1); i < total; i = next.fetch_add(1)) {
            const std::size_t m = i / per_method;
            const std::size_t s = (i % per_method) / n_trials;
            const int t = static_cast<int>(i % n_trials);
            results[i] = run_trial(sc, sc.methods[m], s, t, ws);
        }
    };

    const int n_threads = std::max(1, threads);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (int i = 0; i < n_threads; ++i)
            pool.emplace_back(worker);
    }

    MonteCarloReport report;
    for (std::size_t m = 0; m < sc.methods.size(); ++m) {
        for (std::size_t s = 0; s < n_snr; ++s) {
            ReportRow row;
            row.method = sc.methods[m];
            row.snr_db = sc.snr_db[s];
            row.trials = sc.trials;
            double hits = 0, l_sum = 0, nmse_sum = 0, nmse_sq = 0;
            int valid = 0;
            for (std::size_t t = 0; t < n_trials; ++t) {
                const auto& r = results[m * per_method + s * n_trials + t];
                hits += r.detection_ok ? 1 : 0;
                l_sum += r.l_hat;
                row.detection_failures += r.detection_failed ? 1 : 0;
                row.stage1_bin_misses += r.stage1_miss ? 1 : 0;
                row.runtime_s += r.seconds;
                if (r.nmse_valid) {
                    nmse_sum += r.nmse;
                    nmse_sq += r.nmse * r.nmse;
                    ++valid;
                } else {
                    ++row.nmse_excluded;
                }
            }
            const double n = static_cast<double>(n_trials);
            row.pd = hits / n;
            row.pd_std_error = std::sqrt(row.pd * (1.0 - row.pd) / n);
            row.mean_l_hat = l_sum / n;
            if (valid > 0) {
                row.nmse = nmse_sum / valid;
                const double var = valid > 1 ? std::max(0.0, (nmse_sq - valid * row.nmse * row.nmse) / (valid - 1)) : 0.0;
                row.nmse_std_error = std::sqrt(var / valid);
            } else {
                row.nmse = std::numeric_limits<double>::quiet_NaN();
            }
            report.rows.push_back(row);
        }
    }
    return report;
}

} // namespace isac
