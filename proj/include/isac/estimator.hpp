#pragma once

// Matched-filter bank over the CP delay grid and greedy successive delay
// estimation (peak pick, single-column deflation, residual power test).

#include "isac/dsp.hpp"
#include "isac/types.hpp"

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace isac {

/// Sorted, duplicate-free list of delay-grid indices (units of T_s).
using IndexSet = std::vector<int>;

/**
 * Filters f_p(eta)[k] = exp(-j 2 pi k p eta / K), k < K1, one column per
 * candidate delay p T_s with 0 <= p < n_cp.
 */
template <typename Scalar = double>
struct MatchedFilterBank {
    int eta = 1;
    int k1 = 0;
    CMatrix<Scalar> columns;

    int size() const { return static_cast<int>(columns.cols()); }
    auto column(int p) const { return columns.col(p); }
};

template <typename Scalar = double>
MatchedFilterBank<Scalar> build_bank(int eta, const SystemConfig& cfg)
{
    cfg.validate();
    cfg.require_eta(eta);
    MatchedFilterBank<Scalar> bank{eta, cfg.k1, CMatrix<Scalar>(cfg.k1, cfg.n_cp)};
    for (int p = 0; p < cfg.n_cp; ++p) {
        for (int k = 0; k < cfg.k1; ++k) {
            // Integer phase reduction keeps every column exact to rounding.
            const long long m = (static_cast<long long>(k) * p * eta) % cfg.k;
            bank.columns(k, p) = std::polar(Scalar(1), -Scalar(2) * kPi<Scalar> * Scalar(m) / Scalar(cfg.k));
        }
    }
    return bank;
}

/// Banks keyed by decimation factor for one configuration; not thread-safe.
template <typename Scalar = double>
class BankCache {
public:
    explicit BankCache(SystemConfig cfg) : cfg_(cfg) {}

    const MatchedFilterBank<Scalar>& get(int eta)
    {
        auto it = banks_.find(eta);
        if (it == banks_.end())
            it = banks_.emplace(eta, build_bank<Scalar>(eta, cfg_)).first;
        return it->second;
    }

    const SystemConfig& config() const { return cfg_; }

private:
    SystemConfig cfg_;
    std::map<int, MatchedFilterBank<Scalar>> banks_;
};

/// Received sensing vector r plus the expected noise energy E||w||^2 it carries.
template <typename Scalar = double>
struct SensingSnapshot {
    CVector<Scalar> r;
    int eta = 1;
    double noise_energy = 0.0;
};

/// Stop once the residual power ratio drops to gamma_th.
struct ThresholdStop {
    double gamma_th = 0.01;
};

/// Stop after exactly `count` paths (known path count).
struct FixedCountStop {
    int count = 1;
};

/**
 * Threshold derived per snapshot from its noise energy:
 * gamma_th = margin * E||w||^2 / ||r||^2, clamped into [floor, 1).
 */
struct NoiseFloorStop {
    double margin = 1.5;
    double floor = 1e-6;
};

using StopRule = std::variant<ThresholdStop, FixedCountStop, NoiseFloorStop>;

inline void validate_stop_rule(const StopRule& stop)
{
    if (const auto* t = std::get_if<ThresholdStop>(&stop)) {
        if (!(t->gamma_th > 0.0 && t->gamma_th < 1.0))
            throw std::invalid_argument("ThresholdStop: gamma_th must lie in (0, 1)");
    } else if (const auto* f = std::get_if<FixedCountStop>(&stop)) {
        if (f->count < 1)
            throw std::invalid_argument("FixedCountStop: count must be >= 1");
    } else if (const auto* n = std::get_if<NoiseFloorStop>(&stop)) {
        if (!(n->margin > 0.0) || !(n->floor > 0.0 && n->floor < 1.0))
            throw std::invalid_argument("NoiseFloorStop: need margin > 0 and floor in (0, 1)");
    }
}

struct EstimatorOptions {
    /// Re-fit all selected columns jointly instead of deflating one column at a time.
    bool joint_refit = false;
    /// Record |Gamma| of the undeflated snapshot over the searched indices.
    bool keep_spectrum = false;
};

struct DelayEstimate {
    IndexSet indices; ///< in selection order
    std::vector<double> delays_s;
    int l_hat = 0;
    double residual_ratio = 1.0;
    /// Iteration cap hit before the stop rule was satisfied.
    bool cap_reached = false;
    std::optional<double> gamma_th;
    IndexSet spectrum_indices;
    std::vector<double> spectrum_magnitude;

    IndexSet sorted_indices() const
    {
        IndexSet s = indices;
        std::sort(s.begin(), s.end());
        return s;
    }
};

/// MF outputs Gamma(tau_p; eta) over a set of delay indices.
template <typename Scalar = double>
struct MfSpectrum {
    IndexSet indices;
    CVector<Scalar> values;
};

namespace detail {

inline IndexSet full_domain(int n)
{
    IndexSet d(static_cast<std::size_t>(n));
    for (int p = 0; p < n; ++p)
        d[static_cast<std::size_t>(p)] = p;
    return d;
}

inline IndexSet checked_domain(const std::optional<IndexSet>& region, int bank_size)
{
    if (!region)
        return full_domain(bank_size);
    if (region->empty())
        throw std::invalid_argument("search region is empty");
    IndexSet d = *region;
    std::sort(d.begin(), d.end());
    d.erase(std::unique(d.begin(), d.end()), d.end());
    if (d.front() < 0 || d.back() >= bank_size)
        throw std::invalid_argument("search region index outside the filter bank [0, " +
                                    std::to_string(bank_size) + ")");
    return d;
}

} // namespace detail

/// Gamma(tau_p; eta) = f_p^H r / ||f_p||^2 for p in `region` (all p when absent).
template <typename Derived, typename Scalar>
MfSpectrum<Scalar> mf_spectrum(const Eigen::MatrixBase<Derived>& r, const MatchedFilterBank<Scalar>& bank,
                               const std::optional<IndexSet>& region = std::nullopt)
{
    detail::require_length(r, bank.k1, "mf_spectrum");
    MfSpectrum<Scalar> out{detail::checked_domain(region, bank.size()), {}};
    out.values.resize(static_cast<Eigen::Index>(out.indices.size()));
    const CVector<Scalar> rv = r;
    for (std::size_t i = 0; i < out.indices.size(); ++i)
        out.values[static_cast<Eigen::Index>(i)] = bank.column(out.indices[i]).dot(rv) / Scalar(bank.k1);
    return out;
}

/**
 * Greedy successive delay estimation.
 *
 * Each pass picks the unselected index with the largest |f_p^H r| inside the
 * region (lowest index on exact ties), removes that component from the residual
 * and updates gamma = ||r||^2 / ||r_0||^2. Stops on the rule in `stop` or after
 * min(K1, |region|) picks, whichever comes first.
 */
template <typename Scalar>
DelayEstimate successive_estimate(const SensingSnapshot<Scalar>& snapshot, const MatchedFilterBank<Scalar>& bank,
                                  const StopRule& stop, const SystemConfig& cfg,
                                  const std::optional<IndexSet>& region = std::nullopt,
                                  const EstimatorOptions& options = {})
{
    validate_stop_rule(stop);
    detail::require_length(snapshot.r, bank.k1, "successive_estimate");
    const IndexSet domain = detail::checked_domain(region, bank.size());

    const CVector<Scalar> initial = snapshot.r;
    const double phi = static_cast<double>(initial.squaredNorm());
    if (!(phi > 0.0))
        throw std::invalid_argument("successive_estimate: zero input vector");

    DelayEstimate est;
    if (const auto* t = std::get_if<ThresholdStop>(&stop)) {
        est.gamma_th = t->gamma_th;
    } else if (const auto* n = std::get_if<NoiseFloorStop>(&stop)) {
        est.gamma_th = std::clamp(n->margin * snapshot.noise_energy / phi, n->floor, 1.0 - 1e-12);
    }
    const auto* fixed = std::get_if<FixedCountStop>(&stop);

    const int cap = std::min(bank.k1, static_cast<int>(domain.size()));
    std::vector<char> taken(domain.size(), 0);
    CVector<Scalar> residual = initial;
    double gamma = 1.0;

    if (options.keep_spectrum) {
        est.spectrum_indices = domain;
        est.spectrum_magnitude.reserve(domain.size());
        for (int p : domain)
            est.spectrum_magnitude.push_back(static_cast<double>(std::abs(bank.column(p).dot(initial))) / bank.k1);
    }

    bool satisfied = false;
    while (est.l_hat < cap) {
        std::size_t best = domain.size();
        Scalar best_mag = Scalar(-1);
        for (std::size_t i = 0; i < domain.size(); ++i) {
            if (taken[i])
                continue;
            const Scalar mag = std::abs(bank.column(domain[i]).dot(residual));
            if (mag > best_mag) {
                best_mag = mag;
                best = i;
            }
        }
        taken[best] = 1;
        const int p = domain[best];
        est.indices.push_back(p);
        ++est.l_hat;

        if (options.joint_refit) {
            CMatrix<Scalar> selected(bank.k1, est.l_hat);
            for (int j = 0; j < est.l_hat; ++j)
                selected.col(j) = bank.column(est.indices[static_cast<std::size_t>(j)]);
            const CVector<Scalar> coef = selected.colPivHouseholderQr().solve(initial);
            residual = initial - selected * coef;
        } else {
            const auto f = bank.column(p);
            const Complex<Scalar> proj = f.dot(residual) / f.squaredNorm();
            residual -= proj * f;
        }
        gamma = static_cast<double>(residual.squaredNorm()) / phi;

        satisfied = fixed ? est.l_hat >= fixed->count : gamma <= *est.gamma_th;
        if (satisfied)
            break;
    }
    est.cap_reached = !satisfied;
    est.residual_ratio = std::clamp(gamma, 0.0, 1.0);
    est.delays_s.reserve(est.indices.size());
    for (int p : est.indices)
        est.delays_s.push_back(p * cfg.sample_period_s());
    return est;
}

/// Convenience overload for a bare snapshot vector with no noise information.
template <typename Derived, typename Scalar>
DelayEstimate successive_estimate(const Eigen::MatrixBase<Derived>& r, const MatchedFilterBank<Scalar>& bank,
                                  const StopRule& stop, const SystemConfig& cfg,
                                  const std::optional<IndexSet>& region = std::nullopt,
                                  const EstimatorOptions& options = {})
{
    return successive_estimate(SensingSnapshot<Scalar>{r, bank.eta, 0.0}, bank, stop, cfg, region, options);
}

} // namespace isac
