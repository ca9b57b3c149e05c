#pragma once

// Two-stage delay estimation: collocated coarse pass, delay-bin search region,
// decimation choice and a distributed refinement pass inside the region.

#include "isac/dsp.hpp"
#include "isac/estimator.hpp"
#include "isac/types.hpp"

#include <algorithm>
#include <concepts>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac {

/**
 * Coarse delay bins u_l = floor(p_l / eta_max) occupied after the first stage
 * and the index region they induce, union of [u eta_max, (u + 1) eta_max).
 */
struct SearchRegion {
    std::vector<int> bins;
    int bin_width = 1; ///< eta_max, in samples

    int l_prime() const { return static_cast<int>(bins.size()); }

    /// Region indices in [0, K).
    IndexSet indices() const
    {
        IndexSet out;
        out.reserve(bins.size() * static_cast<std::size_t>(bin_width));
        for (int u : bins)
            for (int p = u * bin_width; p < (u + 1) * bin_width; ++p)
                out.push_back(p);
        return out;
    }

    /// Region restricted to the filter-bank domain [0, n_cp).
    IndexSet clipped(int n_cp) const
    {
        IndexSet out = indices();
        out.erase(std::remove_if(out.begin(), out.end(), [n_cp](int p) { return p >= n_cp; }), out.end());
        return out;
    }

    bool contains(int p) const
    {
        return std::binary_search(bins.begin(), bins.end(), p / bin_width);
    }
};

struct DecimationChoice {
    int eta_star = 1;
    double delta_u_s = 0.0; ///< protection-region width
    int xi = 1;             ///< bins spanned from first to last occupied bin
};

/// Occupied coarse bins of a first-stage estimate.
inline SearchRegion bin_set(const DelayEstimate& est, const SystemConfig& cfg)
{
    cfg.require_partial_band();
    if (est.indices.empty())
        throw std::invalid_argument("bin_set: empty delay estimate");
    SearchRegion region;
    region.bin_width = cfg.eta_max();
    for (int p : est.indices) {
        if (p < 0)
            throw std::invalid_argument("bin_set: negative delay index");
        region.bins.push_back(p / region.bin_width);
    }
    std::sort(region.bins.begin(), region.bins.end());
    region.bins.erase(std::unique(region.bins.begin(), region.bins.end()), region.bins.end());
    return region;
}

/**
 * Largest decimation whose grating-lobe spacing 1/(df eta) still covers the
 * protection width xi / (df K1); floored to an integer and clamped to
 * [1, eta_max].
 */
inline DecimationChoice select_decimation(const SearchRegion& region, const SystemConfig& cfg)
{
    cfg.require_partial_band();
    if (region.bins.empty())
        throw std::invalid_argument("select_decimation: empty region");
    DecimationChoice c;
    c.xi = region.bins.back() + 1 - region.bins.front();
    c.delta_u_s = c.xi * delay_resolution<double>(1, cfg);
    c.eta_star = std::max(1, std::min(cfg.k1 / c.xi, cfg.eta_max()));
    return c;
}

/// One uplink transmission at a given decimation, returning the sensing snapshot.
template <typename Link, typename Scalar>
concept UplinkLink = requires(Link link, int eta) {
    { link(eta) } -> std::convertible_to<SensingSnapshot<Scalar>>;
};

struct TsdeResult {
    DelayEstimate stage1;
    SearchRegion region;
    DecimationChoice choice;
    std::optional<DelayEstimate> stage2;

    /// Refined estimate, or the coarse one when no refinement was possible.
    const DelayEstimate& final_estimate() const { return stage2 ? *stage2 : stage1; }
};

namespace detail {

template <typename Scalar, typename Link>
TsdeResult run_tsde_impl(Link&& link, const SystemConfig& cfg, const StopRule& coarse_stop,
                         const std::optional<StopRule>& fine_stop, BankCache<Scalar>& banks,
                         const EstimatorOptions& options)
{
    cfg.require_partial_band();
    if (!(banks.config() == cfg))
        throw std::invalid_argument("run_tsde: bank cache built for a different configuration");

    TsdeResult result;
    const SensingSnapshot<Scalar> coarse = link(1);
    result.stage1 = successive_estimate(coarse, banks.get(1), coarse_stop, cfg, std::nullopt, options);
    if (result.stage1.indices.empty())
        throw std::runtime_error("run_tsde: first stage returned no delays");

    result.region = bin_set(result.stage1, cfg);
    result.choice = select_decimation(result.region, cfg);
    const StopRule& refine = fine_stop ? *fine_stop : coarse_stop;
    if (result.choice.eta_star == 1) {
        // No finer decimation exists; a distinct second-stage rule is applied
        // to the coarse snapshot without another transmission.
        if (fine_stop)
            result.stage2 = successive_estimate(coarse, banks.get(1), refine, cfg, std::nullopt, options);
        return result;
    }

    const int eta = result.choice.eta_star;
    if (static_cast<long long>(eta) * (cfg.k1 - 1) >= cfg.k)
        throw std::logic_error("run_tsde: eta* overflows the subcarrier grid");

    const SensingSnapshot<Scalar> fine = link(eta);
    result.stage2 = successive_estimate(fine, banks.get(eta), refine, cfg, result.region.clipped(cfg.n_cp), options);
    return result;
}

} // namespace detail

/**
 * Runs both stages over `link` with the same stop rule. The channel behind the
 * link must stay fixed across the two calls. With eta* = 1 no second
 * transmission is made.
 */
template <typename Scalar = double, typename Link>
    requires UplinkLink<Link, Scalar>
TsdeResult run_tsde(Link&& link, const SystemConfig& cfg, const StopRule& stop, BankCache<Scalar>& banks,
                    const EstimatorOptions& options = {})
{
    return detail::run_tsde_impl<Scalar>(std::forward<Link>(link), cfg, stop, std::nullopt, banks, options);
}

/// Bin detection with `coarse_stop`, refinement with `fine_stop` (e.g. a known path count).
template <typename Scalar = double, typename Link>
    requires UplinkLink<Link, Scalar>
TsdeResult run_tsde(Link&& link, const SystemConfig& cfg, const StopRule& coarse_stop, const StopRule& fine_stop,
                    BankCache<Scalar>& banks, const EstimatorOptions& options = {})
{
    return detail::run_tsde_impl<Scalar>(std::forward<Link>(link), cfg, coarse_stop, fine_stop, banks, options);
}

template <typename Scalar = double, typename Link>
    requires UplinkLink<Link, Scalar>
TsdeResult run_tsde(Link&& link, const SystemConfig& cfg, const StopRule& stop, const EstimatorOptions& options = {})
{
    BankCache<Scalar> banks(cfg);
    return run_tsde<Scalar>(std::forward<Link>(link), cfg, stop, banks, options);
}

} // namespace isac
