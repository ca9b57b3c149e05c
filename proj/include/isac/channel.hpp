#pragma once

// Multipath frequency-selective channel, additive noise on the used
// subcarriers and randomized scenario draws for Monte Carlo runs.

#include "isac/dsp.hpp"
#include "isac/types.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac {

struct PathTap {
    std::complex<double> gain;
    double delay_s = 0.0;
};

struct MultipathChannel {
    std::vector<PathTap> paths;

    int path_count() const { return static_cast<int>(paths.size()); }

    double min_delay_s() const
    {
        return std::min_element(paths.begin(), paths.end(), by_delay)->delay_s;
    }
    double max_delay_s() const
    {
        return std::max_element(paths.begin(), paths.end(), by_delay)->delay_s;
    }
    double delay_spread_s() const { return max_delay_s() - min_delay_s(); }

    /// Delays in ascending order.
    std::vector<double> sorted_delays() const
    {
        std::vector<double> d;
        d.reserve(paths.size());
        for (const auto& p : paths)
            d.push_back(p.delay_s);
        std::sort(d.begin(), d.end());
        return d;
    }

    void validate(const SystemConfig& cfg) const
    {
        if (paths.empty())
            throw std::invalid_argument("MultipathChannel: at least one path required");
        for (const auto& p : paths) {
            if (!(p.delay_s >= 0.0) || p.delay_s >= cfg.cp_duration_s())
                throw std::invalid_argument("MultipathChannel: delay " + std::to_string(p.delay_s) +
                                            " s outside [0, T_cp)");
        }
        const auto d = sorted_delays();
        for (std::size_t i = 1; i < d.size(); ++i)
            if (d[i] == d[i - 1])
                throw std::invalid_argument("MultipathChannel: duplicate path delay");
    }

private:
    static bool by_delay(const PathTap& a, const PathTap& b) { return a.delay_s < b.delay_s; }
};

/**
 * Channel sampled on the used subcarriers, H[k] = sum_l a_l exp(-j 2 pi df eta k tau_l)
 * for k < length. `length` defaults to K1; eta = 1 with length = K gives the
 * full-band response.
 */
template <typename Scalar = double>
CVector<Scalar> frequency_response(const MultipathChannel& ch, int eta, const SystemConfig& cfg,
                                   std::optional<int> length = std::nullopt)
{
    ch.validate(cfg);
    const int n = length.value_or(cfg.k1);
    if (n < 1 || static_cast<long long>(eta) * (n - 1) >= cfg.k)
        throw std::invalid_argument("frequency_response: subcarrier index exceeds k");
    if (eta < 1)
        throw std::invalid_argument("frequency_response: eta must be >= 1");
    CVector<Scalar> h = CVector<Scalar>::Zero(n);
    for (const auto& p : ch.paths) {
        // Cycles per used subcarrier, reduced mod 1 to keep the phase accurate.
        const double step = cfg.delta_f_hz * eta * p.delay_s;
        for (int k = 0; k < n; ++k) {
            const double cycles = step * k - std::floor(step * k);
            h[k] += Complex<Scalar>(p.gain * std::polar(1.0, -2.0 * kPi<double> * cycles));
        }
    }
    return h;
}

/// Noise variance giving `snr_db` relative to the mean power of `used`.
template <typename Derived>
double noise_variance(const Eigen::MatrixBase<Derived>& used, double snr_db)
{
    const double signal_power = static_cast<double>(used.squaredNorm()) / static_cast<double>(used.rows());
    return signal_power * std::pow(10.0, -snr_db / 10.0);
}

/// Circularly-symmetric complex Gaussian samples with the given variance.
template <typename Scalar, typename Rng>
CVector<Scalar> complex_gaussian(Eigen::Index n, double variance, Rng& rng)
{
    std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
    CVector<Scalar> w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double re = normal(rng);
        const double im = normal(rng);
        w[i] = Complex<Scalar>(Scalar(re), Scalar(im));
    }
    return w;
}

/**
 * Y[k] = H[k] X[k] + w[k] on the used subcarriers. The noise is referenced
 * to the mean power of `used`; no noise when `snr_db` is empty.
 */
template <typename Derived, typename Rng>
CVector<detail::ComplexValue<Derived>> apply_channel_awgn(const Eigen::MatrixBase<Derived>& used,
                                                          const MultipathChannel& ch, int eta,
                                                          std::optional<double> snr_db, Rng& rng,
                                                          const SystemConfig& cfg)
{
    using Scalar = detail::ComplexValue<Derived>;
    const auto h = frequency_response<Scalar>(ch, eta, cfg, static_cast<int>(used.rows()));
    CVector<Scalar> y = h.cwiseProduct(used);
    if (snr_db)
        y += complex_gaussian<Scalar>(y.rows(), noise_variance(used, *snr_db), rng);
    return y;
}

/**
 * Time-domain multipath applied to one CP-prefixed symbol (length K + n_cp).
 * Only integer-sample delays are representable here.
 */
template <typename Derived>
CVector<detail::ComplexValue<Derived>> apply_channel_time(const Eigen::MatrixBase<Derived>& tx,
                                                          const MultipathChannel& ch, const SystemConfig& cfg)
{
    using Scalar = detail::ComplexValue<Derived>;
    ch.validate(cfg);
    detail::require_length(tx, cfg.k + cfg.n_cp, "apply_channel_time");
    CVector<Scalar> y = CVector<Scalar>::Zero(tx.rows());
    for (const auto& p : ch.paths) {
        const double samples = p.delay_s / cfg.sample_period_s();
        const auto d = static_cast<Eigen::Index>(std::llround(samples));
        if (std::abs(samples - static_cast<double>(d)) > 1e-9)
            throw std::invalid_argument("apply_channel_time: delay is not an integer number of samples");
        const Complex<Scalar> g(p.gain);
        y.tail(y.rows() - d) += g * tx.head(tx.rows() - d);
    }
    return y;
}

/// Randomized multipath draw for one Monte Carlo trial.
struct ScenarioSpec {
    int l = 2;
    double delay_spread_max_s = 0.0;
    /// First-arrival window; the delays occupy [offset, offset + delay_spread_max_s].
    double delay_offset_min_s = 0.0;
    double delay_offset_max_s = 0.0;
    /// Offset restricted to multiples of this step when > 0.
    double delay_offset_step_s = 0.0;
    bool on_grid = true;
    double min_separation_s = 0.0;
    double gain_magnitude_min = 0.5;
    double gain_magnitude_max = 1.0;
    std::optional<double> snr_db;
    std::uint64_t seed = 0;

    void validate(const SystemConfig& cfg) const
    {
        if (l < 1)
            throw std::invalid_argument("ScenarioSpec: l must be >= 1");
        if (!(delay_spread_max_s >= 0.0) || !(min_separation_s >= 0.0))
            throw std::invalid_argument("ScenarioSpec: delay spread and separation must be non-negative");
        if (!(delay_offset_min_s >= 0.0) || delay_offset_max_s < delay_offset_min_s)
            throw std::invalid_argument("ScenarioSpec: need 0 <= delay_offset_min_s <= delay_offset_max_s");
        if (delay_offset_step_s < 0.0)
            throw std::invalid_argument("ScenarioSpec: delay_offset_step_s must be non-negative");
        if (delay_offset_max_s + delay_spread_max_s >= cfg.cp_duration_s())
            throw std::invalid_argument("ScenarioSpec: delays may reach T_cp (offset + spread >= T_cp)");
        if (!(gain_magnitude_min > 0.0) || gain_magnitude_max < gain_magnitude_min)
            throw std::invalid_argument("ScenarioSpec: need 0 < gain_magnitude_min <= gain_magnitude_max");
        if (min_separation_s * (l - 1) > delay_spread_max_s)
            throw std::invalid_argument("ScenarioSpec: cannot place " + std::to_string(l) +
                                        " delays with the requested separation inside the spread");
    }

    friend bool operator==(const ScenarioSpec&, const ScenarioSpec&) = default;
};

/**
 * Draws L delays uniformly in the delay window by rejection sampling on the
 * pairwise separation, optionally snapped to the sampling grid. Gains have
 * uniform magnitude in [gain_magnitude_min, gain_magnitude_max] and uniform phase.
 */
template <typename Rng>
MultipathChannel generate_channel(const ScenarioSpec& spec, Rng& rng, const SystemConfig& cfg)
{
    spec.validate(cfg);
    const double ts = cfg.sample_period_s();
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    double offset = spec.delay_offset_min_s;
    if (spec.delay_offset_step_s > 0.0) {
        const auto lo = static_cast<long long>(std::ceil(spec.delay_offset_min_s / spec.delay_offset_step_s - 1e-9));
        const auto hi = static_cast<long long>(std::floor(spec.delay_offset_max_s / spec.delay_offset_step_s + 1e-9));
        if (hi < lo)
            throw std::invalid_argument("ScenarioSpec: no offset step inside the offset window");
        std::uniform_int_distribution<long long> pick(lo, hi);
        offset = static_cast<double>(pick(rng)) * spec.delay_offset_step_s;
    } else {
        offset += unit(rng) * (spec.delay_offset_max_s - spec.delay_offset_min_s);
    }
    const double window_end = offset + spec.delay_spread_max_s;

    auto snap = [&](double tau) {
        if (!spec.on_grid)
            return tau;
        double n = std::round(tau / ts);
        if (n * ts > window_end + 1e-6 * ts)
            n -= 1.0;
        if (n * ts < offset - 1e-6 * ts)
            n += 1.0;
        return n * ts;
    };

    constexpr int kMaxAttempts = 100000;
    std::vector<double> delays;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        delays.clear();
        for (int i = 0; i < spec.l; ++i)
            delays.push_back(snap(offset + unit(rng) * spec.delay_spread_max_s));
        std::vector<double> sorted = delays;
        std::sort(sorted.begin(), sorted.end());
        bool ok = sorted.back() < cfg.cp_duration_s();
        for (std::size_t i = 1; ok && i < sorted.size(); ++i) {
            const double gap = sorted[i] - sorted[i - 1];
            ok = gap > 0.0 && gap >= spec.min_separation_s - 1e-9 * ts;
        }
        if (!ok)
            continue;

        MultipathChannel ch;
        for (double tau : delays) {
            const double magnitude =
                spec.gain_magnitude_min + unit(rng) * (spec.gain_magnitude_max - spec.gain_magnitude_min);
            const double phase = 2.0 * kPi<double> * unit(rng);
            ch.paths.push_back({std::polar(magnitude, phase), tau});
        }
        return ch;
    }
    throw std::invalid_argument("generate_channel: could not place " + std::to_string(spec.l) +
                                " delays with the requested separation");
}

} // namespace isac
