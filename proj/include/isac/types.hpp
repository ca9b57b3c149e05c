#pragma once

#include <Eigen/Core>

#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace isac {

template <typename Scalar>
using Complex = std::complex<Scalar>;

/// Dense complex column vector; time samples, subcarrier values or snapshots.
template <typename Scalar>
using CVector = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, 1>;

/// Dense complex matrix (matched-filter banks, least-squares subproblems).
template <typename Scalar>
using CMatrix = Eigen::Matrix<std::complex<Scalar>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using RVector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
inline constexpr Scalar kPi = Scalar(3.141592653589793238462643383279502884L);

/**
 * OFDM numerology of the uplink.
 *
 * `k1 == k` is accepted so that the full-band baseline can share the same
 * machinery; two-stage estimation additionally requires `eta_max() >= 2`.
 */
struct SystemConfig {
    double delta_f_hz = 120e3;
    int k = 1024;
    int k1 = 32;
    int n_cp = 128;

    double bandwidth_hz() const { return delta_f_hz * k; }
    double allocated_bandwidth_hz() const { return delta_f_hz * k1; }
    double sample_period_s() const { return 1.0 / bandwidth_hz(); }
    double cp_duration_s() const { return n_cp * sample_period_s(); }
    int eta_max() const { return k / k1; }
    bool is_partial_band() const { return k1 < k; }

    void validate() const
    {
        if (!(delta_f_hz > 0.0))
            throw std::invalid_argument("SystemConfig: delta_f_hz must be positive");
        if (k1 < 2 || k1 > k)
            throw std::invalid_argument("SystemConfig: need 2 <= k1 <= k, got k1=" + std::to_string(k1) +
                                        ", k=" + std::to_string(k));
        if (k % k1 != 0)
            throw std::invalid_argument("SystemConfig: k1 must divide k (k=" + std::to_string(k) +
                                        ", k1=" + std::to_string(k1) + ")");
        if (n_cp <= 0 || n_cp >= k)
            throw std::invalid_argument("SystemConfig: need 0 < n_cp < k, got n_cp=" + std::to_string(n_cp));
    }

    /// Throws unless the allocation leaves room for decimation (k1 < k).
    void require_partial_band() const
    {
        validate();
        if (eta_max() < 2)
            throw std::invalid_argument("SystemConfig: decimation requires k1 < k (eta_max >= 2)");
    }

    void require_eta(int eta) const
    {
        if (eta < 1 || eta > eta_max())
            throw std::invalid_argument("decimation factor " + std::to_string(eta) + " outside [1, " +
                                        std::to_string(eta_max()) + "]");
    }

    friend bool operator==(const SystemConfig&, const SystemConfig&) = default;
};

/// Same numerology with every subcarrier allocated (K1 = K).
inline SystemConfig full_band(SystemConfig cfg)
{
    cfg.k1 = cfg.k;
    return cfg;
}

} // namespace isac
