#pragma once

// Transforms, the Dirichlet ambiguity kernel and the resolution/ambiguity
// closed forms of a decimated subcarrier allocation.

#include "isac/types.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <stdexcept>
#include <string>

namespace isac {

namespace detail {

template <typename Derived>
using ComplexValue = typename Derived::Scalar::value_type;

template <typename Derived>
void require_length(const Eigen::MatrixBase<Derived>& v, Eigen::Index n, const char* what)
{
    if (v.cols() != 1 || v.rows() != n)
        throw std::invalid_argument(std::string(what) + ": expected a length-" + std::to_string(n) +
                                    " vector, got " + std::to_string(v.rows()) + "x" +
                                    std::to_string(v.cols()));
}

} // namespace detail

/// Unnormalised forward DFT, X[k] = sum_n x[n] exp(-j 2 pi n k / n).
template <typename Derived>
CVector<detail::ComplexValue<Derived>> dft(const Eigen::MatrixBase<Derived>& v, Eigen::Index n)
{
    using Scalar = detail::ComplexValue<Derived>;
    detail::require_length(v, n, "dft");
    CVector<Scalar> in = v;
    if (n <= 1)
        return in; // kissfft does not handle a single point
    CVector<Scalar> out;
    Eigen::FFT<Scalar> fft;
    fft.fwd(out, in);
    return out;
}

/// Inverse DFT with the 1/n normalisation.
template <typename Derived>
CVector<detail::ComplexValue<Derived>> idft(const Eigen::MatrixBase<Derived>& v, Eigen::Index n)
{
    using Scalar = detail::ComplexValue<Derived>;
    detail::require_length(v, n, "idft");
    CVector<Scalar> in = v;
    if (n <= 1)
        return in;
    CVector<Scalar> out;
    Eigen::FFT<Scalar> fft;
    fft.inv(out, in);
    return out;
}

/**
 * Normalised Dirichlet kernel (1/n) sum_{k<n} exp(-j 2 pi x k).
 *
 * Period 1 in `x`. The argument is reduced to [-1/2, 1/2] first so the
 * grating positions (integer x) return exactly 1 instead of 0/0.
 */
template <typename Scalar>
Complex<Scalar> dirichlet_kernel(Scalar x, int n)
{
    const Scalar reduced = x - std::round(x);
    if (reduced == Scalar(0))
        return Complex<Scalar>(1);
    const Scalar magnitude = std::sin(kPi<Scalar> * n * reduced) / (n * std::sin(kPi<Scalar> * reduced));
    return std::polar(magnitude, -kPi<Scalar> * reduced * Scalar(n - 1));
}

/**
 * Matched-filter response G(delta_tau; eta) of a unit path offset by
 * `delta_tau_s` from the probed delay, for K1 subcarriers spaced eta apart.
 */
template <typename Scalar = double>
Complex<Scalar> dirichlet_gain(Scalar delta_tau_s, int eta, const SystemConfig& cfg)
{
    cfg.require_eta(eta);
    const Scalar x = Scalar(cfg.delta_f_hz) * Scalar(eta) * delta_tau_s;
    return dirichlet_kernel<Scalar>(x, cfg.k1);
}

/// Half main-lobe width of |G|: 1 / (delta_f K1 eta).
template <typename Scalar = double>
Scalar delay_resolution(int eta, const SystemConfig& cfg)
{
    cfg.require_eta(eta);
    return Scalar(1) / (Scalar(cfg.delta_f_hz) * Scalar(cfg.k1) * Scalar(eta));
}

/// Spacing of the grating lobes of |G|: 1 / (delta_f eta).
template <typename Scalar = double>
Scalar unambiguous_range(int eta, const SystemConfig& cfg)
{
    cfg.require_eta(eta);
    return Scalar(1) / (Scalar(cfg.delta_f_hz) * Scalar(eta));
}

} // namespace isac
