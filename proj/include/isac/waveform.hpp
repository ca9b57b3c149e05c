#pragma once

// DFT-s-OFDM transmit chain (spread, map, IDFT, cyclic prefix) and the
// receiver front end (CP removal, DFT, demap, symbol removal).

#include "isac/dsp.hpp"
#include "isac/types.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace isac {

/// Sensing-UE subcarrier allocation: indices eta * k1 for k1 = 0..K1-1.
struct SubcarrierMap {
    int eta = 1;
    int k1 = 0;

    static SubcarrierMap for_config(int eta, const SystemConfig& cfg) { return {eta, cfg.k1}; }

    bool localized() const { return eta == 1; }

    void validate(const SystemConfig& cfg) const
    {
        if (k1 != cfg.k1)
            throw std::invalid_argument("SubcarrierMap: k1=" + std::to_string(k1) + " does not match config k1=" +
                                        std::to_string(cfg.k1));
        if (eta < 1 || eta > cfg.eta_max())
            throw std::invalid_argument("SubcarrierMap: eta=" + std::to_string(eta) + " outside [1, " +
                                        std::to_string(cfg.eta_max()) + "]");
        if (static_cast<long long>(eta) * (k1 - 1) >= cfg.k)
            throw std::invalid_argument("SubcarrierMap: index eta*(k1-1) overflows k");
    }

    std::vector<int> indices() const
    {
        std::vector<int> out(static_cast<std::size_t>(k1));
        for (int i = 0; i < k1; ++i)
            out[static_cast<std::size_t>(i)] = eta * i;
        return out;
    }
};

enum class SymbolKind { qpsk, zadoff_chu };

/// K1 information-bearing symbols of unit average power.
template <typename Scalar>
struct SymbolBlock {
    CVector<Scalar> x;
};

template <typename Scalar, typename Rng>
SymbolBlock<Scalar> qpsk_block(int k1, Rng& rng)
{
    const Scalar a = Scalar(1) / std::sqrt(Scalar(2));
    SymbolBlock<Scalar> block{CVector<Scalar>(k1)};
    for (int n = 0; n < k1; ++n) {
        const auto bits = static_cast<std::uint64_t>(rng());
        block.x[n] = Complex<Scalar>((bits & 1u) ? -a : a, (bits & 2u) ? -a : a);
    }
    return block;
}

/// Zadoff-Chu sequence; constant modulus in both time and frequency.
template <typename Scalar>
SymbolBlock<Scalar> zadoff_chu_block(int k1, int root = 1)
{
    SymbolBlock<Scalar> block{CVector<Scalar>(k1)};
    const long long parity = k1 % 2;
    for (int n = 0; n < k1; ++n) {
        // Reduce the quadratic phase modulo 2*k1 before converting to Scalar.
        const long long q = (static_cast<long long>(root) * n * (n + parity)) % (2LL * k1);
        block.x[n] = std::polar(Scalar(1), -kPi<Scalar> * Scalar(q) / Scalar(k1));
    }
    return block;
}

template <typename Scalar, typename Rng>
SymbolBlock<Scalar> make_symbol_block(SymbolKind kind, int k1, Rng& rng)
{
    if (kind == SymbolKind::zadoff_chu)
        return zadoff_chu_block<Scalar>(k1);
    return qpsk_block<Scalar>(k1, rng);
}

/// K1-point DFT spreading of a symbol block.
template <typename Scalar>
CVector<Scalar> spread(const SymbolBlock<Scalar>& block, const SystemConfig& cfg)
{
    return dft(block.x, cfg.k1);
}

template <typename Derived>
CVector<detail::ComplexValue<Derived>> map_subcarriers(const Eigen::MatrixBase<Derived>& spread_values,
                                                       const SubcarrierMap& map, const SystemConfig& cfg)
{
    map.validate(cfg);
    detail::require_length(spread_values, cfg.k1, "map_subcarriers");
    CVector<detail::ComplexValue<Derived>> out = CVector<detail::ComplexValue<Derived>>::Zero(cfg.k);
    for (int i = 0; i < cfg.k1; ++i)
        out[map.eta * i] = spread_values(i);
    return out;
}

/// K-point IDFT followed by the cyclic prefix; length K + n_cp.
template <typename Derived>
CVector<detail::ComplexValue<Derived>> to_time_with_cp(const Eigen::MatrixBase<Derived>& mapped,
                                                       const SystemConfig& cfg)
{
    detail::require_length(mapped, cfg.k, "to_time_with_cp");
    const auto body = idft(mapped, cfg.k);
    CVector<detail::ComplexValue<Derived>> out(cfg.k + cfg.n_cp);
    out.head(cfg.n_cp) = body.tail(cfg.n_cp);
    out.tail(cfg.k) = body;
    return out;
}

/// Drops the cyclic prefix and returns the K-point spectrum.
template <typename Derived>
CVector<detail::ComplexValue<Derived>> strip_cp_to_frequency(const Eigen::MatrixBase<Derived>& received,
                                                             const SystemConfig& cfg)
{
    detail::require_length(received, cfg.k + cfg.n_cp, "strip_cp_to_frequency");
    return dft(received.tail(cfg.k), cfg.k);
}

/// Subcarrier demapping: Y[k1] = Y~[eta k1].
template <typename Derived>
CVector<detail::ComplexValue<Derived>> rx_front_end(const Eigen::MatrixBase<Derived>& received_freq,
                                                    const SubcarrierMap& map, const SystemConfig& cfg)
{
    map.validate(cfg);
    detail::require_length(received_freq, cfg.k, "rx_front_end");
    CVector<detail::ComplexValue<Derived>> out(cfg.k1);
    for (int i = 0; i < cfg.k1; ++i)
        out[i] = received_freq(map.eta * i);
    return out;
}

/// Removes the data modulation, r[k] = Y[k] / X[k].
template <typename DerivedY, typename DerivedX>
CVector<detail::ComplexValue<DerivedY>> sensing_snapshot(const Eigen::MatrixBase<DerivedY>& received,
                                                         const Eigen::MatrixBase<DerivedX>& transmitted)
{
    detail::require_length(received, transmitted.rows(), "sensing_snapshot");
    for (Eigen::Index k = 0; k < transmitted.rows(); ++k)
        if (transmitted(k) == typename DerivedX::Scalar(0))
            throw std::invalid_argument("sensing_snapshot: transmitted symbol " + std::to_string(k) +
                                        " is zero; symbol block unusable for sensing");
    return received.cwiseQuotient(transmitted);
}

/// Zero-forcing equalisation followed by K1-point IDFT despreading.
template <typename DerivedY, typename DerivedH>
SymbolBlock<detail::ComplexValue<DerivedY>> equalize_despread(const Eigen::MatrixBase<DerivedY>& received,
                                                              const Eigen::MatrixBase<DerivedH>& channel_used,
                                                              const SystemConfig& cfg)
{
    detail::require_length(received, cfg.k1, "equalize_despread");
    detail::require_length(channel_used, cfg.k1, "equalize_despread");
    for (Eigen::Index k = 0; k < channel_used.rows(); ++k)
        if (channel_used(k) == typename DerivedH::Scalar(0))
            throw std::invalid_argument("equalize_despread: zero channel coefficient at subcarrier " +
                                        std::to_string(k));
    const CVector<detail::ComplexValue<DerivedY>> equalized = received.cwiseQuotient(channel_used);
    return {idft(equalized, cfg.k1)};
}

} // namespace isac
