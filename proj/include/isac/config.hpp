#pragma once

#include "isac/eval.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>

namespace isac {

/// Configuration problem, anchored to a line of the source document when known.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& source, int line, const std::string& message);

    int line() const { return line_; }

private:
    int line_;
};

/**
 * Run configuration document (YAML), sections:
 *
 *   system:    delta_f_hz, k, k1, n_cp
 *   channel:   l, delay_spread_max_s, delay_offset_min_s, delay_offset_max_s,
 *              delay_offset_step_s, on_grid, min_separation_s, snr_db,
 *              gain_model { magnitude_min, magnitude_max }
 *   estimator: gamma_th, joint_refit, threshold_mode, noise_margin, coarse_stop
 *   waveform:  symbols
 *   sweep:     snr_db [list], trials, methods [list], master_seed
 *
 * Unknown keys are rejected. Missing keys keep their defaults.
 */
struct RunConfig {
    SweepConfig sweep;

    friend bool operator==(const RunConfig& a, const RunConfig& b);
};

RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_run_config(const std::string& path);

/// Config echo plus a `run` section with seed and library version.
std::string emit_manifest(const RunConfig& cfg, int threads);

/// Re-reads a manifest written by emit_manifest.
RunConfig parse_manifest(const std::string& text, const std::string& source = "<manifest>");

const char* library_version();

} // namespace isac
