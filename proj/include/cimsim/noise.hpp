#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cimsim/types.hpp"

namespace cimsim {

enum class DriftMode { Random, TowardGmax, TowardGmin };

// G(t) = G0 * (t/t0)^v, evaluated once at the frozen retention time t.
struct DriftSpec {
    double t = 1.0;   // retention time (s)
    double t0 = 1.0;  // reference time (s)
    double v = 0.0;   // drift coefficient magnitude; sign chosen by mode
    DriftMode mode = DriftMode::Random;

    void validate() const;
};

struct SafRates {
    double p_sa0 = 0.0;  // stuck at minimum state
    double p_sa1 = 0.0;  // stuck at maximum state
};

struct DeviceNoiseSpec {
    SafRates saf;
    std::optional<DriftSpec> drift;

    void validate() const;
};

// Per-ADC-level Gaussian output statistics (circuit-expert mode). A table
// with a single row is the uniform shorthand: every level k observes
// N(k + (mean - level), std) using that row's offset and spread.
struct OutputNoiseLevel {
    int level = 0;
    double mean = 0.0;
    double std = 0.0;
};

struct OutputNoiseTable {
    std::vector<OutputNoiseLevel> rows;

    bool uniform() const { return rows.size() == 1; }
    // Resolved (mean, std) for an ideal level; throws ConfigError if the
    // level is absent in non-uniform mode.
    std::pair<double, double> stats_for(int level) const;
    void validate() const;
};

enum class NoiseMode { None, Device, Circuit };

// Exactly one mode may be active; device and circuit noise are never
// combined in a single run.
struct NoiseSpec {
    NoiseMode mode = NoiseMode::None;
    DeviceNoiseSpec device;
    OutputNoiseTable circuit;

    void validate() const;
};

// Drift transform for one cell value; clamped to the programmable range.
// Random mode draws the exponent sign once per cell from rng.
double apply_drift(double g0, const DriftSpec& spec, double g_min, double g_max,
                   std::mt19937_64& rng);

// Post-ADC noise sample: clip(round(N(mean, std)), 0, 2^p_adc - 1).
int sample_output_noise(int ideal_level, const OutputNoiseTable& table, int p_adc,
                        std::mt19937_64& rng);

// Monte-Carlo estimate of P(observed | ideal) over all 2^p_adc levels.
MatD confusion_matrix(const OutputNoiseTable& table, int p_adc, int samples_per_level,
                      std::uint64_t seed);

// output_noise.csv: header "level,mean,std"; a single data row selects the
// uniform shorthand.
OutputNoiseTable load_output_noise_csv(const std::string& path);

}  // namespace cimsim
