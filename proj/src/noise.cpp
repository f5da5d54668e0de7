#include "cimsim/noise.hpp"

#include <algorithm>
#include <cmath>

#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

void DriftSpec::validate() const {
    if (!(t0 > 0.0)) throw ConfigError("drift t0 must be > 0");
    if (t < t0) throw ConfigError("drift retention time t must be >= t0");
}

void DeviceNoiseSpec::validate() const {
    if (saf.p_sa0 < 0 || saf.p_sa1 < 0 || saf.p_sa0 > 1 || saf.p_sa1 > 1 ||
        saf.p_sa0 + saf.p_sa1 > 1.0)
        throw ConfigError("stuck-at-fault rates must satisfy 0 <= p_sa0 + p_sa1 <= 1");
    if (drift) drift->validate();
}

std::pair<double, double> OutputNoiseTable::stats_for(int level) const {
    if (uniform()) {
        const auto& r = rows.front();
        return {level + (r.mean - r.level), r.std};
    }
    for (const auto& r : rows)
        if (r.level == level) return {r.mean, r.std};
    throw ConfigError("output noise table has no row for level " + std::to_string(level));
}

void OutputNoiseTable::validate() const {
    if (rows.empty()) throw ConfigError("output noise table is empty");
    for (const auto& r : rows)
        if (r.std < 0) throw ConfigError("output noise std must be >= 0");
}

void NoiseSpec::validate() const {
    switch (mode) {
        case NoiseMode::None:
            break;
        case NoiseMode::Device:
            device.validate();
            break;
        case NoiseMode::Circuit:
            circuit.validate();
            break;
    }
}

double apply_drift(double g0, const DriftSpec& spec, double g_min, double g_max,
                   std::mt19937_64& rng) {
    spec.validate();
    if (!(g0 > 0.0)) throw ConfigError("drift requires a positive initial cell value");
    const double mag = std::abs(spec.v);
    double sign = 0.0;
    switch (spec.mode) {
        case DriftMode::Random:
            sign = (rng() & 1u) ? 1.0 : -1.0;
            break;
        case DriftMode::TowardGmax:
            sign = 1.0;
            break;
        case DriftMode::TowardGmin:
            sign = -1.0;
            break;
    }
    double g = g0 * std::pow(spec.t / spec.t0, sign * mag);
    return std::clamp(g, g_min, g_max);
}

int sample_output_noise(int ideal_level, const OutputNoiseTable& table, int p_adc,
                        std::mt19937_64& rng) {
    const int max_code = (1 << p_adc) - 1;
    if (ideal_level < 0 || ideal_level > max_code)
        throw InputError("ideal level " + std::to_string(ideal_level) + " outside ADC range");
    auto [mean, std_dev] = table.stats_for(ideal_level);
    double v = mean;
    if (std_dev > 0.0) {
        std::normal_distribution<double> dist(mean, std_dev);
        v = dist(rng);
    }
    auto code = std::llround(v);
    return static_cast<int>(std::clamp<std::int64_t>(code, 0, max_code));
}

MatD confusion_matrix(const OutputNoiseTable& table, int p_adc, int samples_per_level,
                      std::uint64_t seed) {
    if (samples_per_level < 1) throw ConfigError("samples_per_level must be >= 1");
    const int levels = 1 << p_adc;
    MatD cm = MatD::Zero(levels, levels);
    for (int lvl = 0; lvl < levels; ++lvl) {
        auto rng = make_stream({seed, rng_tag::output, static_cast<std::uint64_t>(lvl)});
        for (int s = 0; s < samples_per_level; ++s) {
            int obs = sample_output_noise(lvl, table, p_adc, rng);
            cm(lvl, obs) += 1.0;
        }
        cm.row(lvl) /= static_cast<double>(samples_per_level);
    }
    return cm;
}

OutputNoiseTable load_output_noise_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const int ci_level = t.col("level");
    const int ci_mean = t.col("mean");
    const int ci_std = t.col("std");
    OutputNoiseTable table;
    for (const auto& r : t.rows) {
        OutputNoiseLevel row;
        row.level = std::stoi(r[ci_level]);
        row.mean = std::stod(r[ci_mean]);
        row.std = std::stod(r[ci_std]);
        table.rows.push_back(row);
    }
    table.validate();
    return table;
}

}  // namespace cimsim
