#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "cimsim/mapper.hpp"
#include "cimsim/noise.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

// One programmable memory state. mean/sigma are Siemens in the current
// domain, Farads in the charge domain, or normalized units.
struct MemState {
    int level = 0;
    double mean = 0.0;
    double sigma = 0.0;
};

enum class Domain { Current, Charge };

// 1-bit RRAM defaults: HRS 40 kOhm, LRS 3 kOhm.
constexpr double kDefaultGOff = 1.0 / 40e3;
constexpr double kDefaultGOn = 1.0 / 3e3;

struct ArrayConfig {
    int rows = 128;
    int cols = 128;
    Domain domain = Domain::Current;
    int active_rows_per_cycle = 128;
    bool dummy_column = true;
    std::vector<MemState> states;

    int sub_cycles() const { return rows / active_rows_per_cycle; }
    double g_min() const { return states.front().mean; }
    double g_max() const { return states.back().mean; }
    // Analog spacing of adjacent ideal MAC levels; the ADC reference step.
    double unit() const { return (g_max() - g_min()) / static_cast<double>(states.size() - 1); }

    void validate() const;
};

// Evenly spaced state ladder from g_off to g_on with per-state sigma given
// as a fraction of the mean, interpolated linearly from the off state to the
// on state.
std::vector<MemState> make_linear_states(int b_cell, double g_off = kDefaultGOff,
                                         double g_on = kDefaultGOn, double sigma_pct_off = 0.0,
                                         double sigma_pct_on = 0.0);

// mem_states.csv: header "state,mean,sigma", one row per state, ascending.
std::vector<MemState> load_mem_states_csv(const std::string& path);

// Largest noiseless column count per conversion: R_active*(2^P_DAC-1)*(2^b_cell-1).
std::int64_t adc_out_max(int r_active, int p_dac, int b_cell);

// ceil(log2(out_max)), floored at 1 bit for the degenerate single-level case.
int required_adc_bits(int r_active, int p_dac, int b_cell);

struct AdcConfig {
    int p_adc = 7;
    std::int64_t out_max = 0;

    int max_code() const { return (1 << p_adc) - 1; }
    void validate() const;
};

// p_adc <= 0 selects the minimum lossless precision for (array, cfg).
AdcConfig make_adc_config(int p_adc, const ArrayConfig& array, const PrecisionConfig& cfg);

// code = clip(round(analog/unit), 0, 2^P_ADC - 1). The level spacing stays
// fixed as P_ADC shrinks; small ADCs clip large outputs instead of rescaling.
int adc_quantize(double analog, const AdcConfig& adc, double unit);

struct ProgrammedTile {
    MatD analog;   // R x C programmed cell values
    MatI digits;   // pristine digit codes
    MatU8 saf;     // 0 = intact, 1 = stuck at min state, 2 = stuck at max state
};

// Ideal programming: every cell lands exactly on its state mean.
ProgrammedTile program(const MatI& digits, const std::vector<MemState>& states);

// Device-expert programming: per-cell Gaussian D2D draw, then stuck-at-fault
// overrides, then the drift transform. Stuck cells pin to the exact state
// mean and do not drift.
ProgrammedTile program(const MatI& digits, const std::vector<MemState>& states,
                       const DeviceNoiseSpec& noise, std::mt19937_64& rng);

struct ProgrammedLayer {
    ArrayConfig array;
    int row_tiles = 0;
    int col_tiles = 0;
    std::vector<ProgrammedTile> tiles;  // row-major grid

    const ProgrammedTile& tile(int tr, int tc) const { return tiles[tr * col_tiles + tc]; }
};

// Programs every tile of a mapped layer. Each tile draws from its own RNG
// stream keyed by (seed, layer, tile row, tile col), so the result is
// independent of programming order.
ProgrammedLayer program_layer(const MappedLayer& layer, const ArrayConfig& array,
                              const NoiseSpec& noise, std::uint64_t seed, int layer_index);

// One array read: drive a full R-length digit vector for one sub-cycle
// window, integrate every mapped column, and subtract the dummy reference
// states[0].mean * sum(x) when enabled. The driver masks rows outside the
// active window. Returns one analog value per tile column.
VecD analog_mvm_cycle(const ProgrammedTile& tile, const ArrayConfig& array, const VecI& x_digits,
                      int p_dac, int sub_cycle);

// Per-conversion (ideal, observed) ADC code pairs in a deterministic order;
// feeds the ADC error-rate analysis.
struct TapRecorder {
    std::vector<std::pair<int, int>> taps;
};

// The bit-sliced MAC loop: for each input cycle j and cell slice i, convert
// the analog column sums through the ADC and shift-add with weights
// 2^(i*b_cell + j*P_DAC). Sub-cycle row groups are converted independently
// and summed digitally; vertical tiles accumulate, horizontal tiles
// concatenate. The offset correction then restores signed partial sums.
//
// inputs holds one patch per row, unsigned codes in [0, 2^b_in). Returns the
// integer partial-sum tensor, shape (patches, logical_cols), with scale
// w_scale * in_scale.
QuantizedTensor critical_loop(const MappedLayer& layer, const ProgrammedLayer& prog,
                              const UnfoldedInput& inputs, const AdcConfig& adc,
                              const NoiseSpec& noise, std::uint64_t seed, int layer_index,
                              int threads = 1, TapRecorder* taps = nullptr);

}  // namespace cimsim
