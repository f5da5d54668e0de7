#include "cimsim/crossbar.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/rng.hpp"
#include "cimsim/threading.hpp"

namespace cimsim {

void ArrayConfig::validate() const {
    if (rows < 1 || cols < 1) throw ConfigError("array dimensions must be positive");
    if (active_rows_per_cycle < 1 || active_rows_per_cycle > rows)
        throw ConfigError("active_rows_per_cycle must be in [1, rows]");
    if (rows % active_rows_per_cycle != 0)
        throw ConfigError("active_rows_per_cycle must divide the row count");
    if (states.size() < 2) throw ConfigError("state table needs at least two states");
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].level != static_cast<int>(i))
            throw ConfigError("state levels must run 0..n-1 in order");
        if (states[i].sigma < 0) throw ConfigError("state sigma must be >= 0");
        if (states[i].mean < 0) throw ConfigError("state means must be >= 0");
        if (i > 0 && !(states[i].mean > states[i - 1].mean))
            throw ConfigError("state means must be strictly increasing");
    }
}

std::vector<MemState> make_linear_states(int b_cell, double g_off, double g_on,
                                         double sigma_pct_off, double sigma_pct_on) {
    if (b_cell < 1 || b_cell > 8) throw ConfigError("b_cell must be in [1, 8]");
    if (!(g_on > g_off) || g_off < 0)
        throw ConfigError("state ladder needs g_on > g_off >= 0");
    if (sigma_pct_off < 0 || sigma_pct_on < 0)
        throw ConfigError("sigma percentages must be >= 0");
    const int n = 1 << b_cell;
    std::vector<MemState> states(n);
    for (int i = 0; i < n; ++i) {
        const double f = static_cast<double>(i) / static_cast<double>(n - 1);
        states[i].level = i;
        states[i].mean = g_off + f * (g_on - g_off);
        states[i].sigma = states[i].mean * (sigma_pct_off + f * (sigma_pct_on - sigma_pct_off));
    }
    return states;
}

std::vector<MemState> load_mem_states_csv(const std::string& path) {
    CsvTable t = read_csv(path);
    const int ci_state = t.col("state");
    const int ci_mean = t.col("mean");
    const int ci_sigma = t.col("sigma");
    std::vector<MemState> states;
    for (const auto& r : t.rows) {
        MemState s;
        s.level = std::stoi(r[ci_state]);
        s.mean = std::stod(r[ci_mean]);
        s.sigma = std::stod(r[ci_sigma]);
        states.push_back(s);
    }
    if (states.empty()) throw ConfigError(path + ": no state rows");
    for (std::size_t i = 0; i < states.size(); ++i) {
        if (states[i].level != static_cast<int>(i))
            throw ConfigError(path + ": state column must run 0..n-1 in order");
        if (states[i].sigma < 0) throw ConfigError(path + ": sigma must be >= 0");
        if (i > 0 && !(states[i].mean > states[i - 1].mean))
            throw ConfigError(path + ": state means must be strictly increasing");
    }
    return states;
}

std::int64_t adc_out_max(int r_active, int p_dac, int b_cell) {
    if (r_active < 1 || p_dac < 1 || b_cell < 1)
        throw ConfigError("ADC range arguments must all be >= 1");
    return static_cast<std::int64_t>(r_active) * ((std::int64_t(1) << p_dac) - 1) *
           ((std::int64_t(1) << b_cell) - 1);
}

int required_adc_bits(int r_active, int p_dac, int b_cell) {
    const auto out_max = adc_out_max(r_active, p_dac, b_cell);
    const int bits = std::bit_width(static_cast<std::uint64_t>(out_max - 1));
    return std::max(1, bits);
}

void AdcConfig::validate() const {
    if (p_adc < 1 || p_adc > 24) throw ConfigError("p_adc must be in [1, 24]");
    if (out_max < 1) throw ConfigError("ADC out_max must be >= 1");
    const int ceiling =
        std::max(1, static_cast<int>(std::bit_width(static_cast<std::uint64_t>(out_max - 1))));
    if (p_adc > ceiling)
        throw ConfigError("p_adc " + std::to_string(p_adc) + " exceeds ceil(log2(out_max)) = " +
                          std::to_string(ceiling));
}

AdcConfig make_adc_config(int p_adc, const ArrayConfig& array, const PrecisionConfig& cfg) {
    AdcConfig adc;
    adc.out_max = adc_out_max(array.active_rows_per_cycle, cfg.p_dac, cfg.b_cell);
    adc.p_adc =
        p_adc > 0 ? p_adc : required_adc_bits(array.active_rows_per_cycle, cfg.p_dac, cfg.b_cell);
    adc.validate();
    return adc;
}

int adc_quantize(double analog, const AdcConfig& adc, double unit) {
    if (!(unit > 0.0)) throw ConfigError("ADC reference unit must be positive");
    const auto code = std::llround(analog / unit);
    return static_cast<int>(std::clamp<std::int64_t>(code, 0, adc.max_code()));
}

namespace {

void check_digits(const MatI& digits, const std::vector<MemState>& states) {
    if (states.size() < 2 || (states.size() & (states.size() - 1)) != 0)
        throw ConfigError("state table length must be a power of two (2^b_cell)");
    const auto n = static_cast<std::int64_t>(states.size());
    for (long c = 0; c < digits.cols(); ++c)
        for (long r = 0; r < digits.rows(); ++r)
            if (digits(r, c) < 0 || digits(r, c) >= n)
                throw ConfigError("cell digit " + std::to_string(digits(r, c)) +
                                  " has no memory state");
}

}  // namespace

ProgrammedTile program(const MatI& digits, const std::vector<MemState>& states) {
    check_digits(digits, states);
    ProgrammedTile t;
    t.digits = digits;
    t.analog.resize(digits.rows(), digits.cols());
    t.saf = MatU8::Zero(digits.rows(), digits.cols());
    for (long c = 0; c < digits.cols(); ++c)
        for (long r = 0; r < digits.rows(); ++r) t.analog(r, c) = states[digits(r, c)].mean;
    return t;
}

ProgrammedTile program(const MatI& digits, const std::vector<MemState>& states,
                       const DeviceNoiseSpec& noise, std::mt19937_64& rng) {
    check_digits(digits, states);
    noise.validate();
    ProgrammedTile t;
    t.digits = digits;
    t.analog.resize(digits.rows(), digits.cols());
    t.saf = MatU8::Zero(digits.rows(), digits.cols());
    const double g_lo = states.front().mean;
    const double g_hi = states.back().mean;
    std::normal_distribution<double> z01(0.0, 1.0);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (long r = 0; r < digits.rows(); ++r) {
        for (long c = 0; c < digits.cols(); ++c) {
            const MemState& st = states[digits(r, c)];
            double g = st.mean + st.sigma * z01(rng);
            const double u = u01(rng);
            if (u < noise.saf.p_sa0) {
                g = g_lo;
                t.saf(r, c) = 1;
            } else if (u < noise.saf.p_sa0 + noise.saf.p_sa1) {
                g = g_hi;
                t.saf(r, c) = 2;
            } else if (noise.drift) {
                // Multiplicative drift leaves non-positive excursions alone
                // beyond clamping them back into the programmable window.
                g = g > 0.0 ? apply_drift(g, *noise.drift, g_lo, g_hi, rng)
                            : std::clamp(g, g_lo, g_hi);
            }
            t.analog(r, c) = g;
        }
    }
    return t;
}

ProgrammedLayer program_layer(const MappedLayer& layer, const ArrayConfig& array,
                              const NoiseSpec& noise, std::uint64_t seed, int layer_index) {
    array.validate();
    noise.validate();
    if (static_cast<int>(array.states.size()) != (1 << layer.cfg.b_cell))
        throw ConfigError("state table length " + std::to_string(array.states.size()) +
                          " does not equal 2^b_cell");
    if (array.rows != layer.map.array_rows || array.cols != layer.map.array_cols)
        throw ConfigError("array geometry does not match the tile map");

    ProgrammedLayer out;
    out.array = array;
    out.row_tiles = layer.map.row_tiles;
    out.col_tiles = layer.map.col_tiles;
    out.tiles.reserve(static_cast<std::size_t>(out.row_tiles) * out.col_tiles);
    for (int tr = 0; tr < out.row_tiles; ++tr) {
        for (int tc = 0; tc < out.col_tiles; ++tc) {
            if (noise.mode == NoiseMode::Device) {
                auto rng = make_stream({seed, rng_tag::program, static_cast<std::uint64_t>(layer_index),
                                        static_cast<std::uint64_t>(tr), static_cast<std::uint64_t>(tc)});
                out.tiles.push_back(program(layer.map.tile(tr, tc), array.states, noise.device, rng));
            } else {
                out.tiles.push_back(program(layer.map.tile(tr, tc), array.states));
            }
        }
    }
    return out;
}

VecD analog_mvm_cycle(const ProgrammedTile& tile, const ArrayConfig& array, const VecI& x_digits,
                      int p_dac, int sub_cycle) {
    const long rows = tile.analog.rows();
    if (rows != array.rows || tile.analog.cols() != array.cols)
        throw ConfigError("programmed tile does not match the array geometry");
    if (x_digits.size() != rows)
        throw InputError("input vector length must equal the array row count");
    if (sub_cycle < 0 || sub_cycle >= array.sub_cycles())
        throw InputError("sub-cycle index out of range");
    const std::int64_t d_hi = (std::int64_t(1) << p_dac) - 1;
    for (long r = 0; r < rows; ++r)
        if (x_digits[r] < 0 || x_digits[r] > d_hi)
            throw InputError("input digit " + std::to_string(x_digits[r]) +
                             " outside the DAC range");
    VecD x = VecD::Zero(rows);
    const int r0 = sub_cycle * array.active_rows_per_cycle;
    for (int r = r0; r < r0 + array.active_rows_per_cycle; ++r)
        x[r] = static_cast<double>(x_digits[r]);
    VecD out = tile.analog.transpose() * x;
    if (array.dummy_column) out.array() -= array.g_min() * x.sum();
    return out;
}

namespace {

// Patch-block width for parallel dispatch. Fixed so task boundaries, RNG
// stream consumption, and tap order never depend on the thread count.
constexpr int kPatchBlock = 64;

}  // namespace

QuantizedTensor critical_loop(const MappedLayer& layer, const ProgrammedLayer& prog,
                              const UnfoldedInput& inputs, const AdcConfig& adc,
                              const NoiseSpec& noise, std::uint64_t seed, int layer_index,
                              int threads, TapRecorder* taps) {
    const TileMap& map = layer.map;
    const PrecisionConfig& cfg = layer.cfg;
    const ArrayConfig& array = prog.array;

    cfg.validate();
    adc.validate();
    noise.validate();
    array.validate();
    if (static_cast<int>(array.states.size()) != (1 << cfg.b_cell))
        throw ConfigError("state table length does not equal 2^b_cell");
    if (prog.row_tiles != map.row_tiles || prog.col_tiles != map.col_tiles)
        throw ConfigError("programmed tile grid does not match the tile map");
    if (map.array_rows != array.rows || map.array_cols != array.cols)
        throw ConfigError("tile map was built for a different array geometry");
    if (inputs.cols() != map.logical_rows)
        throw InputError("input patch length " + std::to_string(inputs.cols()) +
                         " does not match the layer's " + std::to_string(map.logical_rows) +
                         " logical rows");
    if (layer.col_code_sums.size() != map.logical_cols)
        throw ConfigError("mapped layer is missing its column code sums");

    const MatI x_codes = inputs.transpose();  // logical rows x patches
    const int K = map.logical_rows;
    const int M = map.logical_cols;
    const int N = static_cast<int>(x_codes.cols());
    const int n_in = cfg.n_in();
    const int n_cell = map.n_cell;
    const int rows = array.rows;
    const int n_sub = array.sub_cycles();
    const int r_active = array.active_rows_per_cycle;
    const double unit = array.unit();
    const int max_code = adc.max_code();

    const std::int64_t x_hi = (std::int64_t(1) << cfg.b_in) - 1;
    for (int n = 0; n < N; ++n)
        for (int k = 0; k < K; ++k)
            if (x_codes(k, n) < 0 || x_codes(k, n) > x_hi)
                throw InputError("input code " + std::to_string(x_codes(k, n)) +
                                 " outside [0, 2^b_in)");

    // Resolve every representable level now so the parallel workers cannot
    // throw on a sparse circuit-noise table.
    if (noise.mode == NoiseMode::Circuit && !noise.circuit.uniform())
        for (int lvl = 0; lvl <= max_code; ++lvl) noise.circuit.stats_for(lvl);

    const bool analog_path = noise.mode != NoiseMode::Circuit;
    const bool want_ideal = !analog_path || taps != nullptr;

    // Per-cycle input digit planes, shared read-only across tasks.
    const std::int64_t d_mask = (std::int64_t(1) << cfg.p_dac) - 1;
    std::vector<MatI> xd(n_in);
    std::vector<MatD> xdd(analog_path ? n_in : 0);
    for (int j = 0; j < n_in; ++j) {
        const int shift = j * cfg.p_dac;
        xd[j] = x_codes.unaryExpr([&](std::int64_t v) { return (v >> shift) & d_mask; });
        if (analog_path) xdd[j] = xd[j].cast<double>();
    }

    MatI yu = MatI::Zero(M, N);
    const int n_blocks = (N + kPatchBlock - 1) / kPatchBlock;
    std::vector<std::vector<std::pair<int, int>>> tap_blocks(taps ? n_blocks : 0);

    auto run_block = [&](int b) {
        const int n0 = b * kPatchBlock;
        const int nb = std::min(kPatchBlock, N - n0);
        auto* tap_out = taps ? &tap_blocks[b] : nullptr;

        std::vector<std::mt19937_64> noise_rng;
        MatI codes(0, 0), ideal(0, 0), acc(0, 0);
        MatD raw(0, 0);

        for (int tc = 0; tc < map.col_tiles; ++tc) {
            const int used = map.used_cols(tc);
            const int wpt = map.weights_in_tile(tc);
            for (int tr = 0; tr < map.row_tiles; ++tr) {
                const ProgrammedTile& tile = prog.tile(tr, tc);
                const int occ = map.rows_in_tile(tr);
                acc = MatI::Zero(used, nb);
                if (noise.mode == NoiseMode::Circuit) {
                    // One stream per (tile, patch); draws consumed in a fixed
                    // (cycle, sub-cycle, column) order.
                    noise_rng.clear();
                    for (int n = 0; n < nb; ++n)
                        noise_rng.push_back(make_stream({seed, rng_tag::output,
                                                         static_cast<std::uint64_t>(layer_index),
                                                         static_cast<std::uint64_t>(tr),
                                                         static_cast<std::uint64_t>(tc),
                                                         static_cast<std::uint64_t>(n0 + n)}));
                }
                for (int j = 0; j < n_in; ++j) {
                    for (int s = 0; s < n_sub; ++s) {
                        const int r0 = s * r_active;
                        const int live = std::clamp(occ - r0, 0, r_active);
                        // Padded rows hold digit 0 and receive zero input, so
                        // the live sub-block carries the whole sum.
                        if (want_ideal) {
                            if (live > 0)
                                ideal = tile.digits.block(r0, 0, live, used).transpose() *
                                        xd[j].block(tr * rows + r0, n0, live, nb);
                            else
                                ideal = MatI::Zero(used, nb);
                            for (int n = 0; n < nb; ++n)
                                for (int c = 0; c < used; ++c)
                                    if (ideal(c, n) > max_code) ideal(c, n) = max_code;
                        }
                        if (analog_path) {
                            codes.resize(used, nb);
                            if (live > 0) {
                                raw = tile.analog.block(r0, 0, live, used).transpose() *
                                      xdd[j].block(tr * rows + r0, n0, live, nb);
                                if (array.dummy_column) {
                                    const Eigen::RowVectorXd dummy =
                                        array.g_min() *
                                        xdd[j].block(tr * rows + r0, n0, live, nb).colwise().sum();
                                    raw.rowwise() -= dummy;
                                }
                                for (int n = 0; n < nb; ++n)
                                    for (int c = 0; c < used; ++c)
                                        codes(c, n) = adc_quantize(raw(c, n), adc, unit);
                            } else {
                                codes.setZero();
                            }
                        } else {
                            codes.resize(used, nb);
                            for (int n = 0; n < nb; ++n)
                                for (int c = 0; c < used; ++c)
                                    codes(c, n) = sample_output_noise(
                                        static_cast<int>(ideal(c, n)), noise.circuit, adc.p_adc,
                                        noise_rng[n]);
                        }
                        const std::int64_t cycle_w = std::int64_t(1) << (j * cfg.p_dac);
                        acc += codes * cycle_w;
                        if (tap_out)
                            for (int n = 0; n < nb; ++n)
                                for (int c = 0; c < used; ++c)
                                    tap_out->emplace_back(static_cast<int>(ideal(c, n)),
                                                          static_cast<int>(codes(c, n)));
                    }
                }
                // Shift-add the cell slices of each weight and accumulate the
                // vertical tile into its output rows.
                for (int w = 0; w < wpt; ++w) {
                    const int m = tc * map.weights_per_tile + w;
                    for (int i = 0; i < n_cell; ++i) {
                        const std::int64_t slice_w = std::int64_t(1) << (i * cfg.b_cell);
                        for (int n = 0; n < nb; ++n)
                            yu(m, n0 + n) += slice_w * acc(w * n_cell + i, n);
                    }
                }
            }
        }
    };

    parallel_for_tasks(n_blocks, threads, run_block);
    if (taps)
        for (auto& blk : tap_blocks)
            taps->taps.insert(taps->taps.end(), blk.begin(), blk.end());

    // Digital offset correction: subtract the column code sums scaled by the
    // input offset and the per-cycle input sums scaled by the weight offset.
    const std::int64_t ox = layer.signed_inputs ? (std::int64_t(1) << (cfg.b_in - 1)) : 0;
    const std::int64_t ow = std::int64_t(1) << (cfg.b_w - 1);
    std::vector<std::int64_t> s_j(n_in);
    for (int n = 0; n < N; ++n) {
        for (int j = 0; j < n_in; ++j) s_j[j] = xd[j].col(n).sum();
        const std::int64_t w_corr = offset_correction(s_j, cfg);
        for (int m = 0; m < M; ++m)
            yu(m, n) -= ox * layer.col_code_sums[m] + w_corr - static_cast<std::int64_t>(K) * ow * ox;
    }

    QuantizedTensor out;
    out.shape = {N, M};
    out.data.resize(static_cast<long>(M) * N);
    for (int n = 0; n < N; ++n)
        for (int m = 0; m < M; ++m) out.data[static_cast<long>(n) * M + m] = yu(m, n);
    out.params.scale = layer.w_params.scale * layer.in_params.scale;
    out.params.bits = 32;  // nominal accumulator width; partial sums, not codes
    out.params.is_signed = true;
    return out;
}

}  // namespace cimsim
