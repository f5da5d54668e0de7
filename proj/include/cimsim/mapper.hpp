#pragma once

#include <string>
#include <vector>

#include "cimsim/quant.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

struct PrecisionConfig {
    int b_in = 8;    // input bits
    int b_w = 8;     // weight bits
    int b_cell = 1;  // bits per memory cell
    int p_dac = 1;   // DAC bits per input cycle (1 = bit-serial)

    int n_cell() const { return (b_w + b_cell - 1) / b_cell; }  // cells per weight
    int n_in() const { return (b_in + p_dac - 1) / p_dac; }     // input cycles

    void validate() const;
};

// One weight matrix partitioned into an array-tile grid of unsigned cell
// digits. Weights are offset-encoded (w + 2^(b_w-1)) before slicing so every
// digit is a non-negative cell state; the digital correction that restores
// signed results is computed from column code sums plus per-cycle input sums.
struct TileMap {
    int array_rows = 0;  // R
    int array_cols = 0;  // C
    int row_tiles = 0;
    int col_tiles = 0;
    int n_cell = 1;
    int b_cell = 1;
    int logical_rows = 0;       // N: weight matrix rows (inputs)
    int logical_cols = 0;       // M: weight matrix columns (outputs)
    int weights_per_tile = 0;   // whole weights packed per tile; no weight straddles tiles
    std::vector<MatI> tiles;    // row-major grid, each R x C of digits in [0, 2^b_cell)

    const MatI& tile(int tr, int tc) const { return tiles[tr * col_tiles + tc]; }
    MatI& tile(int tr, int tc) { return tiles[tr * col_tiles + tc]; }

    // Occupied (non-padded) rows of a row tile.
    int rows_in_tile(int tr) const;
    // Weights mapped into a column tile.
    int weights_in_tile(int tc) const;
    // Mapped (used) columns of a column tile = weights_in_tile * n_cell.
    int used_cols(int tc) const { return weights_in_tile(tc) * n_cell; }
    // Bit significance exponent of a local mapped column: i in [0, n_cell).
    int significance(int local_col) const { return local_col % n_cell; }

    std::int64_t total_mapped_cols() const {
        return static_cast<std::int64_t>(logical_cols) * n_cell;
    }
};

// Quantized signed weights plus everything the array engine needs to turn
// unsigned crossbar outputs back into signed dot products.
struct MappedLayer {
    TileMap map;
    PrecisionConfig cfg;
    QuantParams w_params;
    QuantParams in_params;
    bool signed_inputs = false;  // inputs offset-encoded by 2^(b_in-1)
    VecI col_code_sums;          // per output column: sum of offset-encoded weight codes
};

// Slice an N x M signed weight matrix into tiles of b_cell-bit digits.
TileMap slice_weights(const MatI& weights_q, const PrecisionConfig& cfg, int array_rows,
                      int array_cols);

MappedLayer map_layer(const MatI& weights_q, const PrecisionConfig& cfg, int array_rows,
                      int array_cols, const QuantParams& w_params, const QuantParams& in_params,
                      bool signed_inputs);

// Patch matrix fed to the array engine: one row per receptive-field patch
// (or per sample for dense layers), one column per logical array row.
using UnfoldedInput = MatI;

// Unfold a (C_in, H, W) integer image into a patch matrix, patches ordered
// row-major over (out_y, out_x), each patch laid out channel-major then
// kernel-row then kernel-col. Padding contributes code 0.
UnfoldedInput im2col(const MatI& image_chw, int channels, int height, int width, int k_h, int k_w,
                     int stride, int pad);

struct ConvGeometry {
    int out_h = 0;
    int out_w = 0;
    int patch_len = 0;
};
ConvGeometry conv_geometry(int height, int width, int k_h, int k_w, int stride, int pad);

// Digital correction for offset-encoded signed weights: given per-cycle sums
// S_j of the active input digits, returns 2^(b_w-1) * sum_j 2^(j*p_dac) * S_j.
std::int64_t offset_correction(const std::vector<std::int64_t>& cycle_input_sums,
                               const PrecisionConfig& cfg);

// Reconstruct the signed weight matrix from tile digits (test/oracle support
// and serialization round-trips).
MatI reconstruct_weights(const TileMap& map, int b_w);

// CSV-per-tile serialization with a manifest describing the grid.
void save_tilemap(const TileMap& map, const std::string& dir, const std::string& layer_name);
TileMap load_tilemap(const std::string& dir);

}  // namespace cimsim
