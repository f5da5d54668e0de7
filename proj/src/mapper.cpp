#include "cimsim/mapper.hpp"

#include <filesystem>
#include <fstream>

#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cimsim {

void PrecisionConfig::validate() const {
    if (b_in < 1 || b_w < 1 || b_cell < 1 || p_dac < 1)
        throw ConfigError("precision fields must all be >= 1");
    if (b_w > 16 || b_in > 16) throw ConfigError("precision above 16 bits is not supported");
}

int TileMap::rows_in_tile(int tr) const {
    int start = tr * array_rows;
    return std::max(0, std::min(array_rows, logical_rows - start));
}

int TileMap::weights_in_tile(int tc) const {
    int start = tc * weights_per_tile;
    return std::max(0, std::min(weights_per_tile, logical_cols - start));
}

TileMap slice_weights(const MatI& weights_q, const PrecisionConfig& cfg, int array_rows,
                      int array_cols) {
    cfg.validate();
    if (array_rows < 1 || array_cols < 1) throw MappingError("array dims must be positive");
    const int n_cell = cfg.n_cell();
    if (array_cols < n_cell)
        throw MappingError("array has " + std::to_string(array_cols) + " columns but a weight needs " +
                           std::to_string(n_cell) + "; a single weight cannot span tiles");

    const int n = static_cast<int>(weights_q.rows());
    const int m = static_cast<int>(weights_q.cols());
    const std::int64_t offset = std::int64_t(1) << (cfg.b_w - 1);
    const std::int64_t digit_mask = (std::int64_t(1) << cfg.b_cell) - 1;

    TileMap map;
    map.array_rows = array_rows;
    map.array_cols = array_cols;
    map.n_cell = n_cell;
    map.b_cell = cfg.b_cell;
    map.logical_rows = n;
    map.logical_cols = m;
    map.weights_per_tile = array_cols / n_cell;
    map.row_tiles = (n + array_rows - 1) / array_rows;
    map.col_tiles = (m + map.weights_per_tile - 1) / map.weights_per_tile;
    map.tiles.assign(static_cast<size_t>(map.row_tiles) * map.col_tiles,
                     MatI::Zero(array_rows, array_cols));

    for (int r = 0; r < n; ++r) {
        const int tr = r / array_rows;
        const int lr = r % array_rows;
        for (int c = 0; c < m; ++c) {
            std::int64_t u = weights_q(r, c) + offset;
            if (u < 0 || u >= (std::int64_t(1) << cfg.b_w))
                throw MappingError("weight code " + std::to_string(weights_q(r, c)) +
                                   " out of signed " + std::to_string(cfg.b_w) + "-bit range");
            const int tc = c / map.weights_per_tile;
            const int base = (c % map.weights_per_tile) * n_cell;
            MatI& t = map.tile(tr, tc);
            for (int i = 0; i < n_cell; ++i) {
                t(lr, base + i) = (u >> (i * cfg.b_cell)) & digit_mask;
            }
        }
    }
    return map;
}

MappedLayer map_layer(const MatI& weights_q, const PrecisionConfig& cfg, int array_rows,
                      int array_cols, const QuantParams& w_params, const QuantParams& in_params,
                      bool signed_inputs) {
    MappedLayer layer;
    layer.map = slice_weights(weights_q, cfg, array_rows, array_cols);
    layer.cfg = cfg;
    layer.w_params = w_params;
    layer.in_params = in_params;
    layer.signed_inputs = signed_inputs;
    const std::int64_t offset = std::int64_t(1) << (cfg.b_w - 1);
    layer.col_code_sums =
        (weights_q.colwise().sum().array() + offset * weights_q.rows()).matrix().transpose();
    return layer;
}

ConvGeometry conv_geometry(int height, int width, int k_h, int k_w, int stride, int pad) {
    if (stride < 1) throw MappingError("stride must be >= 1");
    int ph = height + 2 * pad;
    int pw = width + 2 * pad;
    if (k_h > ph || k_w > pw) throw MappingError("kernel larger than padded input");
    ConvGeometry g;
    g.out_h = (ph - k_h) / stride + 1;
    g.out_w = (pw - k_w) / stride + 1;
    if (g.out_h < 1 || g.out_w < 1) throw MappingError("convolution output is empty");
    return g;
}

MatI im2col(const MatI& image_chw, int channels, int height, int width, int k_h, int k_w,
            int stride, int pad) {
    if (image_chw.size() != static_cast<long>(channels) * height * width)
        throw MappingError("im2col: image size does not match (C,H,W)");
    ConvGeometry g = conv_geometry(height, width, k_h, k_w, stride, pad);
    g.patch_len = channels * k_h * k_w;

    // image is flattened row-major (c, y, x)
    auto px = [&](int c, int y, int x) -> std::int64_t {
        if (y < 0 || y >= height || x < 0 || x >= width) return 0;
        return image_chw(static_cast<long>(c) * height * width + static_cast<long>(y) * width + x);
    };

    MatI out(g.out_h * g.out_w, g.patch_len);
    for (int oy = 0; oy < g.out_h; ++oy) {
        for (int ox = 0; ox < g.out_w; ++ox) {
            const int patch = oy * g.out_w + ox;
            int col = 0;
            for (int c = 0; c < channels; ++c)
                for (int ky = 0; ky < k_h; ++ky)
                    for (int kx = 0; kx < k_w; ++kx)
                        out(patch, col++) = px(c, oy * stride + ky - pad, ox * stride + kx - pad);
        }
    }
    return out;
}

std::int64_t offset_correction(const std::vector<std::int64_t>& cycle_input_sums,
                               const PrecisionConfig& cfg) {
    std::int64_t acc = 0;
    for (size_t j = 0; j < cycle_input_sums.size(); ++j)
        acc += (std::int64_t(1) << (j * cfg.p_dac)) * cycle_input_sums[j];
    return (std::int64_t(1) << (cfg.b_w - 1)) * acc;
}

MatI reconstruct_weights(const TileMap& map, int b_w) {
    MatI w(map.logical_rows, map.logical_cols);
    const std::int64_t offset = std::int64_t(1) << (b_w - 1);
    for (int r = 0; r < map.logical_rows; ++r) {
        const int tr = r / map.array_rows;
        const int lr = r % map.array_rows;
        for (int c = 0; c < map.logical_cols; ++c) {
            const int tc = c / map.weights_per_tile;
            const int base = (c % map.weights_per_tile) * map.n_cell;
            const MatI& t = map.tile(tr, tc);
            std::int64_t u = 0;
            for (int i = 0; i < map.n_cell; ++i) u += t(lr, base + i) << (i * map.b_cell);
            w(r, c) = u - offset;
        }
    }
    return w;
}

void save_tilemap(const TileMap& map, const std::string& dir, const std::string& layer_name) {
    fs::create_directories(dir);
    json manifest;
    manifest["layer"] = layer_name;
    manifest["array_rows"] = map.array_rows;
    manifest["array_cols"] = map.array_cols;
    manifest["row_tiles"] = map.row_tiles;
    manifest["col_tiles"] = map.col_tiles;
    manifest["n_cell"] = map.n_cell;
    manifest["b_cell"] = map.b_cell;
    manifest["logical_rows"] = map.logical_rows;
    manifest["logical_cols"] = map.logical_cols;
    manifest["weights_per_tile"] = map.weights_per_tile;
    json sigs = json::array();
    for (int i = 0; i < map.n_cell; ++i) sigs.push_back(std::int64_t(1) << (i * map.b_cell));
    manifest["column_significances"] = sigs;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";

    for (int tr = 0; tr < map.row_tiles; ++tr) {
        for (int tc = 0; tc < map.col_tiles; ++tc) {
            std::ofstream out(fs::path(dir) / ("tile_r" + std::to_string(tr) + "_c" +
                                               std::to_string(tc) + ".csv"));
            const MatI& t = map.tile(tr, tc);
            for (int r = 0; r < t.rows(); ++r) {
                for (int c = 0; c < t.cols(); ++c) {
                    if (c) out << ',';
                    out << t(r, c);
                }
                out << '\n';
            }
        }
    }
}

TileMap load_tilemap(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw ConfigError("tilemap manifest not found in " + dir);
    json manifest = json::parse(mf);
    TileMap map;
    map.array_rows = manifest.at("array_rows");
    map.array_cols = manifest.at("array_cols");
    map.row_tiles = manifest.at("row_tiles");
    map.col_tiles = manifest.at("col_tiles");
    map.n_cell = manifest.at("n_cell");
    map.b_cell = manifest.at("b_cell");
    map.logical_rows = manifest.at("logical_rows");
    map.logical_cols = manifest.at("logical_cols");
    map.weights_per_tile = manifest.at("weights_per_tile");
    map.tiles.assign(static_cast<size_t>(map.row_tiles) * map.col_tiles,
                     MatI::Zero(map.array_rows, map.array_cols));
    for (int tr = 0; tr < map.row_tiles; ++tr) {
        for (int tc = 0; tc < map.col_tiles; ++tc) {
            fs::path p = fs::path(dir) /
                         ("tile_r" + std::to_string(tr) + "_c" + std::to_string(tc) + ".csv");
            std::ifstream in(p);
            if (!in) throw ConfigError("missing tile file " + p.string());
            MatI& t = map.tile(tr, tc);
            std::string line;
            int r = 0;
            while (std::getline(in, line) && r < map.array_rows) {
                auto cells = split_csv_line(line);
                for (int c = 0; c < map.array_cols && c < static_cast<int>(cells.size()); ++c)
                    t(r, c) = std::stoll(cells[c]);
                ++r;
            }
        }
    }
    return map;
}

}  // namespace cimsim
