#include "cimsim/net.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <unordered_map>
#include <unordered_set>

#include "cimsim/dcim.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/rng.hpp"

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace cimsim {

Engine engine_for(LayerKind kind) {
    switch (kind) {
        case LayerKind::Linear:
        case LayerKind::Conv2D:
            return Engine::ACIM;
        case LayerKind::DCIMMatmul:
            return Engine::DCIM;
        default:
            return Engine::Digital;
    }
}

std::string kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Linear: return "linear";
        case LayerKind::Conv2D: return "conv2d";
        case LayerKind::ReLU: return "relu";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::AvgPool: return "avgpool";
        case LayerKind::Flatten: return "flatten";
        case LayerKind::LUTActivation: return "lut";
        case LayerKind::DCIMMatmul: return "dcim_matmul";
        case LayerKind::Residual: return "residual";
    }
    throw ConfigError("unknown layer kind");
}

LayerKind kind_from_name(const std::string& name) {
    for (LayerKind k : {LayerKind::Linear, LayerKind::Conv2D, LayerKind::ReLU, LayerKind::MaxPool,
                        LayerKind::AvgPool, LayerKind::Flatten, LayerKind::LUTActivation,
                        LayerKind::DCIMMatmul, LayerKind::Residual})
        if (kind_name(k) == name) return k;
    throw ConfigError("unknown layer kind '" + name + "'");
}

int Model::layer_index(const std::string& layer_name) const {
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].name == layer_name) return static_cast<int>(i);
    return -1;
}

namespace {

long shape_numel(const std::vector<int>& shape) {
    long n = 1;
    for (int d : shape) n *= d;
    return n;
}

struct PoolGeom {
    int k, stride, out_h, out_w;
};

PoolGeom pool_geom(const LayerNode& l, int h, int w) {
    PoolGeom g;
    g.k = l.pool_k;
    g.stride = l.pool_stride > 0 ? l.pool_stride : l.pool_k;
    if (g.k < 1 || g.k > h || g.k > w) throw ConfigError(l.name + ": pool kernel out of range");
    g.out_h = (h - g.k) / g.stride + 1;
    g.out_w = (w - g.k) / g.stride + 1;
    return g;
}

}  // namespace

std::vector<std::vector<int>> layer_shapes(const Model& model) {
    if (model.layers.empty()) throw ConfigError("model has no layers");
    if (model.input_shape.empty()) throw ConfigError("model input shape is empty");
    for (int d : model.input_shape)
        if (d < 1) throw ConfigError("model input dimensions must be positive");

    std::vector<std::vector<int>> shapes;
    std::unordered_set<std::string> names;
    std::unordered_map<std::string, std::vector<int>> out_shapes;
    std::vector<int> cur = model.input_shape;
    for (const auto& l : model.layers) {
        if (l.name.empty()) throw ConfigError("every layer needs a name");
        if (!names.insert(l.name).second) throw ConfigError("duplicate layer name " + l.name);
        switch (l.kind) {
            case LayerKind::Linear: {
                if (cur.size() != 1 || cur[0] != l.in_features)
                    throw ConfigError(l.name + ": expects a flat " + std::to_string(l.in_features) +
                                      "-vector, got " + shape_to_string(cur));
                if (l.weights.rows() != l.in_features || l.weights.cols() != l.out_features)
                    throw ConfigError(l.name + ": weight matrix shape mismatch");
                if (l.has_bias() && l.bias.size() != l.out_features)
                    throw ConfigError(l.name + ": bias length mismatch");
                if (!(l.w_range > 0) || !(l.in_range > 0))
                    throw ConfigError(l.name + ": missing calibration range");
                cur = {l.out_features};
                break;
            }
            case LayerKind::Conv2D: {
                if (cur.size() != 3 || cur[0] != l.in_ch)
                    throw ConfigError(l.name + ": expects a (C,H,W) input with C = " +
                                      std::to_string(l.in_ch) + ", got " + shape_to_string(cur));
                ConvGeometry g = conv_geometry(cur[1], cur[2], l.k_h, l.k_w, l.stride, l.pad);
                if (l.weights.rows() != static_cast<long>(l.in_ch) * l.k_h * l.k_w ||
                    l.weights.cols() != l.out_ch)
                    throw ConfigError(l.name + ": kernel matrix shape mismatch");
                if (l.has_bias() && l.bias.size() != l.out_ch)
                    throw ConfigError(l.name + ": bias length mismatch");
                if (!(l.w_range > 0) || !(l.in_range > 0))
                    throw ConfigError(l.name + ": missing calibration range");
                cur = {l.out_ch, g.out_h, g.out_w};
                break;
            }
            case LayerKind::ReLU:
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool: {
                if (cur.size() != 3) throw ConfigError(l.name + ": pooling expects (C,H,W)");
                PoolGeom g = pool_geom(l, cur[1], cur[2]);
                cur = {cur[0], g.out_h, g.out_w};
                break;
            }
            case LayerKind::Flatten:
                cur = {static_cast<int>(shape_numel(cur))};
                break;
            case LayerKind::LUTActivation:
                if (l.lut_kind != "gelu" && l.lut_kind != "identity")
                    throw ConfigError(l.name + ": unknown LUT kind '" + l.lut_kind + "'");
                if (!(l.in_range > 0)) throw ConfigError(l.name + ": missing calibration range");
                if (l.lut_kind == "gelu" && !(l.out_range > 0))
                    throw ConfigError(l.name + ": missing output range");
                break;
            case LayerKind::Residual: {
                auto it = out_shapes.find(l.source);
                if (it == out_shapes.end())
                    throw ConfigError(l.name + ": source '" + l.source +
                                      "' is not an earlier layer");
                if (it->second != cur)
                    throw ConfigError(l.name + ": residual shapes differ, " +
                                      shape_to_string(it->second) + " vs " + shape_to_string(cur));
                break;
            }
            case LayerKind::DCIMMatmul: {
                auto it = out_shapes.find(l.source);
                if (it == out_shapes.end())
                    throw ConfigError(l.name + ": source '" + l.source +
                                      "' is not an earlier layer");
                if (cur.size() != 2 || it->second.size() != 2)
                    throw ConfigError(l.name + ": matmul operands must be 2-D per sample");
                const auto& b = it->second;
                const int inner = l.transpose_b ? b[1] : b[0];
                const int mcols = l.transpose_b ? b[0] : b[1];
                if (cur[1] != inner) throw ConfigError(l.name + ": inner dimensions do not match");
                if (!(l.in_range > 0) || !(l.src_range > 0) || !(l.out_range > 0))
                    throw ConfigError(l.name + ": missing calibration range");
                cur = {cur[0], mcols};
                break;
            }
        }
        out_shapes[l.name] = cur;
        shapes.push_back(cur);
    }
    return shapes;
}

void Model::validate() const { layer_shapes(*this); }

QuantParams params_from_range(double range, int bits, bool is_signed) {
    if (!(range > 0)) throw ConfigError("calibration range must be positive");
    QuantParams p;
    p.bits = bits;
    p.is_signed = is_signed;
    p.scale = range / static_cast<double>(p.qmax());
    return p;
}

// ---------------------------------------------------------------------------
// manifest + blob serialization

namespace {

void write_f32(const std::string& path, const std::vector<float>& v) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot write " + path);
    f.write(reinterpret_cast<const char*>(v.data()),
            static_cast<std::streamsize>(v.size() * sizeof(float)));
}

std::vector<float> read_f32(const std::string& path, long expect) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw ConfigError("cannot read " + path);
    const auto bytes = static_cast<long>(f.tellg());
    if (bytes != expect * static_cast<long>(sizeof(float)))
        throw ConfigError(path + ": expected " + std::to_string(expect) + " float32 values, file has " +
                          std::to_string(bytes) + " bytes");
    std::vector<float> v(static_cast<std::size_t>(expect));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(v.data()), bytes);
    return v;
}

// Weight blobs use the (out, in) row-major convention; in memory the engine
// wants (in, out).
std::vector<float> weights_to_blob(const MatD& w) {
    std::vector<float> v(static_cast<std::size_t>(w.size()));
    std::size_t i = 0;
    for (long out = 0; out < w.cols(); ++out)
        for (long in = 0; in < w.rows(); ++in) v[i++] = static_cast<float>(w(in, out));
    return v;
}

MatD blob_to_weights(const std::vector<float>& v, long in, long out) {
    MatD w(in, out);
    std::size_t i = 0;
    for (long o = 0; o < out; ++o)
        for (long r = 0; r < in; ++r) w(r, o) = static_cast<double>(v[i++]);
    return w;
}

}  // namespace

void save_model(const Model& model, const std::string& dir) {
    model.validate();
    fs::create_directories(dir);
    json j;
    j["name"] = model.name;
    j["input_shape"] = model.input_shape;
    j["layers"] = json::array();
    for (const auto& l : model.layers) {
        json lj;
        lj["name"] = l.name;
        lj["kind"] = kind_name(l.kind);
        switch (l.kind) {
            case LayerKind::Linear:
                lj["in_features"] = l.in_features;
                lj["out_features"] = l.out_features;
                break;
            case LayerKind::Conv2D:
                lj["in_ch"] = l.in_ch;
                lj["out_ch"] = l.out_ch;
                lj["k_h"] = l.k_h;
                lj["k_w"] = l.k_w;
                lj["stride"] = l.stride;
                lj["pad"] = l.pad;
                break;
            case LayerKind::MaxPool:
            case LayerKind::AvgPool:
                lj["pool_k"] = l.pool_k;
                if (l.pool_stride > 0) lj["pool_stride"] = l.pool_stride;
                break;
            case LayerKind::LUTActivation:
                lj["lut_kind"] = l.lut_kind;
                break;
            case LayerKind::DCIMMatmul:
                lj["source"] = l.source;
                lj["transpose_b"] = l.transpose_b;
                lj["scale_factor"] = l.scale_factor;
                break;
            case LayerKind::Residual:
                lj["source"] = l.source;
                break;
            default:
                break;
        }
        if (l.engine() == Engine::ACIM) {
            lj["w_range"] = l.w_range;
            const std::string wfile = l.name + "_w.bin";
            write_f32(dir + "/" + wfile, weights_to_blob(l.weights));
            lj["weights"] = wfile;
            if (l.has_bias()) {
                std::vector<float> b(static_cast<std::size_t>(l.bias.size()));
                for (long i = 0; i < l.bias.size(); ++i) b[i] = static_cast<float>(l.bias[i]);
                const std::string bfile = l.name + "_b.bin";
                write_f32(dir + "/" + bfile, b);
                lj["bias"] = bfile;
            }
        }
        if (l.engine() == Engine::ACIM || l.kind == LayerKind::LUTActivation ||
            l.kind == LayerKind::DCIMMatmul) {
            lj["in_range"] = l.in_range;
            lj["in_signed"] = l.in_signed;
        }
        if (l.kind == LayerKind::DCIMMatmul) {
            lj["src_range"] = l.src_range;
            lj["src_signed"] = l.src_signed;
        }
        if (l.kind == LayerKind::LUTActivation || l.kind == LayerKind::DCIMMatmul) {
            if (l.out_range > 0) {
                lj["out_range"] = l.out_range;
                lj["out_signed"] = l.out_signed;
            }
        }
        j["layers"].push_back(lj);
    }
    std::ofstream f(dir + "/model.json");
    if (!f) throw ConfigError("cannot write " + dir + "/model.json");
    f << j.dump(2) << "\n";
}

Model load_model(const std::string& dir) {
    std::ifstream f(dir + "/model.json");
    if (!f) throw ConfigError("cannot open " + dir + "/model.json");
    json j;
    try {
        f >> j;
    } catch (const json::exception& e) {
        throw ConfigError(dir + "/model.json: " + e.what());
    }
    Model model;
    try {
        model.name = j.value("name", "");
        model.input_shape = j.at("input_shape").get<std::vector<int>>();
        for (const auto& lj : j.at("layers")) {
            LayerNode l;
            l.name = lj.at("name").get<std::string>();
            l.kind = kind_from_name(lj.at("kind").get<std::string>());
            l.in_features = lj.value("in_features", 0);
            l.out_features = lj.value("out_features", 0);
            l.in_ch = lj.value("in_ch", 0);
            l.out_ch = lj.value("out_ch", 0);
            l.k_h = lj.value("k_h", 0);
            l.k_w = lj.value("k_w", 0);
            l.stride = lj.value("stride", 1);
            l.pad = lj.value("pad", 0);
            l.pool_k = lj.value("pool_k", 0);
            l.pool_stride = lj.value("pool_stride", 0);
            l.lut_kind = lj.value("lut_kind", "");
            l.source = lj.value("source", "");
            l.transpose_b = lj.value("transpose_b", false);
            l.scale_factor = lj.value("scale_factor", 1.0);
            l.w_range = lj.value("w_range", 0.0);
            l.in_range = lj.value("in_range", 0.0);
            l.in_signed = lj.value("in_signed", true);
            l.src_range = lj.value("src_range", 0.0);
            l.src_signed = lj.value("src_signed", true);
            l.out_range = lj.value("out_range", 0.0);
            l.out_signed = lj.value("out_signed", true);
            if (l.engine() == Engine::ACIM) {
                long rows, cols;
                if (l.kind == LayerKind::Linear) {
                    rows = l.in_features;
                    cols = l.out_features;
                } else {
                    rows = static_cast<long>(l.in_ch) * l.k_h * l.k_w;
                    cols = l.out_ch;
                }
                const auto wfile = lj.at("weights").get<std::string>();
                l.weights = blob_to_weights(read_f32(dir + "/" + wfile, rows * cols), rows, cols);
                if (lj.contains("bias")) {
                    const auto bfile = lj.at("bias").get<std::string>();
                    auto b = read_f32(dir + "/" + bfile, cols);
                    l.bias.resize(cols);
                    for (long i = 0; i < cols; ++i) l.bias[i] = static_cast<double>(b[i]);
                }
            }
            model.layers.push_back(std::move(l));
        }
    } catch (const json::exception& e) {
        throw ConfigError(dir + "/model.json: " + e.what());
    }
    model.validate();
    return model;
}

// ---------------------------------------------------------------------------
// execution

namespace {

Tensor batch_tensor(const MatD& batch, const std::vector<int>& per_sample) {
    Tensor t;
    t.shape.assign(1, static_cast<int>(batch.rows()));
    t.shape.insert(t.shape.end(), per_sample.begin(), per_sample.end());
    const long elems = shape_numel(per_sample);
    if (batch.cols() != elems)
        throw InputError("batch has " + std::to_string(batch.cols()) +
                         " values per sample, model expects " + std::to_string(elems));
    t.data.resize(batch.rows() * elems);
    for (long s = 0; s < batch.rows(); ++s)
        for (long i = 0; i < elems; ++i) t.data[s * elems + i] = batch(s, i);
    return t;
}

long per_sample_numel(const Tensor& t) {
    long n = 1;
    for (std::size_t i = 1; i < t.shape.size(); ++i) n *= t.shape[i];
    return n;
}

// Quantized-weight state shared by the noisy and pure-quantization passes.
struct IdealLayer {
    MatI wq;
    VecI bias_q;
    QuantParams wp, ip;
};

IdealLayer make_ideal_layer(const LayerNode& l, const PrecisionConfig& cfg) {
    IdealLayer il;
    il.wp = params_from_range(l.w_range, cfg.b_w, true);
    il.ip = params_from_range(l.in_range, cfg.b_in, l.in_signed);
    il.wq = quantize_matrix(l.weights, il.wp);
    il.bias_q = VecI::Zero(l.weights.cols());
    for (long m = 0; m < l.bias.size(); ++m)
        il.bias_q[m] = std::llround(l.bias[m] / (il.wp.scale * il.ip.scale));
    return il;
}

Tensor dequant_partials(const MatI& y, const IdealLayer& il, std::vector<int> shape) {
    Tensor t;
    t.shape = std::move(shape);
    t.data.resize(y.size());
    const double s = il.wp.scale * il.ip.scale;
    long i = 0;
    for (long r = 0; r < y.rows(); ++r)
        for (long c = 0; c < y.cols(); ++c) t.data[i++] = static_cast<double>(y(r, c)) * s;
    return t;
}

// Integer linear layer on the pure-quantization path: batch GEMM on codes.
Tensor linear_ideal(const IdealLayer& il, const Tensor& act) {
    const int B = act.shape[0];
    const long K = per_sample_numel(act);
    MatI xq = quantize_matrix(act.as_matrix(B, K), il.ip);
    MatI y = xq * il.wq;
    y.rowwise() += il.bias_q.transpose();
    return dequant_partials(y, il, {B, static_cast<int>(il.wq.cols())});
}

// Conv on the pure-quantization path: im2col + GEMM per sample.
Tensor conv_ideal(const LayerNode& l, const IdealLayer& il, const Tensor& act) {
    const int B = act.shape[0], h = act.shape[2], w = act.shape[3];
    ConvGeometry g = conv_geometry(h, w, l.k_h, l.k_w, l.stride, l.pad);
    const long elems = per_sample_numel(act);
    Tensor out;
    out.shape = {B, l.out_ch, g.out_h, g.out_w};
    out.data.resize(static_cast<long>(B) * l.out_ch * g.out_h * g.out_w);
    const double s = il.wp.scale * il.ip.scale;
    for (int b = 0; b < B; ++b) {
        MatD img(elems, 1);
        for (long i = 0; i < elems; ++i) img(i, 0) = act.data[b * elems + i];
        MatI patches = im2col(quantize_matrix(img, il.ip), l.in_ch, h, w, l.k_h, l.k_w, l.stride,
                              l.pad);
        MatI y = patches * il.wq;  // (P, out_ch)
        y.rowwise() += il.bias_q.transpose();
        for (int c = 0; c < l.out_ch; ++c)
            for (long p = 0; p < y.rows(); ++p)
                out.data[((static_cast<long>(b) * l.out_ch + c) * g.out_h * g.out_w) + p] =
                    static_cast<double>(y(p, c)) * s;
    }
    return out;
}

MatI offset_encode(MatI xq, const QuantParams& ip) {
    if (ip.is_signed) xq.array() += std::int64_t(1) << (ip.bits - 1);
    return xq;
}

// Digital layers behave identically on both passes; only the activations
// flowing through them differ.
Tensor step_digital(const LayerNode& l, const Tensor& act,
                    const std::unordered_map<std::string, Tensor>& saved) {
    switch (l.kind) {
        case LayerKind::ReLU: {
            Tensor out = act;
            out.data = out.data.cwiseMax(0.0);
            return out;
        }
        case LayerKind::Flatten: {
            Tensor out = act;
            out.shape = {act.shape[0], static_cast<int>(per_sample_numel(act))};
            return out;
        }
        case LayerKind::MaxPool:
        case LayerKind::AvgPool: {
            const int B = act.shape[0], C = act.shape[1], h = act.shape[2], w = act.shape[3];
            PoolGeom g = pool_geom(l, h, w);
            Tensor out;
            out.shape = {B, C, g.out_h, g.out_w};
            out.data.resize(static_cast<long>(B) * C * g.out_h * g.out_w);
            long idx = 0;
            for (int b = 0; b < B; ++b)
                for (int c = 0; c < C; ++c) {
                    const long base = (static_cast<long>(b) * C + c) * h * w;
                    for (int oy = 0; oy < g.out_h; ++oy)
                        for (int ox = 0; ox < g.out_w; ++ox) {
                            double agg = l.kind == LayerKind::MaxPool
                                             ? -std::numeric_limits<double>::infinity()
                                             : 0.0;
                            for (int ky = 0; ky < g.k; ++ky)
                                for (int kx = 0; kx < g.k; ++kx) {
                                    const double v =
                                        act.data[base + (oy * g.stride + ky) * w + ox * g.stride +
                                                 kx];
                                    agg = l.kind == LayerKind::MaxPool ? std::max(agg, v)
                                                                      : agg + v;
                                }
                            out.data[idx++] = l.kind == LayerKind::MaxPool
                                                  ? agg
                                                  : agg / static_cast<double>(g.k * g.k);
                        }
                }
            return out;
        }
        case LayerKind::LUTActivation: {
            const QuantParams ip = params_from_range(l.in_range, 8, l.in_signed);
            Lut8 lut = l.lut_kind == "gelu"
                           ? make_gelu_lut(ip, params_from_range(l.out_range, 8, l.out_signed))
                           : make_identity_lut(ip);
            return dequantize(lut_apply(quantize(act, ip), lut));
        }
        case LayerKind::Residual: {
            const Tensor& src = saved.at(l.source);
            Tensor out = act;
            out.data += src.data;
            return out;
        }
        case LayerKind::DCIMMatmul: {
            const Tensor& src = saved.at(l.source);
            const int B = act.shape[0], r = act.shape[1], c = act.shape[2];
            const int r2 = src.shape[1], c2 = src.shape[2];
            const int mcols = l.transpose_b ? r2 : c2;
            const QuantParams ap = params_from_range(l.in_range, 8, l.in_signed);
            const QuantParams bp = params_from_range(l.src_range, 8, l.src_signed);
            const QuantParams op = params_from_range(l.out_range, 8, l.out_signed);
            Tensor out;
            out.shape = {B, r, mcols};
            out.data.resize(static_cast<long>(B) * r * mcols);
            for (int b = 0; b < B; ++b) {
                QuantizedTensor aq;
                aq.shape = {r, c};
                aq.params = ap;
                aq.data.resize(static_cast<long>(r) * c);
                for (long i = 0; i < aq.data.size(); ++i) {
                    const auto q = static_cast<std::int64_t>(
                        std::llround(act.data[b * static_cast<long>(r) * c + i] / ap.scale));
                    aq.data[i] = std::clamp(q, ap.qmin(), ap.qmax());
                }
                QuantizedTensor bq;
                bq.params = bp;
                bq.data.resize(static_cast<long>(r2) * c2);
                const long src_off = b * static_cast<long>(r2) * c2;
                if (l.transpose_b) {
                    bq.shape = {c2, r2};
                    for (int y = 0; y < r2; ++y)
                        for (int x = 0; x < c2; ++x) {
                            const auto q = static_cast<std::int64_t>(std::llround(
                                src.data[src_off + static_cast<long>(y) * c2 + x] / bp.scale));
                            bq.data[static_cast<long>(x) * r2 + y] =
                                std::clamp(q, bp.qmin(), bp.qmax());
                        }
                } else {
                    bq.shape = {r2, c2};
                    for (long i = 0; i < bq.data.size(); ++i) {
                        const auto q = static_cast<std::int64_t>(
                            std::llround(src.data[src_off + i] / bp.scale));
                        bq.data[i] = std::clamp(q, bp.qmin(), bp.qmax());
                    }
                }
                QuantizedTensor res = requantize(dcim_matmul(aq, bq), op, l.scale_factor);
                for (long i = 0; i < res.data.size(); ++i)
                    out.data[b * static_cast<long>(r) * mcols + i] =
                        static_cast<double>(res.data[i]) * op.scale;
            }
            return out;
        }
        default:
            throw ConfigError(l.name + ": not a digital layer");
    }
}

}  // namespace

PreparedModel prepare_model(const Model& model, const HwConfig& hw) {
    model.validate();
    hw.precision.validate();
    hw.array.validate();
    hw.noise.validate();
    PreparedModel pm;
    pm.model = &model;
    pm.hw = hw;
    pm.acim.resize(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerNode& l = model.layers[i];
        if (l.engine() != Engine::ACIM) continue;
        IdealLayer il = make_ideal_layer(l, hw.precision);
        PreparedLayer pl;
        pl.wq = il.wq;
        pl.bias_q = il.bias_q;
        pl.mapped = map_layer(il.wq, hw.precision, hw.array.rows, hw.array.cols, il.wp, il.ip,
                              l.in_signed);
        pl.prog = program_layer(pl.mapped, hw.array, hw.noise, hw.seed, static_cast<int>(i));
        pl.adc = make_adc_config(hw.p_adc, hw.array, hw.precision);
        pm.acim[i] = std::move(pl);
    }
    return pm;
}

InferenceResult run_inference(const PreparedModel& pm, const MatD& batch, bool record_taps,
                              TapRecorder* adc_taps) {
    if (!pm.model) throw ConfigError("prepared model is empty");
    const Model& model = *pm.model;
    const HwConfig& hw = pm.hw;

    Tensor ideal = batch_tensor(batch, model.input_shape);
    Tensor noisy = ideal;
    std::unordered_map<std::string, Tensor> saved_ideal, saved_noisy;
    InferenceResult res;

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const LayerNode& l = model.layers[i];
        if (l.engine() == Engine::ACIM) {
            const PreparedLayer& pl = pm.acim[i];
            IdealLayer il{pl.wq, pl.bias_q, pl.mapped.w_params, pl.mapped.in_params};
            const int B = ideal.shape[0];
            if (l.kind == LayerKind::Linear) {
                ideal = linear_ideal(il, ideal);
                const long K = per_sample_numel(noisy);
                MatI xq = offset_encode(quantize_matrix(noisy.as_matrix(B, K), il.ip), il.ip);
                QuantizedTensor qt = critical_loop(pl.mapped, pl.prog, xq, pl.adc, hw.noise,
                                                   hw.seed, static_cast<int>(i), hw.threads,
                                                   adc_taps);
                MatI y = qt.as_matrix(B, l.out_features);
                y.rowwise() += pl.bias_q.transpose();
                noisy = dequant_partials(y, il, {B, l.out_features});
            } else {
                ideal = conv_ideal(l, il, ideal);
                const int h = noisy.shape[2], w = noisy.shape[3];
                ConvGeometry g = conv_geometry(h, w, l.k_h, l.k_w, l.stride, l.pad);
                const long elems = per_sample_numel(noisy);
                Tensor out;
                out.shape = {B, l.out_ch, g.out_h, g.out_w};
                out.data.resize(static_cast<long>(B) * l.out_ch * g.out_h * g.out_w);
                const double s = il.wp.scale * il.ip.scale;
                for (int b = 0; b < B; ++b) {
                    MatD img(elems, 1);
                    for (long t = 0; t < elems; ++t) img(t, 0) = noisy.data[b * elems + t];
                    MatI patches = offset_encode(
                        im2col(quantize_matrix(img, il.ip), l.in_ch, h, w, l.k_h, l.k_w, l.stride,
                               l.pad),
                        il.ip);
                    // every sample gets its own noise sub-seed so spatial
                    // patches never reuse another image's streams
                    QuantizedTensor qt = critical_loop(
                        pl.mapped, pl.prog, patches, pl.adc, hw.noise,
                        mix_seed({hw.seed, rng_tag::sample, static_cast<std::uint64_t>(b)}),
                        static_cast<int>(i), hw.threads, adc_taps);
                    MatI y = qt.as_matrix(g.out_h * g.out_w, l.out_ch);
                    y.rowwise() += pl.bias_q.transpose();
                    for (int c = 0; c < l.out_ch; ++c)
                        for (long p = 0; p < y.rows(); ++p)
                            out.data[((static_cast<long>(b) * l.out_ch + c) * g.out_h * g.out_w) +
                                     p] = static_cast<double>(y(p, c)) * s;
                }
                noisy = std::move(out);
            }
        } else {
            ideal = step_digital(l, ideal, saved_ideal);
            noisy = step_digital(l, noisy, saved_noisy);
        }
        saved_ideal[l.name] = ideal;
        saved_noisy[l.name] = noisy;
        if (record_taps) res.taps.push_back({l.name, ideal, noisy});
    }

    if (noisy.shape.size() != 2)
        throw ConfigError("model output is not a flat logit vector per sample");
    res.logits = noisy.as_matrix(noisy.shape[0], noisy.shape[1]);
    res.ideal_logits = ideal.as_matrix(ideal.shape[0], ideal.shape[1]);
    return res;
}

std::vector<Tensor> float_activations(const Model& model, const MatD& batch) {
    model.validate();
    std::vector<Tensor> record;
    Tensor act = batch_tensor(batch, model.input_shape);
    std::unordered_map<std::string, Tensor> saved;
    for (const auto& l : model.layers) {
        record.push_back(act);
        switch (l.kind) {
            case LayerKind::Linear: {
                const int B = act.shape[0];
                MatD y = act.as_matrix(B, l.in_features) * l.weights;
                if (l.has_bias()) y.rowwise() += l.bias.transpose();
                act = Tensor::from_matrix(y);
                break;
            }
            case LayerKind::Conv2D: {
                const int B = act.shape[0], h = act.shape[2], w = act.shape[3];
                ConvGeometry g = conv_geometry(h, w, l.k_h, l.k_w, l.stride, l.pad);
                const long elems = per_sample_numel(act);
                Tensor out;
                out.shape = {B, l.out_ch, g.out_h, g.out_w};
                out.data.resize(static_cast<long>(B) * l.out_ch * g.out_h * g.out_w);
                for (int b = 0; b < B; ++b) {
                    // float im2col via the padded-pixel accessor
                    auto px = [&](int c, int y0, int x0) -> double {
                        if (y0 < 0 || y0 >= h || x0 < 0 || x0 >= w) return 0.0;
                        return act.data[b * elems + (static_cast<long>(c) * h + y0) * w + x0];
                    };
                    for (int co = 0; co < l.out_ch; ++co)
                        for (int oy = 0; oy < g.out_h; ++oy)
                            for (int ox = 0; ox < g.out_w; ++ox) {
                                double acc = l.has_bias() ? l.bias[co] : 0.0;
                                int row = 0;
                                for (int c = 0; c < l.in_ch; ++c)
                                    for (int ky = 0; ky < l.k_h; ++ky)
                                        for (int kx = 0; kx < l.k_w; ++kx)
                                            acc += l.weights(row++, co) *
                                                   px(c, oy * l.stride + ky - l.pad,
                                                      ox * l.stride + kx - l.pad);
                                out.data[((static_cast<long>(b) * l.out_ch + co) * g.out_h +
                                          oy) * g.out_w + ox] = acc;
                            }
                }
                act = std::move(out);
                break;
            }
            case LayerKind::LUTActivation: {
                Tensor out = act;
                if (l.lut_kind == "gelu")
                    for (long i = 0; i < out.data.size(); ++i) {
                        const double x = out.data[i];
                        out.data[i] = 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
                    }
                act = std::move(out);
                break;
            }
            case LayerKind::DCIMMatmul: {
                const Tensor& src = saved.at(l.source);
                const int B = act.shape[0], r = act.shape[1], c = act.shape[2];
                const int r2 = src.shape[1], c2 = src.shape[2];
                const int mcols = l.transpose_b ? r2 : c2;
                Tensor out;
                out.shape = {B, r, mcols};
                out.data.resize(static_cast<long>(B) * r * mcols);
                for (int b = 0; b < B; ++b) {
                    MatD a(r, c), m(r2, c2);
                    for (int y = 0; y < r; ++y)
                        for (int x = 0; x < c; ++x)
                            a(y, x) = act.data[(static_cast<long>(b) * r + y) * c + x];
                    for (int y = 0; y < r2; ++y)
                        for (int x = 0; x < c2; ++x)
                            m(y, x) = src.data[(static_cast<long>(b) * r2 + y) * c2 + x];
                    MatD y = l.transpose_b ? MatD(a * m.transpose()) : MatD(a * m);
                    y *= l.scale_factor;
                    for (int yy = 0; yy < r; ++yy)
                        for (int xx = 0; xx < mcols; ++xx)
                            out.data[(static_cast<long>(b) * r + yy) * mcols + xx] = y(yy, xx);
                }
                act = std::move(out);
                break;
            }
            default:
                act = step_digital(l, act, saved);
        }
        saved[l.name] = act;
    }
    record.push_back(act);
    return record;
}

MatD float_forward(const Model& model, const MatD& batch) {
    const Tensor& act = float_activations(model, batch).back();
    if (act.shape.size() != 2) throw ConfigError("model output is not a flat logit vector");
    return act.as_matrix(act.shape[0], act.shape[1]);
}

MatD reference_forward(const Model& model, const HwConfig& hw, const MatD& batch) {
    model.validate();
    hw.precision.validate();
    Tensor act = batch_tensor(batch, model.input_shape);
    std::unordered_map<std::string, Tensor> saved;
    for (const auto& l : model.layers) {
        if (l.engine() == Engine::ACIM) {
            IdealLayer il = make_ideal_layer(l, hw.precision);
            act = l.kind == LayerKind::Linear ? linear_ideal(il, act) : conv_ideal(l, il, act);
        } else {
            act = step_digital(l, act, saved);
        }
        saved[l.name] = act;
    }
    if (act.shape.size() != 2) throw ConfigError("model output is not a flat logit vector");
    return act.as_matrix(act.shape[0], act.shape[1]);
}

double accuracy_of(const MatD& logits, const VecI& labels) {
    if (logits.rows() != labels.size())
        throw InputError("logit rows and label count differ");
    if (logits.rows() == 0) throw InputError("empty evaluation set");
    long hits = 0;
    for (long r = 0; r < logits.rows(); ++r) {
        int best = 0;
        for (int c = 1; c < logits.cols(); ++c)
            if (logits(r, c) > logits(r, best)) best = c;
        if (best == labels[r]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(logits.rows());
}

double evaluate_accuracy(const PreparedModel& pm, const MatD& data, const VecI& labels) {
    return accuracy_of(run_inference(pm, data).logits, labels);
}

}  // namespace cimsim
