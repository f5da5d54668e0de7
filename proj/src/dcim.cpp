#include "cimsim/dcim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "cimsim/errors.hpp"

namespace cimsim {

QuantizedTensor dcim_matmul(const QuantizedTensor& a, const QuantizedTensor& b) {
    if (a.shape.size() != 2 || b.shape.size() != 2)
        throw InputError("dcim_matmul expects 2-D tensors");
    const int n = a.shape[0], k = a.shape[1];
    const int kb = b.shape[0], m = b.shape[1];
    if (k != kb)
        throw InputError("inner dimensions " + std::to_string(k) + " and " + std::to_string(kb) +
                         " do not match");
    constexpr std::int64_t kAccMax = std::numeric_limits<std::int32_t>::max();
    constexpr std::int64_t kAccMin = std::numeric_limits<std::int32_t>::min();

    QuantizedTensor out;
    out.shape = {n, m};
    out.params.scale = a.params.scale * b.params.scale;
    out.params.bits = 32;
    out.params.is_signed = true;
    out.data.resize(static_cast<long>(n) * m);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < m; ++j) {
            std::int64_t acc = 0;
            for (int t = 0; t < k; ++t) {
                acc += a.data[static_cast<long>(i) * k + t] * b.data[static_cast<long>(t) * m + j];
                if (acc > kAccMax || acc < kAccMin)
                    throw AccumError("32-bit accumulator overflow at (" + std::to_string(i) + "," +
                                     std::to_string(j) + ")");
            }
            out.data[static_cast<long>(i) * m + j] = acc;
        }
    }
    return out;
}

QuantizedTensor requantize(const QuantizedTensor& x, const QuantParams& params, double factor) {
    params.validate();
    QuantizedTensor out;
    out.shape = x.shape;
    out.params = params;
    out.data.resize(x.data.size());
    const double ratio = x.params.scale * factor / params.scale;
    for (long i = 0; i < x.data.size(); ++i) {
        const auto q = static_cast<std::int64_t>(std::llround(static_cast<double>(x.data[i]) * ratio));
        out.data[i] = std::clamp(q, params.qmin(), params.qmax());
    }
    return out;
}

namespace {

QuantizedTensor quantize_2d(const MatD& x, const QuantParams& params) {
    return quantize(Tensor::from_matrix(x), params);
}

QuantizedTensor transpose_2d(const QuantizedTensor& x) {
    QuantizedTensor out;
    out.params = x.params;
    out.shape = {x.shape[1], x.shape[0]};
    out.data.resize(x.data.size());
    for (int r = 0; r < x.shape[0]; ++r)
        for (int c = 0; c < x.shape[1]; ++c)
            out.data[static_cast<long>(c) * x.shape[0] + r] =
                x.data[static_cast<long>(r) * x.shape[1] + c];
    return out;
}

}  // namespace

MatD attention_head(const MatD& q, const MatD& k, const MatD& v, const AttentionQuant& aq) {
    if (q.cols() != k.cols() || k.rows() != v.rows())
        throw InputError("attention operand shapes do not chain");
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(q.cols()));

    QuantizedTensor qq = quantize_2d(q, aq.qk);
    QuantizedTensor kq = quantize_2d(k, aq.qk);
    QuantizedTensor vq = quantize_2d(v, aq.v);

    QuantizedTensor scores = requantize(dcim_matmul(qq, transpose_2d(kq)), aq.scores, inv_sqrt_d);
    QuantizedTensor probs = softmax_via_lut(scores);
    QuantizedTensor out = requantize(dcim_matmul(probs, vq), aq.out);
    return dequantize(out).as_matrix(out.shape[0], out.shape[1]);
}

MatD attention_head_float(const MatD& q, const MatD& k, const MatD& v) {
    MatD scores = q * k.transpose() / std::sqrt(static_cast<double>(q.cols()));
    MatD probs(scores.rows(), scores.cols());
    for (int r = 0; r < scores.rows(); ++r) {
        const double mx = scores.row(r).maxCoeff();
        ArrD e = (scores.row(r).transpose().array() - mx).exp();
        probs.row(r) = (e / e.sum()).transpose();
    }
    return probs * v;
}

}  // namespace cimsim
