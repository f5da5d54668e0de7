#include "cimsim/lut.hpp"

#include <algorithm>
#include <cmath>

#include "cimsim/errors.hpp"

namespace cimsim {

namespace {

void check_8bit(const QuantParams& p, const char* what) {
    p.validate();
    if (p.bits != 8) throw ConfigError(std::string(what) + " must be 8-bit");
}

}  // namespace

Lut8 make_identity_lut(const QuantParams& params) {
    check_8bit(params, "LUT params");
    Lut8 lut;
    lut.in_params = params;
    lut.out_params = params;
    for (int i = 0; i < 256; ++i) lut.table[i] = params.qmin() + i;
    return lut;
}

Lut8 make_lut_from_function(const std::function<double(double)>& f, const QuantParams& in_params,
                            const QuantParams& out_params) {
    check_8bit(in_params, "LUT input params");
    check_8bit(out_params, "LUT output params");
    Lut8 lut;
    lut.in_params = in_params;
    lut.out_params = out_params;
    for (int i = 0; i < 256; ++i) {
        const double x = static_cast<double>(in_params.qmin() + i) * in_params.scale;
        const auto q = std::llround(f(x) / out_params.scale);
        lut.table[i] = std::clamp<std::int64_t>(q, out_params.qmin(), out_params.qmax());
    }
    return lut;
}

Lut8 make_gelu_lut(const QuantParams& in_params, const QuantParams& out_params) {
    return make_lut_from_function(
        [](double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }, in_params,
        out_params);
}

Lut8 make_softmax_exp_lut(double score_scale) {
    if (!(score_scale > 0.0)) throw ConfigError("softmax score scale must be positive");
    Lut8 lut;
    lut.in_params = QuantParams{score_scale, 8, false};
    lut.out_params = QuantParams{1.0 / 255.0, 8, false};
    for (int d = 0; d < 256; ++d)
        lut.table[d] = std::llround(std::exp(-static_cast<double>(d) * score_scale) * 255.0);
    return lut;
}

QuantizedTensor lut_apply(const QuantizedTensor& x, const Lut8& lut) {
    if (x.params.bits != 8) throw ConfigError("LUT activation requires an 8-bit input tensor");
    if (x.params.is_signed != lut.in_params.is_signed ||
        std::abs(x.params.scale - lut.in_params.scale) >
            1e-9 * std::max(x.params.scale, lut.in_params.scale))
        throw ConfigError("tensor params do not match the table's input side");
    QuantizedTensor out;
    out.shape = x.shape;
    out.params = lut.out_params;
    out.data.resize(x.data.size());
    const std::int64_t qmin = lut.in_params.qmin();
    for (long i = 0; i < x.data.size(); ++i) out.data[i] = lut.table[x.data[i] - qmin];
    return out;
}

QuantizedTensor softmax_via_lut(const QuantizedTensor& scores) {
    return softmax_via_lut(scores, make_softmax_exp_lut(scores.params.scale));
}

QuantizedTensor softmax_via_lut(const QuantizedTensor& scores, const Lut8& exp_lut) {
    if (scores.params.bits != 8) throw ConfigError("softmax expects 8-bit scores");
    if (scores.shape.size() != 2) throw ConfigError("softmax expects a 2-D score tensor");
    if (std::abs(scores.params.scale - exp_lut.in_params.scale) >
        1e-9 * std::max(scores.params.scale, exp_lut.in_params.scale))
        throw ConfigError("exp table was built for a different score scale");
    const int rows = scores.shape[0];
    const int cols = scores.shape[1];
    if (cols < 1) throw ConfigError("softmax rows must be non-empty");

    QuantizedTensor out;
    out.shape = scores.shape;
    out.params = exp_lut.out_params;
    out.data.resize(scores.data.size());
    std::vector<std::int64_t> e(cols);
    for (int r = 0; r < rows; ++r) {
        const std::int64_t* row = scores.data.data() + static_cast<long>(r) * cols;
        const std::int64_t mx = *std::max_element(row, row + cols);
        std::int64_t sum = 0;
        for (int c = 0; c < cols; ++c) {
            e[c] = exp_lut.table[mx - row[c]];
            sum += e[c];
        }
        // 16-bit fixed-point reciprocal of the row sum, scaled so the max
        // entry stays near code 255.
        const std::int64_t recip = std::llround(65536.0 * 255.0 / static_cast<double>(sum));
        for (int c = 0; c < cols; ++c)
            out.data[static_cast<long>(r) * cols + c] = (e[c] * recip + 32768) >> 16;
    }
    return out;
}

}  // namespace cimsim
