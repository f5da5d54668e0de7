#pragma once

#include <array>
#include <cstdint>
#include <functional>

#include "cimsim/quant.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

// 256-entry code-to-code table realizing a nonlinear operator on 8-bit
// tensors. Entry i maps the i-th representable input code (qmin + i) to an
// output code; the table is built offline by evaluating the float function
// at each dequantized code and requantizing.
struct Lut8 {
    std::array<std::int64_t, 256> table{};
    QuantParams in_params;
    QuantParams out_params;
};

Lut8 make_identity_lut(const QuantParams& params);
Lut8 make_lut_from_function(const std::function<double(double)>& f, const QuantParams& in_params,
                            const QuantParams& out_params);
// GELU via the exact erf form.
Lut8 make_gelu_lut(const QuantParams& in_params, const QuantParams& out_params);

// exp table for integer softmax: entry d holds round(exp(-d * score_scale) * 255),
// indexed by the non-negative distance d = max_code - code of a row element.
// Output codes live on the fixed probability scale 1/255.
Lut8 make_softmax_exp_lut(double score_scale);

// Elementwise table lookup. The tensor's params must match the table's input
// side (8 bits, same signedness, same scale).
QuantizedTensor lut_apply(const QuantizedTensor& x, const Lut8& lut);

// Row-wise integer softmax over a (rows, cols) score tensor: subtract the row
// max, look up exp through the table, then normalize with a 16-bit fixed-point
// reciprocal. Output is unsigned 8-bit on scale 1/255; each dequantized row
// sums to 1 within 2 * (1/255) * cols.
QuantizedTensor softmax_via_lut(const QuantizedTensor& scores);
QuantizedTensor softmax_via_lut(const QuantizedTensor& scores, const Lut8& exp_lut);

}  // namespace cimsim
