#pragma once

#include "cimsim/lut.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

// Exact integer matmul on digital in-memory tiles. A is (n, k), B is (k, m);
// the result carries the product scale and 32-bit accumulator width. The
// adder tree is 32 bits wide, so any running sum leaving that range is a
// hard error, not a wraparound.
QuantizedTensor dcim_matmul(const QuantizedTensor& a, const QuantizedTensor& b);

// Narrow a tensor onto new params: code' = clip(round(code * old_scale *
// factor / new_scale)). factor folds in analytic constants such as the
// 1/sqrt(d) attention normalizer.
QuantizedTensor requantize(const QuantizedTensor& x, const QuantParams& params,
                           double factor = 1.0);

// Quantization choices for the toy single-head attention block. Probabilities
// always live on the fixed softmax scale 1/255.
struct AttentionQuant {
    QuantParams qk;      // Q and K codes
    QuantParams v;       // V codes
    QuantParams scores;  // requantized QK^T / sqrt(d)
    QuantParams out;     // requantized probs x V
};

// softmax(Q K^T / sqrt(d)) V with integer score and aggregation matmuls on
// the DCIM path and LUT softmax in between. Q, K, V are float (L, d); the
// result is the dequantized float output.
MatD attention_head(const MatD& q, const MatD& k, const MatD& v, const AttentionQuant& aq);

// Float reference for the same block.
MatD attention_head_float(const MatD& q, const MatD& k, const MatD& v);

}  // namespace cimsim
