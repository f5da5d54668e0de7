#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimsim/crossbar.hpp"
#include "cimsim/lut.hpp"
#include "cimsim/mapper.hpp"
#include "cimsim/noise.hpp"
#include "cimsim/quant.hpp"
#include "cimsim/types.hpp"

namespace cimsim {

enum class LayerKind { Linear, Conv2D, ReLU, MaxPool, AvgPool, Flatten, LUTActivation, DCIMMatmul, Residual };
enum class Engine { ACIM, DCIM, Digital };

// Matrix layers execute on analog tiles; activation-by-activation products
// (attention scores and aggregation) go to digital tiles because their
// operands cannot be pre-programmed; everything else is plain digital logic.
Engine engine_for(LayerKind kind);

std::string kind_name(LayerKind kind);
LayerKind kind_from_name(const std::string& name);

struct LayerNode {
    std::string name;
    LayerKind kind = LayerKind::ReLU;

    // Linear
    int in_features = 0, out_features = 0;
    // Conv2D (input C_in x H x W)
    int in_ch = 0, out_ch = 0, k_h = 0, k_w = 0, stride = 1, pad = 0;
    // pools
    int pool_k = 0, pool_stride = 0;  // stride 0 = same as kernel
    // LUTActivation: builder name ("gelu" | "identity")
    std::string lut_kind;
    // Residual / DCIMMatmul second operand: name of an earlier layer
    std::string source;
    bool transpose_b = false;   // DCIMMatmul: transpose the source activation
    double scale_factor = 1.0;  // DCIMMatmul: analytic factor, e.g. 1/sqrt(d)

    // Calibration ranges (largest representable |x|); bit widths come from
    // the hardware config so precision sweeps reuse one calibration.
    double w_range = 0.0;    // ACIM weights
    double in_range = 0.0;   // ACIM/DCIM/LUT input activations
    bool in_signed = true;
    double src_range = 0.0;  // DCIMMatmul source operand
    bool src_signed = true;
    double out_range = 0.0;  // LUTActivation / DCIMMatmul output
    bool out_signed = true;

    MatD weights;  // Linear: (in, out); Conv2D: (C_in*k_h*k_w, C_out)
    VecD bias;     // empty = no bias
    bool has_bias() const { return bias.size() > 0; }

    Engine engine() const { return engine_for(kind); }
};

struct Model {
    std::string name;
    std::vector<int> input_shape;  // per-sample shape, e.g. {16} or {C,H,W}
    std::vector<LayerNode> layers;

    int layer_index(const std::string& layer_name) const;  // -1 if absent
    void validate() const;
};

// model.json plus little-endian float32 weight blobs in the same directory.
void save_model(const Model& model, const std::string& dir);
Model load_model(const std::string& dir);

// Scale chosen so the calibrated range maps to the top code.
QuantParams params_from_range(double range, int bits, bool is_signed);

struct HwConfig {
    PrecisionConfig precision;
    ArrayConfig array;
    int p_adc = 0;  // <= 0 resolves to the lossless minimum
    NoiseSpec noise;
    std::uint64_t seed = 1;
    int threads = 1;
};

struct PreparedLayer {
    MappedLayer mapped;
    ProgrammedLayer prog;
    AdcConfig adc;
    MatI wq;      // quantized signed weights (K x M), the ideal-path operand
    VecI bias_q;  // bias on the accumulator scale w_scale * in_scale
};

// Per-run state: tiles programmed once per (model, hw, seed).
struct PreparedModel {
    const Model* model = nullptr;
    HwConfig hw;
    std::vector<PreparedLayer> acim;  // parallel to layers; empty for non-ACIM
};

PreparedModel prepare_model(const Model& model, const HwConfig& hw);

// Dequantized per-layer outputs of the lockstep ideal and noisy passes.
struct LayerTap {
    std::string name;
    Tensor ideal;
    Tensor noisy;
};

struct InferenceResult {
    MatD logits;        // noisy path, one row per sample
    MatD ideal_logits;  // pure-quantization path
    std::vector<LayerTap> taps;
};

// The full pipeline per analog layer: quantize, unfold, MAC through the
// programmed tiles, correct, fold, dequantize. A pure-quantization shadow
// pass runs in lockstep so every layer yields an (ideal, noisy) pair; with
// noise off and a lossless ADC the two passes are identical integers.
// adc_taps, when given, collects per-conversion (ideal, observed) codes.
InferenceResult run_inference(const PreparedModel& pm, const MatD& batch,
                              bool record_taps = false, TapRecorder* adc_taps = nullptr);

// Float forward pass (no quantization anywhere); the accuracy baseline.
MatD float_forward(const Model& model, const MatD& batch);

// Pure-quantization integer forward pass at the given precision (no tiling,
// no ADC); equals run_inference's ideal path.
MatD reference_forward(const Model& model, const HwConfig& hw, const MatD& batch);

// Fraction of samples whose noisy-path argmax matches the label.
double evaluate_accuracy(const PreparedModel& pm, const MatD& data, const VecI& labels);
double accuracy_of(const MatD& logits, const VecI& labels);

// Per-layer output shapes in graph order (per sample, no batch dimension),
// with the same structural checks as Model::validate.
std::vector<std::vector<int>> layer_shapes(const Model& model);

// Float activations entering each layer; entry i feeds layer i and the last
// entry is the network output. Used for range calibration.
std::vector<Tensor> float_activations(const Model& model, const MatD& batch);

}  // namespace cimsim
