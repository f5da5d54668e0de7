#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cimsim/types.hpp"

namespace cimsim {

// Symmetric (zero-point-free) fixed-point parameters. scale is the real
// value of one integer step.
struct QuantParams {
    double scale = 1.0;
    int bits = 8;
    bool is_signed = true;

    std::int64_t qmin() const { return is_signed ? -(std::int64_t(1) << (bits - 1)) : 0; }
    std::int64_t qmax() const {
        return is_signed ? (std::int64_t(1) << (bits - 1)) - 1 : (std::int64_t(1) << bits) - 1;
    }
    // Largest magnitude that maps to the top code.
    double top_value() const { return scale * static_cast<double>(qmax()); }

    void validate() const;
};

struct QuantizedTensor {
    VecI data;
    std::vector<int> shape;
    QuantParams params;

    long numel() const { return data.size(); }
    MatI as_matrix(int rows, int cols) const;
};

struct CalibrationMethod {
    enum class Kind { Max, Percentile };
    Kind kind = Kind::Max;
    double percentile = 0.9999;  // used only for Percentile

    static CalibrationMethod max() { return {Kind::Max, 1.0}; }
    static CalibrationMethod pct(double p) { return {Kind::Percentile, p}; }
    std::string name() const { return kind == Kind::Max ? "max" : "percentile"; }
};

// Streaming |x| histogram with 2048 bins. The range grows by powers of two
// (adjacent bins merge) when a later batch exceeds the current ceiling, so
// calibration is single-pass over any number of batches.
class CalibrationHistogram {
public:
    static constexpr int kBins = 2048;

    void add(const VecD& samples);
    void add(const Tensor& t) { add(t.data); }

    long total_count() const { return total_; }
    double max_abs() const { return max_abs_; }
    double bin_width() const { return range_ / kBins; }
    bool saw_nonfinite() const { return saw_nonfinite_; }

    // Smallest |x| bound whose cumulative fraction reaches p (upper edge of
    // the bin where the CDF crosses p).
    double value_at_percentile(double p) const;

private:
    void grow_to(double new_max);

    std::vector<std::int64_t> counts_ = std::vector<std::int64_t>(kBins, 0);
    double range_ = 0.0;    // histogram covers [0, range_)
    double max_abs_ = 0.0;  // exact max |x| seen
    long total_ = 0;
    bool saw_nonfinite_ = false;
};

struct CalibrationResult {
    QuantParams params;
    bool degenerate = false;  // all-zero samples; scale floored at epsilon
};

constexpr double kDefaultScaleEpsilon = 1e-12;

CalibrationResult finalize_calibration(const CalibrationHistogram& hist,
                                       const CalibrationMethod& method, int bits, bool is_signed,
                                       double epsilon = kDefaultScaleEpsilon);

// One-shot calibration over a batch list.
CalibrationResult calibrate(const std::vector<VecD>& batches, const CalibrationMethod& method,
                            int bits, bool is_signed, double epsilon = kDefaultScaleEpsilon);

// q = clip(round_half_away_from_zero(x / scale), representable range).
QuantizedTensor quantize(const Tensor& x, const QuantParams& params);
MatI quantize_matrix(const MatD& x, const QuantParams& params);

Tensor dequantize(const QuantizedTensor& q);
MatD dequantize_matrix(const MatI& q, const QuantParams& params);

// Per-layer calibration summary row: layer name, method, scale, bits.
struct CalibrationSummary {
    std::string layer;
    std::string method;
    double scale;
    int bits;
};

void write_calibration_csv(const std::string& path, const std::vector<CalibrationSummary>& rows);

}  // namespace cimsim
