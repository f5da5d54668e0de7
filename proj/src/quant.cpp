#include "cimsim/quant.hpp"

#include <algorithm>
#include <cmath>

#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"

namespace cimsim {

void QuantParams::validate() const {
    if (!(scale > 0.0)) throw ConfigError("quant scale must be > 0");
    if (bits < 2 || bits > 16) throw ConfigError("quant bits must be in [2,16]");
}

MatI QuantizedTensor::as_matrix(int rows, int cols) const {
    if (static_cast<long>(rows) * cols != data.size())
        throw ConfigError("quantized tensor view shape mismatch");
    MatI m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = data[static_cast<long>(r) * cols + c];
    return m;
}

void CalibrationHistogram::add(const VecD& samples) {
    for (long i = 0; i < samples.size(); ++i) {
        double v = samples[i];
        if (!std::isfinite(v)) {
            saw_nonfinite_ = true;
            continue;
        }
        double a = std::abs(v);
        ++total_;
        if (a == 0.0) continue;
        if (a > max_abs_) max_abs_ = a;
        if (a >= range_) grow_to(a);
        int bin = static_cast<int>(a / range_ * kBins);
        bin = std::min(bin, kBins - 1);
        ++counts_[bin];
    }
}

void CalibrationHistogram::grow_to(double new_max) {
    if (range_ == 0.0) {
        range_ = new_max * (1.0 + 1e-12);
        return;
    }
    while (new_max >= range_) {
        // Double the range: merge bin pairs into the lower half.
        for (int i = 0; i < kBins / 2; ++i) counts_[i] = counts_[2 * i] + counts_[2 * i + 1];
        for (int i = kBins / 2; i < kBins; ++i) counts_[i] = 0;
        range_ *= 2.0;
    }
}

double CalibrationHistogram::value_at_percentile(double p) const {
    std::int64_t nonzero = 0;
    for (auto c : counts_) nonzero += c;
    if (nonzero == 0) return 0.0;
    std::int64_t zeros = total_ - nonzero;
    std::int64_t target = static_cast<std::int64_t>(std::ceil(p * static_cast<double>(total_)));
    if (target <= zeros) return 0.0;
    std::int64_t cum = zeros;
    for (int i = 0; i < kBins; ++i) {
        cum += counts_[i];
        if (cum >= target) return (i + 1) * bin_width();
    }
    return range_;
}

CalibrationResult finalize_calibration(const CalibrationHistogram& hist,
                                       const CalibrationMethod& method, int bits, bool is_signed,
                                       double epsilon) {
    if (hist.total_count() == 0) throw CalibrationError("calibration stream is empty");
    if (method.kind == CalibrationMethod::Kind::Percentile &&
        !(method.percentile > 0.0 && method.percentile <= 1.0))
        throw CalibrationError("percentile must be in (0,1]");

    double bound = method.kind == CalibrationMethod::Kind::Max
                       ? hist.max_abs()
                       : hist.value_at_percentile(method.percentile);

    QuantParams p;
    p.bits = bits;
    p.is_signed = is_signed;
    double denom = static_cast<double>(is_signed ? (std::int64_t(1) << (bits - 1)) - 1
                                                 : (std::int64_t(1) << bits) - 1);
    CalibrationResult res;
    double scale = bound / denom;
    if (!(scale > epsilon)) {
        scale = epsilon;
        res.degenerate = true;
    }
    p.scale = scale;
    p.validate();
    res.params = p;
    return res;
}

CalibrationResult calibrate(const std::vector<VecD>& batches, const CalibrationMethod& method,
                            int bits, bool is_signed, double epsilon) {
    CalibrationHistogram hist;
    for (const auto& b : batches) hist.add(b);
    return finalize_calibration(hist, method, bits, is_signed, epsilon);
}

namespace {

std::int64_t quantize_value(double x, const QuantParams& p) {
    double q = x / p.scale;
    std::int64_t code = std::llround(q);  // rounds half away from zero
    return std::clamp(code, p.qmin(), p.qmax());
}

}  // namespace

QuantizedTensor quantize(const Tensor& x, const QuantParams& params) {
    params.validate();
    QuantizedTensor q;
    q.shape = x.shape;
    q.params = params;
    q.data.resize(x.data.size());
    std::string bad;
    for (long i = 0; i < x.data.size(); ++i) {
        if (!std::isfinite(x.data[i])) {
            if (bad.size() < 200) bad += (bad.empty() ? "" : ",") + std::to_string(i);
            continue;
        }
        q.data[i] = quantize_value(x.data[i], params);
    }
    if (!bad.empty()) throw QuantizeError("non-finite elements at indices [" + bad + "]");
    return q;
}

MatI quantize_matrix(const MatD& x, const QuantParams& params) {
    params.validate();
    MatI q(x.rows(), x.cols());
    std::string bad;
    for (int r = 0; r < x.rows(); ++r) {
        for (int c = 0; c < x.cols(); ++c) {
            if (!std::isfinite(x(r, c))) {
                if (bad.size() < 200)
                    bad += (bad.empty() ? "" : ",") + std::to_string(r) + ":" + std::to_string(c);
                continue;
            }
            q(r, c) = quantize_value(x(r, c), params);
        }
    }
    if (!bad.empty()) throw QuantizeError("non-finite elements at indices [" + bad + "]");
    return q;
}

Tensor dequantize(const QuantizedTensor& q) {
    Tensor t;
    t.shape = q.shape;
    t.data.resize(q.data.size());
    for (long i = 0; i < q.data.size(); ++i)
        t.data[i] = static_cast<double>(q.data[i]) * q.params.scale;
    return t;
}

MatD dequantize_matrix(const MatI& q, const QuantParams& params) {
    return q.cast<double>() * params.scale;
}

void write_calibration_csv(const std::string& path, const std::vector<CalibrationSummary>& rows) {
    CsvWriter w(path);
    w.row({"layer", "method", "scale", "bits"});
    for (const auto& r : rows) w.row({r.layer, r.method, fmt_double(r.scale), std::to_string(r.bits)});
}

}  // namespace cimsim
