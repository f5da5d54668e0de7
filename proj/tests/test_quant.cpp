#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "cimsim/errors.hpp"
#include "cimsim/quant.hpp"

using namespace cimsim;

namespace {

VecD make_vec(std::initializer_list<double> vals) {
    VecD v(static_cast<long>(vals.size()));
    long i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

// Brute-force percentile oracle: smallest |x| whose CDF reaches p.
double exact_percentile(std::vector<double> samples, double p) {
    for (auto& s : samples) s = std::abs(s);
    std::sort(samples.begin(), samples.end());
    auto target = static_cast<std::size_t>(
        std::ceil(p * static_cast<double>(samples.size())));
    target = std::max<std::size_t>(target, 1);
    return samples[target - 1];
}

}  // namespace

TEST_CASE("max calibration formula") {
    auto res = calibrate({make_vec({-2.0, 1.0})}, CalibrationMethod::max(), 8, true);
    CHECK(res.params.scale == 2.0 / 127.0);
    CHECK_FALSE(res.degenerate);
    CHECK(res.params.qmin() == -128);
    CHECK(res.params.qmax() == 127);
}

TEST_CASE("max calibration unsigned denominator") {
    auto res = calibrate({make_vec({0.0, 5.1})}, CalibrationMethod::max(), 8, false);
    CHECK(res.params.scale == 5.1 / 255.0);
    CHECK(res.params.qmin() == 0);
    CHECK(res.params.qmax() == 255);
}

TEST_CASE("all-zero samples floor at epsilon with the degenerate flag") {
    auto res = calibrate({make_vec({0.0, 0.0, 0.0})}, CalibrationMethod::max(), 8, true);
    CHECK(res.params.scale == kDefaultScaleEpsilon);
    CHECK(res.degenerate);
}

TEST_CASE("empty stream raises CalibrationError") {
    CHECK_THROWS_AS(calibrate({}, CalibrationMethod::max(), 8, true), CalibrationError);
    // A stream of only non-finite values is empty for calibration purposes.
    double nan = std::nan("");
    CHECK_THROWS_AS(calibrate({make_vec({nan, nan})}, CalibrationMethod::max(), 8, true),
                    CalibrationError);
}

TEST_CASE("percentile calibration on a uniform grid") {
    const int n = 2001;
    VecD grid(n);
    std::vector<double> plain(n);
    for (int i = 0; i < n; ++i) {
        grid[i] = -1.0 + 2.0 * i / (n - 1);
        plain[i] = grid[i];
    }
    CalibrationHistogram hist;
    hist.add(grid);
    auto res = finalize_calibration(hist, CalibrationMethod::pct(0.9999), 8, true);
    const double oracle = exact_percentile(plain, 0.9999);
    CHECK(std::abs(res.params.scale * 127.0 - oracle) <= hist.bin_width() + 1e-12);
    CHECK(std::abs(res.params.scale - 1.0 / 127.0) <= hist.bin_width());
}

TEST_CASE("percentile matches the brute-force oracle across growth") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> small(0.0, 1.0);
    std::vector<double> all;
    CalibrationHistogram hist;
    // Later batches exceed the first batch's ceiling, forcing bin merges.
    for (int batch = 0; batch < 4; ++batch) {
        VecD b(4000);
        const double blow = std::pow(3.0, batch);
        for (int i = 0; i < 4000; ++i) {
            b[i] = small(rng) * blow;
            all.push_back(b[i]);
        }
        hist.add(b);
    }
    for (double p : {0.5, 0.99, 0.9999}) {
        const double oracle = exact_percentile(all, p);
        const double got = hist.value_at_percentile(p);
        CHECK(got >= oracle - 1e-12);
        CHECK(got <= oracle + hist.bin_width() + 1e-12);
    }
}

TEST_CASE("percentile 1.0 agrees with max within one bin") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    VecD b(5000);
    for (int i = 0; i < 5000; ++i) b[i] = u(rng);
    CalibrationHistogram hist;
    hist.add(b);
    auto pmax = finalize_calibration(hist, CalibrationMethod::max(), 8, true);
    auto p1 = finalize_calibration(hist, CalibrationMethod::pct(1.0), 8, true);
    CHECK(std::abs(p1.params.scale - pmax.params.scale) <= hist.bin_width() / 127.0 + 1e-15);
}

TEST_CASE("quantize rounds half away from zero and clips") {
    QuantParams p{2.0 / 127.0, 8, true};
    Tensor x;
    x.data = make_vec({1.0, 0.0, 1000.0, -1000.0, -1.0});
    x.shape = {5};
    auto q = quantize(x, p);
    CHECK(q.data[0] == 64);  // 63.5 rounds away from zero
    CHECK(q.data[1] == 0);
    CHECK(q.data[2] == 127);
    CHECK(q.data[3] == -128);
    CHECK(q.data[4] == -64);
    CHECK(q.shape == std::vector<int>{5});
}

TEST_CASE("non-finite elements raise QuantizeError naming indices") {
    QuantParams p{0.1, 8, true};
    Tensor x;
    x.data = make_vec({1.0, std::nan(""), 2.0});
    x.shape = {3};
    CHECK_THROWS_WITH_AS(quantize(x, p), doctest::Contains("1"), QuantizeError);
}

TEST_CASE("dequantize is the scale product") {
    QuantizedTensor q;
    q.data = VecI::Zero(2);
    q.data[0] = 64;
    q.data[1] = 0;
    q.shape = {2};
    q.params = {2.0 / 127.0, 8, true};
    Tensor t = dequantize(q);
    CHECK(t.data[0] == doctest::Approx(1.0078740157).epsilon(1e-9));
    CHECK(t.data[1] == 0.0);
}

TEST_CASE("lattice points round-trip exactly") {
    QuantParams p{0.03125, 8, true};  // power-of-two scale: products are exact
    for (std::int64_t k = p.qmin(); k <= p.qmax(); ++k) {
        Tensor x;
        x.data = make_vec({static_cast<double>(k) * p.scale});
        x.shape = {1};
        auto q = quantize(x, p);
        CHECK(q.data[0] == k);
        CHECK(dequantize(q).data[0] == x.data[0]);
    }
}

TEST_CASE("quantization is monotone and has bounded error") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2.5, 2.5);
    QuantParams p{2.0 / 127.0, 8, true};
    for (int i = 0; i < 2000; ++i) {
        double a = u(rng);
        double b = u(rng);
        if (a > b) std::swap(a, b);
        Tensor x;
        x.data = make_vec({a, b});
        x.shape = {2};
        auto q = quantize(x, p);
        CHECK(q.data[0] <= q.data[1]);
        // error vs the clipped input stays within half a step
        const double lo = p.scale * static_cast<double>(p.qmin());
        const double hi = p.top_value();
        for (int j = 0; j < 2; ++j) {
            const double clipped = std::clamp(x.data[j], lo, hi);
            const double err = std::abs(static_cast<double>(q.data[j]) * p.scale - clipped);
            CHECK(err <= p.scale / 2.0 + 1e-12);
        }
    }
}

TEST_CASE("max calibration reproduces the maximum as the top code") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g(0.0, 2.0);
    VecD b(1000);
    for (int i = 0; i < 1000; ++i) b[i] = g(rng);
    auto res = calibrate({b}, CalibrationMethod::max(), 8, true);
    double m = b.cwiseAbs().maxCoeff();
    Tensor x;
    x.data = make_vec({m, -m});
    x.shape = {2};
    auto q = quantize(x, res.params);
    CHECK(q.data[0] == res.params.qmax());
    CHECK(q.data[1] == -res.params.qmax());
}

TEST_CASE("quant params validation") {
    CHECK_THROWS_AS(QuantParams({0.0, 8, true}).validate(), ConfigError);
    CHECK_THROWS_AS(QuantParams({0.1, 1, true}).validate(), ConfigError);
    CHECK_THROWS_AS(QuantParams({0.1, 17, true}).validate(), ConfigError);
    CHECK_THROWS_AS(calibrate({make_vec({1.0})}, CalibrationMethod::pct(0.0), 8, true),
                    CalibrationError);
}

TEST_CASE("calibration summary CSV layout") {
    const std::string path = "calib_summary_test.csv";
    write_calibration_csv(path, {{"fc1", "percentile", 0.0125, 8}, {"fc2", "max", 0.5, 8}});
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    CHECK(line == "layer,method,scale,bits");
    std::getline(in, line);
    CHECK(line == "fc1,percentile,0.0125,8");
    std::getline(in, line);
    CHECK(line == "fc2,max,0.5,8");
    in.close();
    std::remove(path.c_str());
}
