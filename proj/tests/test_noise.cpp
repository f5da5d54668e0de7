#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "cimsim/errors.hpp"
#include "cimsim/noise.hpp"
#include "cimsim/rng.hpp"

using namespace cimsim;

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// P(clip(round(N(mean, std))) == k) on [0, max_code], via the Gaussian CDF.
double rounded_prob(double mean, double sd, int k, int max_code) {
    double lo = k - 0.5, hi = k + 0.5;
    if (k == 0) lo = -1e30;
    if (k == max_code) hi = 1e30;
    return normal_cdf((hi - mean) / sd) - normal_cdf((lo - mean) / sd);
}

OutputNoiseTable identity_table(int levels) {
    OutputNoiseTable t;
    for (int i = 0; i < levels; ++i) t.rows.push_back({i, static_cast<double>(i), 0.0});
    return t;
}

}  // namespace

TEST_CASE("drift is the identity at the reference time and for v=0") {
    std::mt19937_64 rng = make_stream({1});
    for (auto mode : {DriftMode::Random, DriftMode::TowardGmax, DriftMode::TowardGmin}) {
        DriftSpec s{1.0, 1.0, 0.37, mode};
        CHECK(apply_drift(2.5, s, 0.0, 100.0, rng) == 2.5);
    }
    DriftSpec v0{1e6, 1.0, 0.0, DriftMode::Random};
    CHECK(apply_drift(2.5, v0, 0.0, 100.0, rng) == 2.5);
}

TEST_CASE("drift follows the power law toward the chosen rail") {
    std::mt19937_64 rng = make_stream({2});
    DriftSpec down{10.0, 1.0, -0.1, DriftMode::TowardGmin};
    const double expect = std::exp(-0.1 * std::log(10.0));  // 10^-0.1
    CHECK(apply_drift(1.0, down, 0.0, 100.0, rng) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.7943).epsilon(1e-4));

    DriftSpec up{10.0, 1.0, -0.1, DriftMode::TowardGmax};  // sign comes from the mode
    CHECK(apply_drift(1.0, up, 0.0, 100.0, rng) ==
          doctest::Approx(std::exp(0.1 * std::log(10.0))).epsilon(1e-12));
}

TEST_CASE("drift clamps to the programmable window") {
    std::mt19937_64 rng = make_stream({3});
    DriftSpec up{1e6, 1.0, 0.5, DriftMode::TowardGmax};
    CHECK(apply_drift(1.0, up, 0.5, 2.0, rng) == 2.0);
    DriftSpec down{1e6, 1.0, 0.5, DriftMode::TowardGmin};
    CHECK(apply_drift(1.0, down, 0.5, 2.0, rng) == 0.5);
}

TEST_CASE("random drift draws the exponent sign per cell") {
    std::mt19937_64 rng = make_stream({4});
    DriftSpec s{100.0, 1.0, 0.05, DriftMode::Random};
    const double up = std::exp(0.05 * std::log(100.0));
    const double dn = std::exp(-0.05 * std::log(100.0));
    int ups = 0, dns = 0;
    for (int i = 0; i < 4000; ++i) {
        double g = apply_drift(1.0, s, 0.0, 100.0, rng);
        if (g == doctest::Approx(up).epsilon(1e-12)) ++ups;
        else if (g == doctest::Approx(dn).epsilon(1e-12)) ++dns;
    }
    CHECK(ups + dns == 4000);
    // binomial(4000, 1/2): 3 standard errors is ~95
    CHECK(std::abs(ups - 2000) < 100);
}

TEST_CASE("invalid drift times raise ConfigError") {
    std::mt19937_64 rng = make_stream({5});
    DriftSpec s{0.5, 1.0, 0.1, DriftMode::Random};
    CHECK_THROWS_AS(apply_drift(1.0, s, 0.0, 100.0, rng), ConfigError);
    DriftSpec s2{1.0, 0.0, 0.1, DriftMode::Random};
    CHECK_THROWS_AS(apply_drift(1.0, s2, 0.0, 100.0, rng), ConfigError);
}

TEST_CASE("identity output-noise table is the identity map") {
    auto t = identity_table(128);
    std::mt19937_64 rng = make_stream({6});
    for (int lvl = 0; lvl < 128; ++lvl) CHECK(sample_output_noise(lvl, t, 7, rng) == lvl);
}

TEST_CASE("output noise matches its Gaussian within 3 standard errors") {
    OutputNoiseTable t;
    t.rows.push_back({10, 10.0, 2.0});
    std::mt19937_64 rng = make_stream({7});
    const int n = 100000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
        int v = sample_output_noise(10, t, 7, rng);
        sum += v;
        sq += static_cast<double>(v) * v;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    // the rounded Gaussian keeps the mean and inflates the variance by ~1/12
    double omean = 0, ovar = 0;
    for (int k = 0; k <= 127; ++k) omean += k * rounded_prob(10.0, 2.0, k, 127);
    for (int k = 0; k <= 127; ++k)
        ovar += (k - omean) * (k - omean) * rounded_prob(10.0, 2.0, k, 127);
    CHECK(std::abs(mean - omean) < 0.02);
    CHECK(std::abs(sd - std::sqrt(ovar)) < 0.02);
    CHECK(std::abs(mean - 10.0) < 0.02);
    CHECK(std::abs(sd - 2.0) < 0.03);
}

TEST_CASE("samples never leave the ADC range") {
    OutputNoiseTable t;
    t.rows.push_back({126, 126.8, 5.0});
    std::mt19937_64 rng = make_stream({8});
    for (int i = 0; i < 100000; ++i) {
        int v = sample_output_noise(126, t, 7, rng);
        CHECK(v <= 127);
        CHECK(v >= 0);
    }
}

TEST_CASE("single-row tables apply uniformly across levels") {
    OutputNoiseTable t;
    t.rows.push_back({0, 0.25, 0.5});  // +0.25 bias, sigma 0.5, at every level
    CHECK(t.uniform());
    auto [m5, s5] = t.stats_for(5);
    CHECK(m5 == 5.25);
    CHECK(s5 == 0.5);
    std::mt19937_64 rng = make_stream({9});
    const int n = 100000;
    double sum = 0;
    for (int i = 0; i < n; ++i) sum += sample_output_noise(5, t, 7, rng);
    double oracle = 0;
    for (int k = 0; k <= 127; ++k) oracle += k * rounded_prob(5.25, 0.5, k, 127);
    CHECK(std::abs(sum / n - oracle) < 3.0 * 0.5 / std::sqrt(static_cast<double>(n)) + 0.01);
}

TEST_CASE("levels missing from a multi-row table raise ConfigError") {
    OutputNoiseTable t;
    t.rows.push_back({0, 0.0, 0.1});
    t.rows.push_back({1, 1.0, 0.1});
    std::mt19937_64 rng = make_stream({10});
    CHECK_THROWS_AS(sample_output_noise(2, t, 3, rng), ConfigError);
    CHECK_THROWS_AS(sample_output_noise(9, t, 3, rng), InputError);  // outside the ADC range
}

TEST_CASE("confusion matrix of the identity table is the identity") {
    auto t = identity_table(8);
    MatD cm = confusion_matrix(t, 3, 500, 42);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) CHECK(cm(i, j) == (i == j ? 1.0 : 0.0));
}

TEST_CASE("confusion matrix rows are stochastic with the expected diagonal") {
    OutputNoiseTable t;
    t.rows.push_back({0, 0.0, 0.3});  // uniform sigma 0.3, no bias
    MatD cm = confusion_matrix(t, 4, 20000, 7);
    const double diag = std::erf(0.5 / (0.3 * std::sqrt(2.0)));  // ~0.904
    CHECK(diag == doctest::Approx(0.904).epsilon(1e-3));
    for (int i = 0; i < 16; ++i) {
        CHECK(cm.row(i).sum() == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(cm(i, i) >= 0.90);
        CHECK(cm(i, i) == doctest::Approx(rounded_prob(i, 0.3, i, 15)).epsilon(0.02));
    }
}

TEST_CASE("very wide noise spreads mass across the clip range") {
    OutputNoiseTable t;
    t.rows.push_back({0, 0.0, 8.0});
    MatD cm = confusion_matrix(t, 3, 20000, 11);
    for (int i = 0; i < 8; ++i) {
        CHECK(cm.row(i).maxCoeff() < 0.75);  // no single dominant code
        CHECK(cm(i, 0) > 0.0);
        CHECK(cm(i, 7) > 0.0);
    }
}

TEST_CASE("noise spec validation") {
    DeviceNoiseSpec d;
    d.saf = {0.6, 0.6};
    CHECK_THROWS_AS(d.validate(), ConfigError);
    d.saf = {-0.1, 0.0};
    CHECK_THROWS_AS(d.validate(), ConfigError);
    d.saf = {0.0175, 0.09};
    CHECK_NOTHROW(d.validate());

    OutputNoiseTable t;
    CHECK_THROWS_AS(t.validate(), ConfigError);
    t.rows.push_back({0, 0.0, -1.0});
    CHECK_THROWS_AS(t.validate(), ConfigError);

    NoiseSpec spec;
    spec.mode = NoiseMode::Circuit;
    spec.circuit.rows.push_back({0, 0.0, 0.5});
    CHECK_NOTHROW(spec.validate());
}

TEST_CASE("output_noise.csv loads both table shapes") {
    const std::string path = "output_noise_test.csv";
    {
        std::ofstream f(path);
        f << "level,mean,std\n0,0.1,0.4\n";
    }
    auto uni = load_output_noise_csv(path);
    CHECK(uni.uniform());
    CHECK(uni.rows[0].mean == 0.1);
    {
        std::ofstream f(path);
        f << "level,mean,std\n0,0,0.1\n1,1.1,0.2\n2,2,0.3\n3,3,0.4\n";
    }
    auto multi = load_output_noise_csv(path);
    CHECK_FALSE(multi.uniform());
    CHECK(multi.rows[1].mean == 1.1);
    auto [m, s] = multi.stats_for(3);
    CHECK(m == 3.0);
    CHECK(s == 0.4);
    {
        std::ofstream f(path);
        f << "level,mean,std\n0,0,-0.5\n";
    }
    CHECK_THROWS_AS(load_output_noise_csv(path), ConfigError);
    std::remove(path.c_str());
}
