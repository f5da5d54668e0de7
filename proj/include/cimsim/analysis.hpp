#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cimsim/net.hpp"
#include "cimsim/ppa.hpp"

namespace cimsim {

// Relative root-mean-square error: sqrt(mean((noisy-ideal)^2) / mean(ideal^2)).
// An all-zero reference has no scale to compare against.
double layer_rmse(const VecD& ideal, const VecD& noisy);
double layer_rmse(const Tensor& ideal, const Tensor& noisy);

// Mismatch statistics between expected and observed ADC output levels,
// binned by the expected level. Index i covers level i from 0 up to the
// largest expected level seen.
struct AdcErrorReport {
    std::vector<std::int64_t> counts;
    std::vector<std::int64_t> mismatches;
    std::vector<double> rates;  // mismatches/counts, 0 for empty bins

    double overall_rate() const;
};

AdcErrorReport adc_error_rate(const std::vector<int>& expected, const std::vector<int>& observed);
AdcErrorReport adc_error_rate(const std::vector<std::pair<int, int>>& taps);

// level,count,mismatches,error_rate
void save_error_report_csv(const AdcErrorReport& report, const std::string& path);

// Spearman rank correlation with tie-averaged ranks. Returns 0 when either
// input is constant (no ordering evidence either way).
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Indices of the non-dominated points when every objective is maximized.
// Domination needs >= in all coordinates and > in at least one, so exact
// duplicates never dominate each other and are all kept.
std::vector<int> pareto_front(const std::vector<std::vector<double>>& points);

struct DesignPoint {
    std::string config_hash;
    int array = 0;   // square array side
    int b_cell = 0;
    int p_adc = 0;
    int b_in = 0;
    int b_w = 0;
    double accuracy = 0.0;
    double tops_w = 0.0;
    double tops_mm2 = 0.0;
    double fps = 0.0;
    bool pareto = false;
    bool failed = false;
    std::string error;
};

// Grid sweep around a base hardware config. Array sizes are square tiles run
// fully row-parallel; the ADC width is the lossless minimum for the point
// plus the (non-positive) offset, floored at one bit. The conductance ladder
// is rebuilt per b_cell from the base ladder's endpoints.
struct SweepSpec {
    std::vector<int> array_sizes;
    std::vector<int> b_cells;
    std::vector<int> p_adc_offsets;
    std::vector<std::pair<int, int>> precisions;  // (b_in, b_w)
    HwConfig base;
    int noise_seeds = 3;
    int duplication = 1;

    void validate() const;
    std::size_t grid_size() const;
};

// One DesignPoint per grid cell in loop order array > b_cell > offset >
// precision. Accuracy is the median over noise_seeds reseeded runs; TOPS/W,
// TOPS/mm2 and FPS come from the trace estimator. A failing point records
// its error and the sweep continues. Results are identical for any thread
// count. Pareto flags are set on (accuracy, TOPS/W) over the points that ran.
std::vector<DesignPoint> run_sweep(const SweepSpec& spec, const Model& model, const MatD& eval_x,
                                   const VecI& eval_y, const CoefficientTable& coeffs,
                                   int threads = 1);

// config_hash,array,b_cell,p_adc,acc,tops_w,tops_mm2,fps,pareto_flag
void save_sweep_csv(const std::vector<DesignPoint>& points, const std::string& path);

}  // namespace cimsim
