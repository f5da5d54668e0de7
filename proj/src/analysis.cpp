#include "cimsim/analysis.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

#include "cimsim/crossbar.hpp"
#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/rng.hpp"

namespace cimsim {

double layer_rmse(const VecD& ideal, const VecD& noisy) {
    if (ideal.size() != noisy.size()) throw InputError("rmse: tensor sizes differ");
    if (ideal.size() == 0) throw InputError("rmse: empty tensors");
    const double ref = ideal.squaredNorm();
    if (ref <= 0.0) throw RmseUndefined("rmse reference tensor is all zero");
    return std::sqrt((noisy - ideal).squaredNorm() / ref);
}

double layer_rmse(const Tensor& ideal, const Tensor& noisy) {
    if (ideal.shape != noisy.shape) throw InputError("rmse: tensor shapes differ");
    return layer_rmse(ideal.data, noisy.data);
}

double AdcErrorReport::overall_rate() const {
    const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), 0LL));
    const double m = static_cast<double>(std::accumulate(mismatches.begin(), mismatches.end(), 0LL));
    return n > 0 ? m / n : 0.0;
}

AdcErrorReport adc_error_rate(const std::vector<int>& expected,
                              const std::vector<int>& observed) {
    if (expected.size() != observed.size()) throw InputError("adc streams differ in length");
    int top = 0;
    for (int e : expected) {
        if (e < 0) throw InputError("adc levels are non-negative");
        top = std::max(top, e);
    }
    AdcErrorReport r;
    r.counts.assign(top + 1, 0);
    r.mismatches.assign(top + 1, 0);
    r.rates.assign(top + 1, 0.0);
    for (size_t i = 0; i < expected.size(); ++i) {
        ++r.counts[expected[i]];
        if (observed[i] != expected[i]) ++r.mismatches[expected[i]];
    }
    for (size_t b = 0; b < r.counts.size(); ++b)
        if (r.counts[b] > 0)
            r.rates[b] = static_cast<double>(r.mismatches[b]) / static_cast<double>(r.counts[b]);
    return r;
}

AdcErrorReport adc_error_rate(const std::vector<std::pair<int, int>>& taps) {
    std::vector<int> e(taps.size()), o(taps.size());
    for (size_t i = 0; i < taps.size(); ++i) {
        e[i] = taps[i].first;
        o[i] = taps[i].second;
    }
    return adc_error_rate(e, o);
}

void save_error_report_csv(const AdcErrorReport& report, const std::string& path) {
    CsvWriter w(path);
    w.row({"level", "count", "mismatches", "error_rate"});
    for (size_t b = 0; b < report.counts.size(); ++b)
        w.row({std::to_string(b), std::to_string(report.counts[b]),
               std::to_string(report.mismatches[b]), fmt_double(report.rates[b])});
}

namespace {

std::vector<double> tie_ranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> rank(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (i + j) + 1.0;  // average of 1-based ranks i+1..j+1
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = avg;
        i = j + 1;
    }
    return rank;
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw InputError("spearman: length mismatch");
    if (a.size() < 2) throw InputError("spearman needs at least two samples");
    const std::vector<double> ra = tie_ranks(a), rb = tie_ranks(b);
    const double n = static_cast<double>(a.size());
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += ra[i];
        mb += rb[i];
    }
    ma /= n;
    mb /= n;
    double num = 0, va = 0, vb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        num += (ra[i] - ma) * (rb[i] - mb);
        va += (ra[i] - ma) * (ra[i] - ma);
        vb += (rb[i] - mb) * (rb[i] - mb);
    }
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return num / std::sqrt(va * vb);
}

std::vector<int> pareto_front(const std::vector<std::vector<double>>& points) {
    const int n = static_cast<int>(points.size());
    if (n == 0) throw InputError("pareto_front needs at least one point");
    const size_t d = points[0].size();
    for (const auto& p : points)
        if (p.size() != d) throw InputError("pareto_front: ragged point list");

    std::vector<int> keep;
    if (d == 2) {
        // sort by x desc then y desc; one sweep tracking the best y seen at
        // strictly larger x and within the current x group
        std::vector<int> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](int a, int b) {
            if (points[a][0] != points[b][0]) return points[a][0] > points[b][0];
            return points[a][1] > points[b][1];
        });
        double best_above = -std::numeric_limits<double>::infinity();
        int i = 0;
        while (i < n) {
            int j = i;
            while (j + 1 < n && points[idx[j + 1]][0] == points[idx[i]][0]) ++j;
            double group_max = -std::numeric_limits<double>::infinity();
            for (int k = i; k <= j; ++k) group_max = std::max(group_max, points[idx[k]][1]);
            for (int k = i; k <= j; ++k) {
                const double y = points[idx[k]][1];
                const bool dominated = best_above >= y || group_max > y;
                if (!dominated) keep.push_back(idx[k]);
            }
            best_above = std::max(best_above, group_max);
            i = j + 1;
        }
        std::sort(keep.begin(), keep.end());
        return keep;
    }

    for (int i = 0; i < n; ++i) {
        bool dominated = false;
        for (int j = 0; j < n && !dominated; ++j) {
            if (i == j) continue;
            bool all_ge = true, any_gt = false;
            for (size_t k = 0; k < d; ++k) {
                if (points[j][k] < points[i][k]) all_ge = false;
                if (points[j][k] > points[i][k]) any_gt = true;
            }
            dominated = all_ge && any_gt;
        }
        if (!dominated) keep.push_back(i);
    }
    return keep;
}

void SweepSpec::validate() const {
    if (array_sizes.empty() || b_cells.empty() || p_adc_offsets.empty() || precisions.empty())
        throw ConfigError("sweep grid has an empty axis");
    for (int s : array_sizes)
        if (s < 1) throw ConfigError("array sizes must be positive");
    for (int o : p_adc_offsets)
        if (o > 0) throw ConfigError("p_adc offsets shrink the ADC; they cannot be positive");
    if (noise_seeds < 1) throw ConfigError("need at least one noise seed");
    if (duplication < 1) throw ConfigError("duplication must be at least 1");
}

namespace {

struct GridPoint {
    int array, b_cell, offset, b_in, b_w;
};

HwConfig point_config(const SweepSpec& spec, const GridPoint& g) {
    HwConfig hw = spec.base;
    hw.array.rows = g.array;
    hw.array.cols = g.array;
    hw.array.active_rows_per_cycle = g.array;
    hw.precision.b_in = g.b_in;
    hw.precision.b_w = g.b_w;
    hw.precision.b_cell = g.b_cell;

    double g_off = kDefaultGOff, g_on = kDefaultGOn, s_off = 0.0, s_on = 0.0;
    if (!spec.base.array.states.empty()) {
        const MemState& lo = spec.base.array.states.front();
        const MemState& hi = spec.base.array.states.back();
        g_off = lo.mean;
        g_on = hi.mean;
        s_off = lo.mean > 0 ? lo.sigma / lo.mean : 0.0;
        s_on = hi.mean > 0 ? hi.sigma / hi.mean : 0.0;
    }
    hw.array.states = make_linear_states(g.b_cell, g_off, g_on, s_off, s_on);

    const int lossless =
        required_adc_bits(hw.array.active_rows_per_cycle, hw.precision.p_dac, g.b_cell);
    hw.p_adc = std::max(1, lossless + g.offset);
    return hw;
}

std::string hash_point(const GridPoint& g, int p_adc) {
    const std::uint64_t h = mix_seed({static_cast<std::uint64_t>(g.array),
                                      static_cast<std::uint64_t>(g.b_cell),
                                      static_cast<std::uint64_t>(p_adc),
                                      static_cast<std::uint64_t>(g.b_in),
                                      static_cast<std::uint64_t>(g.b_w)});
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace

std::size_t SweepSpec::grid_size() const {
    return array_sizes.size() * b_cells.size() * p_adc_offsets.size() * precisions.size();
}

std::vector<DesignPoint> run_sweep(const SweepSpec& spec, const Model& model, const MatD& eval_x,
                                   const VecI& eval_y, const CoefficientTable& coeffs,
                                   int threads) {
    spec.validate();
    model.validate();
    coeffs.validate();
    if (threads < 1) throw ConfigError("threads must be at least 1");

    std::vector<GridPoint> grid;
    for (int a : spec.array_sizes)
        for (int bc : spec.b_cells)
            for (int off : spec.p_adc_offsets)
                for (auto [bi, bw] : spec.precisions) grid.push_back({a, bc, off, bi, bw});

    std::vector<DesignPoint> out(grid.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= grid.size()) return;
            const GridPoint& g = grid[i];
            DesignPoint& p = out[i];
            p.array = g.array;
            p.b_cell = g.b_cell;
            p.b_in = g.b_in;
            p.b_w = g.b_w;
            try {
                HwConfig hw = point_config(spec, g);
                p.p_adc = hw.p_adc;
                p.config_hash = hash_point(g, hw.p_adc);
                std::vector<double> accs;
                for (int s = 0; s < spec.noise_seeds; ++s) {
                    HwConfig run = hw;
                    run.seed = spec.base.seed + static_cast<std::uint64_t>(s);
                    PreparedModel pm = prepare_model(model, run);
                    accs.push_back(evaluate_accuracy(pm, eval_x, eval_y));
                }
                std::sort(accs.begin(), accs.end());
                p.accuracy = accs[accs.size() / 2];
                Trace tr = collect_trace(model, hw);
                PpaReport rep = estimate(tr, coeffs, spec.duplication);
                p.tops_w = rep.tops_per_w;
                p.tops_mm2 = rep.tops_per_mm2;
                p.fps = rep.fps;
            } catch (const std::exception& e) {
                p.failed = true;
                p.error = e.what();
            }
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::vector<std::vector<double>> objs;
    std::vector<int> ok;
    for (size_t i = 0; i < out.size(); ++i)
        if (!out[i].failed) {
            ok.push_back(static_cast<int>(i));
            objs.push_back({out[i].accuracy, out[i].tops_w});
        }
    if (!objs.empty())
        for (int idx : pareto_front(objs)) out[ok[idx]].pareto = true;
    return out;
}

void save_sweep_csv(const std::vector<DesignPoint>& points, const std::string& path) {
    CsvWriter w(path);
    w.row({"config_hash", "array", "b_cell", "p_adc", "acc", "tops_w", "tops_mm2", "fps",
           "pareto_flag"});
    for (const auto& p : points) {
        if (p.failed) {
            w.row({p.config_hash, std::to_string(p.array), std::to_string(p.b_cell),
                   std::to_string(p.p_adc), "nan", "nan", "nan", "nan", "0"});
            continue;
        }
        w.row({p.config_hash, std::to_string(p.array), std::to_string(p.b_cell),
               std::to_string(p.p_adc), fmt_double(p.accuracy), fmt_double(p.tops_w),
               fmt_double(p.tops_mm2), fmt_double(p.fps), p.pareto ? "1" : "0"});
    }
}

}  // namespace cimsim
