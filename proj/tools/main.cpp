// cimsim command line front end.
//
// Commands:
//   run          evaluate a model on crossbar hardware and report accuracy + PPA
//   sweep        grid design-space exploration, CSV with Pareto flags
//   analyze      post-process a taps/ directory into RMSE and ADC error tables
//   calibrate    recompute calibration ranges from a dataset split
//   gen-fixture  emit the built-in trainable fixture plus a runnable config
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cimsim/analysis.hpp"
#include "cimsim/config.hpp"
#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/fixture.hpp"
#include "cimsim/net.hpp"
#include "cimsim/ppa.hpp"

namespace fs = std::filesystem;
using namespace cimsim;

namespace {

std::string default_out() {
    const char* env = std::getenv("CIMSIM_OUT");
    return env && *env ? env : "out";
}

CsvWriter open_csv(const std::string& path, const std::string& header) {
    CsvWriter w(path);
    w.row({header});
    return w;
}

CoefficientTable coefficients_for(const RunConfig& cfg) {
    return cfg.coefficients.empty() ? default_coefficients()
                                    : load_coefficients_csv(cfg.coefficients);
}

void write_taps_dir(const InferenceResult& res, const TapRecorder& adc, const fs::path& dir) {
    fs::create_directories(dir);
    for (const LayerTap& tap : res.taps) {
        CsvWriter w = open_csv((dir / (tap.name + ".csv")).string(), "ideal,noisy");
        for (Eigen::Index i = 0; i < tap.ideal.data.size(); ++i)
            w.row({fmt_double(tap.ideal.data[i]), fmt_double(tap.noisy.data[i])});
    }
    CsvWriter w = open_csv((dir / "adc.csv").string(), "expected,observed");
    for (const auto& [expected, observed] : adc.taps)
        w.row({std::to_string(expected), std::to_string(observed)});
}

int cmd_run(const std::string& config_path, const std::string& out_override, int threads) {
    RunConfig cfg = load_run_config(config_path);
    if (!out_override.empty()) cfg.output_dir = fs::absolute(out_override).lexically_normal().string();
    if (threads > 0) cfg.hw.threads = threads;
    if (cfg.model_dir.empty()) throw ConfigError("model is required for run");
    if (cfg.dataset_dir.empty()) throw ConfigError("dataset is required for run");

    const Model model = load_model(cfg.model_dir);
    const Dataset data = load_dataset(cfg.dataset_dir, cfg.split);
    const CoefficientTable coeffs = coefficients_for(cfg);
    const PreparedModel pm = prepare_model(model, cfg.hw);

    const fs::path out(cfg.output_dir);
    fs::create_directories(out);
    save_run_config(cfg, (out / "config.json").string());

    TapRecorder adc;
    const InferenceResult res =
        run_inference(pm, data.x, true, cfg.write_taps ? &adc : nullptr);
    const double acc = accuracy_of(res.logits, data.y);
    const double acc_ideal = accuracy_of(res.ideal_logits, data.y);

    {
        CsvWriter w = open_csv((out / "accuracy.csv").string(), "metric,value");
        w.row({"samples", std::to_string(data.y.size())});
        w.row({"accuracy", fmt_double(acc)});
        w.row({"accuracy_ideal", fmt_double(acc_ideal)});
        for (const LayerTap& tap : res.taps) {
            double rmse;
            try {
                rmse = layer_rmse(tap.ideal, tap.noisy);
            } catch (const RmseUndefined&) {
                rmse = std::nan("");
            }
            w.row({"rmse_" + tap.name, fmt_double(rmse)});
        }
    }

    const Trace trace = collect_trace(model, cfg.hw);
    const PpaReport rep = estimate(trace, coeffs, cfg.duplication);
    save_trace_csv(trace, (out / "trace.csv").string());
    save_report_csv(rep, (out / "ppa.csv").string());
    if (cfg.write_taps) write_taps_dir(res, adc, out / "taps");

    std::cout << "samples " << data.y.size() << "  accuracy " << fmt_double(acc)
              << "  ideal " << fmt_double(acc_ideal) << "\n\n"
              << format_report(rep) << "results in " << out.string() << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out_override, int threads) {
    SweepConfig sc = load_sweep_config(config_path);
    if (!out_override.empty())
        sc.base.output_dir = fs::absolute(out_override).lexically_normal().string();
    if (sc.base.model_dir.empty()) throw ConfigError("model is required for sweep");
    if (sc.base.dataset_dir.empty()) throw ConfigError("dataset is required for sweep");
    const int workers = threads > 0 ? threads : sc.base.hw.threads;

    const Model model = load_model(sc.base.model_dir);
    const Dataset data = load_dataset(sc.base.dataset_dir, sc.base.split);
    const CoefficientTable coeffs = coefficients_for(sc.base);

    const std::vector<DesignPoint> points =
        run_sweep(sc.spec, model, data.x, data.y, coeffs, workers);

    const fs::path out(sc.base.output_dir);
    fs::create_directories(out);
    save_sweep_csv(points, (out / "sweep.csv").string());

    std::size_t failed = 0, pareto = 0;
    for (const DesignPoint& p : points) {
        failed += p.failed;
        pareto += p.pareto;
    }
    if (failed > 0) {
        CsvWriter w = open_csv((out / "sweep_errors.csv").string(), "config_hash,array,b_cell,p_adc,error");
        for (const DesignPoint& p : points) {
            if (!p.failed) continue;
            w.row({p.config_hash, std::to_string(p.array), std::to_string(p.b_cell),
                   std::to_string(p.p_adc), p.error});
        }
    }
    std::cout << "swept " << points.size() << " design points (" << failed << " failed), "
              << pareto << " on the Pareto front\nresults in " << out.string() << "\n";
    return 0;
}

int cmd_analyze(const std::string& taps_dir, const std::string& out_dir) {
    if (!fs::is_directory(taps_dir))
        throw ConfigError("taps: not a directory: " + taps_dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(taps_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path());
    if (files.empty()) throw ConfigError("taps: no .csv tap files in " + taps_dir);
    std::sort(files.begin(), files.end());

    const fs::path out(out_dir);
    fs::create_directories(out);
    bool have_adc = false;
    CsvWriter rmse_csv = open_csv((out / "rmse.csv").string(), "layer,rmse");
    for (const fs::path& file : files) {
        const CsvTable t = read_csv(file.string());
        if (file.stem() == "adc") {
            std::vector<std::pair<int, int>> taps;
            const int ce = t.col("expected"), co = t.col("observed");
            for (const auto& r : t.rows) taps.emplace_back(std::stoi(r[ce]), std::stoi(r[co]));
            const AdcErrorReport report = adc_error_rate(taps);
            save_error_report_csv(report, (out / "adc_error.csv").string());
            std::cout << "adc: " << taps.size() << " conversions, overall error rate "
                      << fmt_double(report.overall_rate()) << "\n";
            have_adc = true;
            continue;
        }
        const int ci = t.col("ideal"), cn = t.col("noisy");
        VecD ideal(t.rows.size()), noisy(t.rows.size());
        for (std::size_t i = 0; i < t.rows.size(); ++i) {
            ideal[static_cast<Eigen::Index>(i)] = std::stod(t.rows[i][ci]);
            noisy[static_cast<Eigen::Index>(i)] = std::stod(t.rows[i][cn]);
        }
        double rmse;
        try {
            rmse = layer_rmse(ideal, noisy);
        } catch (const RmseUndefined&) {
            rmse = std::nan("");
        }
        rmse_csv.row({file.stem().string(), fmt_double(rmse)});
        std::cout << file.stem().string() << ": rmse " << fmt_double(rmse) << "\n";
    }
    std::cout << "reports in " << out.string() << (have_adc ? " (rmse.csv, adc_error.csv)"
                                                            : " (rmse.csv)")
              << "\n";
    return 0;
}

int cmd_calibrate(const std::string& model_dir, const std::string& dataset_dir,
                  const std::string& split, const std::string& out_dir, double percentile) {
    if (!(percentile > 0.0 && percentile <= 1.0))
        throw ConfigError("percentile must be in (0, 1]");
    Model model = load_model(model_dir);
    const Dataset data = load_dataset(dataset_dir, split);
    const std::vector<Tensor> acts = float_activations(model, data.x);

    // Activations use a high percentile so one outlier cannot blow up the
    // scale; weights are exact and small, so plain max is right for them.
    const auto act_range = [&](const Tensor& t) {
        CalibrationHistogram hist;
        hist.add(t.data);
        return finalize_calibration(hist, CalibrationMethod::pct(percentile), 8, true)
            .params.top_value();
    };
    const auto weight_range = [](const MatD& w) {
        return std::max(w.cwiseAbs().maxCoeff(), 1e-12);
    };

    const fs::path out(out_dir);
    fs::create_directories(out);
    CsvWriter log = open_csv((out / "calibration.csv").string(), "layer,field,value");
    const auto set = [&](const std::string& layer, const std::string& field, double& slot,
                         double value) {
        slot = value;
        log.row({layer, field, fmt_double(value)});
    };

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        LayerNode& l = model.layers[i];
        switch (l.kind) {
            case LayerKind::Linear:
            case LayerKind::Conv2D:
                set(l.name, "w_range", l.w_range, weight_range(l.weights));
                set(l.name, "in_range", l.in_range, act_range(acts[i]));
                break;
            case LayerKind::LUTActivation:
                set(l.name, "in_range", l.in_range, act_range(acts[i]));
                set(l.name, "out_range", l.out_range, act_range(acts[i + 1]));
                break;
            case LayerKind::DCIMMatmul: {
                const int src = model.layer_index(l.source);
                if (src < 0) throw ConfigError(l.name + ": unknown source " + l.source);
                set(l.name, "in_range", l.in_range, act_range(acts[i]));
                set(l.name, "src_range", l.src_range,
                    act_range(acts[static_cast<std::size_t>(src) + 1]));
                set(l.name, "out_range", l.out_range, act_range(acts[i + 1]));
                break;
            }
            default:
                break;
        }
    }
    model.validate();
    save_model(model, out.string());
    std::cout << "calibrated " << model.layers.size() << " layers over " << data.y.size()
              << " samples; model written to " << out.string() << "\n";
    return 0;
}

int cmd_gen_fixture(const std::string& out_dir, std::uint64_t seed) {
    FixtureSpec spec;
    spec.seed = seed;
    gen_fixture(out_dir, spec);
    const fs::path out(out_dir);

    // Companion files so the emitted config runs as-is and flipping on
    // device noise needs no extra assets: a 1-bit ladder with 8% spread
    // per state, a uniform ADC output-noise table, and the default cost
    // coefficients.
    {
        const auto states = make_linear_states(1, kDefaultGOff, kDefaultGOn, 0.08, 0.08);
        CsvWriter w = open_csv((out / "mem_states.csv").string(), "state,mean,sigma");
        for (const MemState& s : states)
            w.row({std::to_string(s.level), fmt_double(s.mean), fmt_double(s.sigma)});
    }
    {
        CsvWriter w = open_csv((out / "output_noise.csv").string(), "level,mean,std");
        w.row({"0", "0", "0.4"});
    }
    save_coefficients_csv(default_coefficients(), (out / "coefficients.csv").string());

    RunConfig cfg;
    cfg.model_dir = fs::absolute(out).lexically_normal().string();
    cfg.dataset_dir = cfg.model_dir;
    cfg.output_dir = (fs::absolute(out) / "run_out").lexically_normal().string();
    cfg.mem_states = (fs::absolute(out) / "mem_states.csv").lexically_normal().string();
    cfg.coefficients = (fs::absolute(out) / "coefficients.csv").lexically_normal().string();
    cfg.hw.array.states = make_linear_states(cfg.hw.precision.b_cell);
    cfg.hw.p_adc = required_adc_bits(cfg.hw.array.active_rows_per_cycle,
                                     cfg.hw.precision.p_dac, cfg.hw.precision.b_cell);
    save_run_config(cfg, (out / "config.json").string());

    std::cout << "fixture written to " << out_dir << "\ntry: cimsim run -c "
              << (out / "config.json").string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"behavioral simulator for analog/digital compute-in-memory accelerators"};
    app.require_subcommand(1);

    std::string config_path, out_override, taps_dir, model_dir, dataset_dir;
    std::string split = "train";
    std::string analyze_out = default_out(), calib_out = default_out(), fixture_out;
    int threads = 0;
    double percentile = 0.9999;
    std::uint64_t seed = 42;

    CLI::App* run = app.add_subcommand("run", "evaluate a model and report accuracy + PPA");
    run->add_option("-c,--config", config_path, "run config JSON")->required();
    run->add_option("-o,--out", out_override, "output directory (overrides config)");
    run->add_option("-t,--threads", threads, "worker threads (results are thread-invariant)");

    CLI::App* sweep = app.add_subcommand("sweep", "design-space exploration over a config grid");
    sweep->add_option("-c,--config", config_path, "sweep config JSON")->required();
    sweep->add_option("-o,--out", out_override, "output directory (overrides config)");
    sweep->add_option("-t,--threads", threads, "worker threads (results are thread-invariant)");

    CLI::App* analyze = app.add_subcommand("analyze", "summarize a taps/ directory");
    analyze->add_option("--taps", taps_dir, "taps directory from a run with \"taps\": true")
        ->required();
    analyze->add_option("-o,--out", analyze_out, "output directory");

    CLI::App* calibrate =
        app.add_subcommand("calibrate", "recompute calibration ranges from a dataset");
    calibrate->add_option("-m,--model", model_dir, "model directory")->required();
    calibrate->add_option("-d,--dataset", dataset_dir, "dataset directory")->required();
    calibrate->add_option("-s,--split", split, "dataset split (default train)");
    calibrate->add_option("-o,--out", calib_out, "output model directory");
    calibrate->add_option("--percentile", percentile, "activation range percentile");

    CLI::App* fixture = app.add_subcommand("gen-fixture", "emit the built-in fixture + config");
    fixture->add_option("-o,--out", fixture_out, "output directory")->required();
    fixture->add_option("--seed", seed, "fixture RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (run->parsed()) return cmd_run(config_path, out_override, threads);
        if (sweep->parsed()) return cmd_sweep(config_path, out_override, threads);
        if (analyze->parsed()) return cmd_analyze(taps_dir, analyze_out);
        if (calibrate->parsed())
            return cmd_calibrate(model_dir, dataset_dir, split, calib_out, percentile);
        if (fixture->parsed()) return cmd_gen_fixture(fixture_out, seed);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
