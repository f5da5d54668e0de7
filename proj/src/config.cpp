#include "cimsim/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cimsim/crossbar.hpp"
#include "cimsim/errors.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace cimsim {

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

std::string resolve_path(const std::string& p, const fs::path& anchor) {
    if (p.empty()) return p;
    fs::path fp(p);
    if (fp.is_relative()) fp = anchor / fp;
    return fp.lexically_normal().string();
}

DriftMode drift_mode_from(const std::string& s) {
    if (s == "random") return DriftMode::Random;
    if (s == "toward_gmax") return DriftMode::TowardGmax;
    if (s == "toward_gmin") return DriftMode::TowardGmin;
    throw ConfigError("noise.device.drift.mode: unknown mode '" + s + "'");
}

std::string drift_mode_name(DriftMode m) {
    switch (m) {
        case DriftMode::Random: return "random";
        case DriftMode::TowardGmax: return "toward_gmax";
        default: return "toward_gmin";
    }
}

RunConfig parse_run(const json& j, const fs::path& anchor) {
    RunConfig cfg;
    try {
        cfg.model_dir = resolve_path(j.value("model", ""), anchor);
        cfg.dataset_dir = resolve_path(j.value("dataset", ""), anchor);
        cfg.split = j.value("split", "eval");
        cfg.output_dir = j.value("output", "");
        cfg.coefficients = resolve_path(j.value("coefficients", ""), anchor);
        cfg.duplication = j.value("duplication", 1);
        cfg.write_taps = j.value("taps", false);
        cfg.hw.seed = j.value("seed", std::uint64_t{1});
        cfg.hw.threads = j.value("threads", 1);

        if (j.contains("precision")) {
            const json& p = j.at("precision");
            cfg.hw.precision.b_in = p.value("b_in", 8);
            cfg.hw.precision.b_w = p.value("b_w", 8);
            cfg.hw.precision.b_cell = p.value("b_cell", 1);
            cfg.hw.precision.p_dac = p.value("p_dac", 1);
        }

        if (j.contains("array")) {
            const json& a = j.at("array");
            cfg.hw.array.rows = a.value("rows", 128);
            cfg.hw.array.cols = a.value("cols", 128);
            cfg.hw.array.active_rows_per_cycle = a.value("active_rows", cfg.hw.array.rows);
            const std::string dom = a.value("domain", "current");
            if (dom == "current")
                cfg.hw.array.domain = Domain::Current;
            else if (dom == "charge")
                cfg.hw.array.domain = Domain::Charge;
            else
                throw ConfigError("array.domain must be 'current' or 'charge', got '" + dom + "'");
            cfg.hw.array.dummy_column = a.value("dummy_column", true);
            cfg.mem_states = resolve_path(a.value("mem_states", ""), anchor);
        } else {
            cfg.hw.array.active_rows_per_cycle = cfg.hw.array.rows;
        }

        if (j.contains("noise")) {
            const json& n = j.at("noise");
            const bool dev = n.contains("device");
            const bool cir = n.contains("circuit");
            if (dev && cir) throw ConfigError("noise: device and circuit modes are exclusive");
            if (dev) {
                cfg.hw.noise.mode = NoiseMode::Device;
                const json& d = n.at("device");
                if (d.contains("saf")) {
                    cfg.hw.noise.device.saf.p_sa0 = d.at("saf").value("p_sa0", 0.0);
                    cfg.hw.noise.device.saf.p_sa1 = d.at("saf").value("p_sa1", 0.0);
                }
                if (d.contains("drift")) {
                    DriftSpec ds;
                    ds.t = d.at("drift").value("t", 1.0);
                    ds.t0 = d.at("drift").value("t0", 1.0);
                    ds.v = d.at("drift").value("v", 0.0);
                    ds.mode = drift_mode_from(d.at("drift").value("mode", "random"));
                    cfg.hw.noise.device.drift = ds;
                }
            } else if (cir) {
                cfg.hw.noise.mode = NoiseMode::Circuit;
                cfg.output_noise =
                    resolve_path(n.at("circuit").value("output_noise", ""), anchor);
                if (cfg.output_noise.empty())
                    throw ConfigError("noise.circuit requires output_noise");
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    // device-expert runs take their per-state statistics from the ladder file
    if (cfg.hw.noise.mode == NoiseMode::Device && cfg.mem_states.empty())
        throw ConfigError("array.mem_states is required in device noise mode");
    if (!cfg.mem_states.empty()) {
        if (!fs::exists(cfg.mem_states))
            throw ConfigError("array.mem_states: file not found: " + cfg.mem_states);
        cfg.hw.array.states = load_mem_states_csv(cfg.mem_states);
        const size_t want = size_t{1} << cfg.hw.precision.b_cell;
        if (cfg.hw.array.states.size() != want)
            throw ConfigError("array.mem_states: " + std::to_string(cfg.hw.array.states.size()) +
                              " states but b_cell=" + std::to_string(cfg.hw.precision.b_cell) +
                              " needs " + std::to_string(want));
    } else {
        cfg.hw.array.states = make_linear_states(cfg.hw.precision.b_cell);
    }
    if (cfg.hw.noise.mode == NoiseMode::Circuit) {
        if (!fs::exists(cfg.output_noise))
            throw ConfigError("noise.circuit.output_noise: file not found: " + cfg.output_noise);
        cfg.hw.noise.circuit = load_output_noise_csv(cfg.output_noise);
    }
    if (!cfg.coefficients.empty() && !fs::exists(cfg.coefficients))
        throw ConfigError("coefficients: file not found: " + cfg.coefficients);

    // adc: "auto" or an explicit width
    cfg.hw.p_adc = 0;
    if (j.contains("adc")) {
        const json& a = j.at("adc");
        if (a.is_string()) {
            if (a.get<std::string>() != "auto")
                throw ConfigError("adc must be \"auto\" or an integer");
        } else if (a.is_number_integer()) {
            cfg.hw.p_adc = a.get<int>();
            if (cfg.hw.p_adc < 1) throw ConfigError("adc width must be positive");
        } else {
            throw ConfigError("adc must be \"auto\" or an integer");
        }
    }
    if (cfg.hw.p_adc == 0)
        cfg.hw.p_adc = required_adc_bits(cfg.hw.array.active_rows_per_cycle,
                                         cfg.hw.precision.p_dac, cfg.hw.precision.b_cell);

    if (cfg.output_dir.empty()) {
        const char* env = std::getenv("CIMSIM_OUT");
        cfg.output_dir = env && *env ? env : "out";
    }
    cfg.output_dir = resolve_path(cfg.output_dir, anchor);

    cfg.hw.precision.validate();
    cfg.hw.array.validate();
    cfg.hw.noise.validate();
    if (cfg.hw.threads < 1) throw ConfigError("threads must be at least 1");
    if (cfg.duplication < 1) throw ConfigError("duplication must be at least 1");
    return cfg;
}

}  // namespace

RunConfig load_run_config(const std::string& path) {
    const json j = parse_file(path);
    return parse_run(j, fs::absolute(fs::path(path)).parent_path());
}

SweepConfig load_sweep_config(const std::string& path) {
    const json j = parse_file(path);
    SweepConfig sc;
    sc.base = parse_run(j, fs::absolute(fs::path(path)).parent_path());
    if (!j.contains("sweep")) throw ConfigError("sweep config needs a \"sweep\" section");
    try {
        const json& s = j.at("sweep");
        sc.spec.array_sizes = s.value("arrays", std::vector<int>{});
        sc.spec.b_cells = s.value("b_cells", std::vector<int>{sc.base.hw.precision.b_cell});
        sc.spec.p_adc_offsets = s.value("p_adc_offsets", std::vector<int>{0});
        if (s.contains("precisions"))
            for (const auto& pr : s.at("precisions"))
                sc.spec.precisions.emplace_back(pr.at(0).get<int>(), pr.at(1).get<int>());
        else
            sc.spec.precisions = {{sc.base.hw.precision.b_in, sc.base.hw.precision.b_w}};
        sc.spec.noise_seeds = s.value("noise_seeds", 3);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep config: ") + e.what());
    }
    sc.spec.base = sc.base.hw;
    sc.spec.duplication = sc.base.duplication;
    sc.spec.validate();
    return sc;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
    ordered_json j;
    j["model"] = cfg.model_dir;
    j["dataset"] = cfg.dataset_dir;
    j["split"] = cfg.split;
    j["output"] = cfg.output_dir;
    j["seed"] = cfg.hw.seed;
    j["threads"] = cfg.hw.threads;
    j["duplication"] = cfg.duplication;
    j["taps"] = cfg.write_taps;
    j["precision"] = {{"b_in", cfg.hw.precision.b_in},
                      {"b_w", cfg.hw.precision.b_w},
                      {"b_cell", cfg.hw.precision.b_cell},
                      {"p_dac", cfg.hw.precision.p_dac}};
    j["array"] = {{"rows", cfg.hw.array.rows},
                  {"cols", cfg.hw.array.cols},
                  {"active_rows", cfg.hw.array.active_rows_per_cycle},
                  {"domain", cfg.hw.array.domain == Domain::Current ? "current" : "charge"},
                  {"dummy_column", cfg.hw.array.dummy_column},
                  {"mem_states", cfg.mem_states}};
    j["adc"] = cfg.hw.p_adc;
    ordered_json noise = ordered_json::object();
    if (cfg.hw.noise.mode == NoiseMode::Device) {
        ordered_json dev;
        dev["saf"] = {{"p_sa0", cfg.hw.noise.device.saf.p_sa0},
                      {"p_sa1", cfg.hw.noise.device.saf.p_sa1}};
        if (cfg.hw.noise.device.drift) {
            const DriftSpec& d = *cfg.hw.noise.device.drift;
            dev["drift"] = {{"t", d.t}, {"t0", d.t0}, {"v", d.v},
                            {"mode", drift_mode_name(d.mode)}};
        }
        noise["device"] = dev;
    } else if (cfg.hw.noise.mode == NoiseMode::Circuit) {
        noise["circuit"] = {{"output_noise", cfg.output_noise}};
    }
    j["noise"] = noise;
    j["coefficients"] = cfg.coefficients;

    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace cimsim
