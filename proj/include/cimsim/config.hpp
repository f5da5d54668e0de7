#pragma once

#include <string>

#include "cimsim/analysis.hpp"
#include "cimsim/net.hpp"

namespace cimsim {

// Fully resolved run configuration: every default applied, "auto" ADC
// widths replaced by the lossless minimum, relative paths anchored at the
// config file. Loading the echoed copy reproduces it byte for byte.
struct RunConfig {
    std::string model_dir;
    std::string dataset_dir;
    std::string split = "eval";
    std::string output_dir;
    std::string mem_states;    // empty = synthetic linear ladder
    std::string output_noise;  // circuit-mode table
    std::string coefficients;  // empty = built-in defaults
    HwConfig hw;
    int duplication = 1;
    bool write_taps = false;
};

struct SweepConfig {
    RunConfig base;
    SweepSpec spec;
};

RunConfig load_run_config(const std::string& path);
SweepConfig load_sweep_config(const std::string& path);

// Canonical echo of the resolved config.
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace cimsim
