#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cimsim/net.hpp"

namespace cimsim {

// Event and instance counts for one layer. Event counts are per input
// sample; instance counts describe the hardware allocated to the layer.
// Everything here is derived from shapes and the hardware config alone —
// collecting a trace never runs the noisy engine.
struct LayerTrace {
    std::string name;
    Engine engine = Engine::Digital;

    // ACIM geometry
    int row_tiles = 0;
    int col_tiles = 0;
    int n_in = 0;        // input bit cycles per conversion sweep
    int sub_cycles = 0;  // active-row serialization factor
    int p_adc = 0;       // resolved ADC width
    std::int64_t spatial = 0;  // conv output positions per sample (1 for dense)

    // per-sample event counts
    std::int64_t adc_conversions = 0;
    std::int64_t row_activations = 0;
    std::int64_t adder_bit_ops = 0;
    std::int64_t buffer_bytes = 0;
    std::int64_t interconnect_bytes = 0;
    std::int64_t dcim_macs = 0;
    std::int64_t macs = 0;           // logical multiply-accumulates
    std::int64_t analog_cycles = 0;  // temporal cycles; tiles run in parallel
    std::int64_t dcim_cycles = 0;    // bit-serial digital cycles

    // hardware instance counts
    std::int64_t adc_instances = 0;
    std::int64_t row_driver_instances = 0;
    std::int64_t adder_bit_instances = 0;
    std::int64_t buffer_capacity_bytes = 0;
    std::int64_t dcim_mac_units = 0;
};

struct Trace {
    std::vector<LayerTrace> layers;

    std::int64_t total_adc_conversions() const;
    std::int64_t total_macs() const;
};

struct Coefficient {
    double energy_pj = 0.0;
    double latency_ns = 0.0;
    double area_um2 = 0.0;
};

// Per-component cost table. ADC entries are keyed by bit width; every width
// that appears in a trace must be present. Values are user-supplied; the
// defaults shipped here are illustrative order-of-magnitude numbers, not a
// technology library.
struct CoefficientTable {
    std::map<int, Coefficient> adc;  // by bit width
    Coefficient row_activation;
    Coefficient adder_bit;
    Coefficient buffer_byte;
    Coefficient interconnect_byte;
    Coefficient dcim_mac;

    const Coefficient& adc_for(int bits) const;  // missing width -> ConfigError
    void validate() const;  // all values >= 0; ADC columns monotone in width
};

CoefficientTable default_coefficients();
CoefficientTable load_coefficients_csv(const std::string& path);
void save_coefficients_csv(const CoefficientTable& t, const std::string& path);

struct ComponentShare {
    std::string component;
    double energy_j = 0.0;
    double fraction = 0.0;  // of total energy
};

struct PpaReport {
    double energy_j = 0.0;         // per input sample
    double stage_latency_s = 0.0;  // slowest pipeline stage (issue interval)
    double latency_s = 0.0;        // one sample through all stages
    double area_mm2 = 0.0;
    double tops = 0.0;
    double tops_per_w = 0.0;
    double tops_per_mm2 = 0.0;
    double fps = 0.0;
    int stages = 0;
    int duplication = 1;
    bool degenerate = false;  // zero energy or zero latency
    std::vector<ComponentShare> breakdown;
};

// Count events and instances for every layer of the model under the given
// hardware config. An empty model yields an empty trace.
Trace collect_trace(const Model& model, const HwConfig& hw);

// Fold a trace against a coefficient table. `duplication` is the number of
// parallel accelerator copies; it scales area and throughput but leaves the
// efficiency ratios untouched.
PpaReport estimate(const Trace& trace, const CoefficientTable& coeffs, int duplication = 1);

void save_trace_csv(const Trace& trace, const std::string& path);
void save_report_csv(const PpaReport& report, const std::string& path);
std::string format_report(const PpaReport& report);

}  // namespace cimsim
