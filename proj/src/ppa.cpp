#include "cimsim/ppa.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "cimsim/crossbar.hpp"
#include "cimsim/csv.hpp"
#include "cimsim/errors.hpp"
#include "cimsim/mapper.hpp"

namespace cimsim {

std::int64_t Trace::total_adc_conversions() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.adc_conversions;
    return n;
}

std::int64_t Trace::total_macs() const {
    std::int64_t n = 0;
    for (const auto& l : layers) n += l.macs;
    return n;
}

namespace {

std::int64_t numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

// Geometry-only tiling: same packing rule as the weight mapper, without
// touching weight values.
LayerTrace acim_counts(const LayerNode& l, const HwConfig& hw, int n_rows, int m_cols,
                       std::int64_t spatial) {
    const PrecisionConfig& cfg = hw.precision;
    const int R = hw.array.rows, C = hw.array.cols;
    const int n_cell = cfg.n_cell();
    const int weights_per_tile = C / n_cell;
    if (weights_per_tile < 1)
        throw TraceError(l.name + ": a " + std::to_string(n_cell) +
                         "-cell weight does not fit a " + std::to_string(C) + "-column tile");

    LayerTrace t;
    t.name = l.name;
    t.engine = Engine::ACIM;
    t.row_tiles = (n_rows + R - 1) / R;
    t.col_tiles = (m_cols + weights_per_tile - 1) / weights_per_tile;
    t.n_in = cfg.n_in();
    t.sub_cycles = hw.array.sub_cycles();
    t.p_adc = hw.p_adc > 0 ? hw.p_adc
                           : required_adc_bits(hw.array.active_rows_per_cycle, cfg.p_dac,
                                               cfg.b_cell);
    t.spatial = spatial;

    const std::int64_t sweeps = static_cast<std::int64_t>(t.n_in) * spatial;
    t.adc_conversions = static_cast<std::int64_t>(t.col_tiles) * C * t.row_tiles * t.sub_cycles *
                        sweeps;
    // every scheduled row is driven once per sweep; sub-cycling spreads the
    // same activations over time
    t.row_activations = static_cast<std::int64_t>(t.col_tiles) * t.row_tiles * R * sweeps;
    t.adder_bit_ops = t.adc_conversions * t.p_adc;
    t.buffer_bytes = spatial * (static_cast<std::int64_t>(n_rows) + m_cols);
    t.interconnect_bytes = spatial * static_cast<std::int64_t>(m_cols);
    t.macs = spatial * static_cast<std::int64_t>(n_rows) * m_cols;
    t.analog_cycles = static_cast<std::int64_t>(t.sub_cycles) * sweeps;

    const std::int64_t arrays = static_cast<std::int64_t>(t.row_tiles) * t.col_tiles;
    t.adc_instances = arrays * C;
    t.row_driver_instances = arrays * R;
    t.adder_bit_instances = arrays * C * t.p_adc;
    t.dcim_mac_units = 0;
    return t;
}

}  // namespace

Trace collect_trace(const Model& model, const HwConfig& hw) {
    Trace trace;
    if (model.layers.empty()) return trace;
    hw.precision.validate();
    hw.array.validate();
    const auto shapes = layer_shapes(model);

    std::map<std::string, std::vector<int>> by_name;
    for (size_t i = 0; i < model.layers.size(); ++i) by_name[model.layers[i].name] = shapes[i];

    for (size_t i = 0; i < model.layers.size(); ++i) {
        const LayerNode& l = model.layers[i];
        const std::vector<int>& in_shape = i == 0 ? model.input_shape : shapes[i - 1];
        const std::vector<int>& out_shape = shapes[i];
        LayerTrace t;
        switch (l.kind) {
            case LayerKind::Linear:
                t = acim_counts(l, hw, l.in_features, l.out_features, 1);
                break;
            case LayerKind::Conv2D: {
                ConvGeometry g =
                    conv_geometry(in_shape[1], in_shape[2], l.k_h, l.k_w, l.stride, l.pad);
                t = acim_counts(l, hw, l.in_ch * l.k_h * l.k_w, l.out_ch,
                                static_cast<std::int64_t>(g.out_h) * g.out_w);
                break;
            }
            case LayerKind::DCIMMatmul: {
                const std::vector<int>& src = by_name.at(l.source);
                const std::int64_t n = in_shape[0], k = in_shape[1];
                const std::int64_t m = l.transpose_b ? src[0] : src[1];
                t.name = l.name;
                t.engine = Engine::DCIM;
                t.n_in = hw.precision.b_in;  // bit-serial input feed
                t.dcim_macs = n * k * m;
                t.macs = n * k * m;
                t.dcim_cycles = n * m * hw.precision.b_in;
                t.buffer_bytes = n * k + numel(src) + n * m;
                t.interconnect_bytes = n * m;
                t.dcim_mac_units = k;
                t.buffer_capacity_bytes = numel(in_shape) + numel(src) + numel(out_shape);
                break;
            }
            default:
                t.name = l.name;
                t.engine = Engine::Digital;
                break;
        }
        if (t.engine == Engine::ACIM)
            t.buffer_capacity_bytes = numel(in_shape) + numel(out_shape);
        trace.layers.push_back(std::move(t));
    }
    return trace;
}

const Coefficient& CoefficientTable::adc_for(int bits) const {
    auto it = adc.find(bits);
    if (it == adc.end())
        throw ConfigError("no ADC coefficient for " + std::to_string(bits) + " bits");
    return it->second;
}

void CoefficientTable::validate() const {
    auto check = [](const char* name, const Coefficient& c) {
        if (c.energy_pj < 0 || c.latency_ns < 0 || c.area_um2 < 0)
            throw ConfigError(std::string(name) + ": coefficients must be non-negative");
    };
    check("row_activation", row_activation);
    check("adder_bit", adder_bit);
    check("buffer_byte", buffer_byte);
    check("interconnect_byte", interconnect_byte);
    check("dcim_mac", dcim_mac);
    const Coefficient* prev = nullptr;
    for (const auto& [bits, c] : adc) {
        if (bits < 1) throw ConfigError("adc: bit width must be positive");
        check("adc", c);
        if (prev && (c.energy_pj < prev->energy_pj || c.latency_ns < prev->latency_ns ||
                     c.area_um2 < prev->area_um2))
            throw ConfigError("adc: coefficients must be monotone in bit width");
        prev = &c;
    }
}

CoefficientTable default_coefficients() {
    CoefficientTable t;
    // Illustrative 20-ish nm ballpark figures; successive-approximation ADC
    // cost grows with resolution, everything else is flat per event.
    for (int b = 1; b <= 16; ++b)
        t.adc[b] = {0.002 * std::pow(2.0, b) + 0.01 * b, 0.5 + 0.125 * b,
                    30.0 * std::pow(2.0, 0.5 * b)};
    t.row_activation = {0.01, 0.2, 0.5};
    t.adder_bit = {0.003, 0.05, 2.0};
    t.buffer_byte = {0.02, 0.1, 15.0};
    t.interconnect_byte = {0.05, 0.3, 1.0};
    t.dcim_mac = {0.04, 0.8, 25.0};
    return t;
}

CoefficientTable load_coefficients_csv(const std::string& path) {
    CsvTable csv = read_csv(path);
    const int ic = csv.col("component"), ip = csv.col("param");
    const int ie = csv.col("energy_pJ"), il = csv.col("latency_ns"), ia = csv.col("area_um2");
    CoefficientTable t;
    for (const auto& row : csv.rows) {
        Coefficient c{std::stod(row[ie]), std::stod(row[il]), std::stod(row[ia])};
        const std::string& name = row[ic];
        if (name == "adc")
            t.adc[std::stoi(row[ip])] = c;
        else if (name == "row_activation")
            t.row_activation = c;
        else if (name == "adder_bit")
            t.adder_bit = c;
        else if (name == "buffer_byte")
            t.buffer_byte = c;
        else if (name == "interconnect_byte")
            t.interconnect_byte = c;
        else if (name == "dcim_mac")
            t.dcim_mac = c;
        else
            throw ConfigError("unknown component '" + name + "' in " + path);
    }
    t.validate();
    return t;
}

void save_coefficients_csv(const CoefficientTable& t, const std::string& path) {
    CsvWriter w(path);
    w.row({"component", "param", "energy_pJ", "latency_ns", "area_um2"});
    auto put = [&](const std::string& name, const std::string& param, const Coefficient& c) {
        w.row({name, param, fmt_double(c.energy_pj), fmt_double(c.latency_ns),
               fmt_double(c.area_um2)});
    };
    for (const auto& [bits, c] : t.adc) put("adc", std::to_string(bits), c);
    put("row_activation", "", t.row_activation);
    put("adder_bit", "", t.adder_bit);
    put("buffer_byte", "", t.buffer_byte);
    put("interconnect_byte", "", t.interconnect_byte);
    put("dcim_mac", "", t.dcim_mac);
}

PpaReport estimate(const Trace& trace, const CoefficientTable& coeffs, int duplication) {
    if (duplication < 1) throw ConfigError("duplication must be at least 1");
    coeffs.validate();

    PpaReport r;
    r.duplication = duplication;
    // component order is fixed so breakdown rows are reproducible
    const char* names[6] = {"adc", "row_activation", "adder_bit",
                            "buffer", "interconnect", "dcim_mac"};
    double energy_pj[6] = {0, 0, 0, 0, 0, 0};
    double area_um2 = 0.0;
    double stage_max_ns = 0.0;
    std::int64_t macs = 0;

    for (const auto& l : trace.layers) {
        if (l.engine == Engine::Digital) continue;
        ++r.stages;
        macs += l.macs;
        double stage_ns = 0.0;
        if (l.engine == Engine::ACIM) {
            const Coefficient& adc = coeffs.adc_for(l.p_adc);
            energy_pj[0] += l.adc_conversions * adc.energy_pj;
            energy_pj[1] += l.row_activations * coeffs.row_activation.energy_pj;
            energy_pj[2] += l.adder_bit_ops * coeffs.adder_bit.energy_pj;
            stage_ns = l.analog_cycles * (coeffs.row_activation.latency_ns + adc.latency_ns +
                                          l.p_adc * coeffs.adder_bit.latency_ns);
            area_um2 += l.adc_instances * adc.area_um2 +
                        l.row_driver_instances * coeffs.row_activation.area_um2 +
                        l.adder_bit_instances * coeffs.adder_bit.area_um2;
        } else {
            energy_pj[5] += l.dcim_macs * coeffs.dcim_mac.energy_pj;
            stage_ns = l.dcim_cycles * coeffs.dcim_mac.latency_ns;
            area_um2 += l.dcim_mac_units * coeffs.dcim_mac.area_um2;
        }
        energy_pj[3] += l.buffer_bytes * coeffs.buffer_byte.energy_pj;
        energy_pj[4] += l.interconnect_bytes * coeffs.interconnect_byte.energy_pj;
        stage_ns += l.buffer_bytes * coeffs.buffer_byte.latency_ns +
                    l.interconnect_bytes * coeffs.interconnect_byte.latency_ns;
        area_um2 += l.buffer_capacity_bytes * coeffs.buffer_byte.area_um2 +
                    l.interconnect_bytes * coeffs.interconnect_byte.area_um2;
        stage_max_ns = std::max(stage_max_ns, stage_ns);
    }

    const double total_pj = std::accumulate(energy_pj, energy_pj + 6, 0.0);
    r.energy_j = total_pj * 1e-12;
    r.stage_latency_s = stage_max_ns * 1e-9;
    r.latency_s = r.stage_latency_s * r.stages;
    r.area_mm2 = area_um2 * 1e-6 * duplication;
    r.degenerate = total_pj <= 0.0 || stage_max_ns <= 0.0;

    for (int i = 0; i < 6; ++i) {
        ComponentShare s;
        s.component = names[i];
        s.energy_j = energy_pj[i] * 1e-12;
        s.fraction = total_pj > 0.0 ? energy_pj[i] / total_pj : 0.0;
        r.breakdown.push_back(s);
    }

    if (!r.degenerate) {
        r.fps = duplication / r.stage_latency_s;
        r.tops = 2.0 * static_cast<double>(macs) * r.fps * 1e-12;
        const double watts = r.energy_j * r.fps;
        r.tops_per_w = r.tops / watts;
        if (r.area_mm2 > 0.0) r.tops_per_mm2 = r.tops / r.area_mm2;
    }
    return r;
}

void save_trace_csv(const Trace& trace, const std::string& path) {
    CsvWriter w(path);
    w.row({"layer", "component", "count"});
    for (const auto& l : trace.layers) {
        auto put = [&](const std::string& comp, std::int64_t n) {
            w.row({l.name, comp, std::to_string(n)});
        };
        put("adc_conversions", l.adc_conversions);
        put("row_activations", l.row_activations);
        put("adder_bit_ops", l.adder_bit_ops);
        put("buffer_bytes", l.buffer_bytes);
        put("interconnect_bytes", l.interconnect_bytes);
        put("dcim_macs", l.dcim_macs);
        put("macs", l.macs);
        put("analog_cycles", l.analog_cycles);
        put("dcim_cycles", l.dcim_cycles);
    }
}

void save_report_csv(const PpaReport& r, const std::string& path) {
    CsvWriter w(path);
    w.row({"metric", "value"});
    w.row({"energy_J", fmt_double(r.energy_j)});
    w.row({"stage_latency_s", fmt_double(r.stage_latency_s)});
    w.row({"latency_s", fmt_double(r.latency_s)});
    w.row({"area_mm2", fmt_double(r.area_mm2)});
    w.row({"TOPS", fmt_double(r.tops)});
    w.row({"TOPS_per_W", fmt_double(r.tops_per_w)});
    w.row({"TOPS_per_mm2", fmt_double(r.tops_per_mm2)});
    w.row({"FPS", fmt_double(r.fps)});
    w.row({"stages", std::to_string(r.stages)});
    w.row({"duplication", std::to_string(r.duplication)});
    w.row({"degenerate", r.degenerate ? "1" : "0"});
    for (const auto& s : r.breakdown)
        w.row({"energy_fraction_" + s.component, fmt_double(s.fraction)});
}

std::string format_report(const PpaReport& r) {
    std::ostringstream os;
    os << "energy/sample  " << r.energy_j * 1e9 << " nJ\n"
       << "stage latency  " << r.stage_latency_s * 1e9 << " ns\n"
       << "image latency  " << r.latency_s * 1e9 << " ns  (" << r.stages << " stages)\n"
       << "area           " << r.area_mm2 << " mm2  (x" << r.duplication << ")\n"
       << "TOPS           " << r.tops << "\n"
       << "TOPS/W         " << r.tops_per_w << "\n"
       << "TOPS/mm2       " << r.tops_per_mm2 << "\n"
       << "FPS            " << r.fps << "\n";
    if (r.degenerate) os << "(degenerate: zero energy or latency)\n";
    os << "energy breakdown:\n";
    for (const auto& s : r.breakdown)
        os << "  " << s.component << "  " << s.fraction * 100.0 << "%\n";
    return os.str();
}

}  // namespace cimsim
