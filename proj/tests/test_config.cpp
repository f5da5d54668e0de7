#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cimsim/config.hpp"
#include "cimsim/crossbar.hpp"
#include "cimsim/errors.hpp"

using namespace cimsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("cimsim_cfg_" + std::to_string(::getpid()) + "_" +
                std::to_string(counter()++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::string file(const std::string& name, const std::string& body) const {
        const fs::path p = path / name;
        std::ofstream(p) << body;
        return p.string();
    }
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const char* kTwoStates = "state,mean,sigma\n0,2.5e-5,0\n1,3.33e-4,0\n";

}  // namespace

TEST_CASE("minimal config gets every default") {
    TempDir dir;
    const std::string path = dir.file("run.json", "{\"model\": \"m\"}");
    const RunConfig cfg = load_run_config(path);

    CHECK(cfg.model_dir == (dir.path / "m").string());
    CHECK(cfg.dataset_dir.empty());
    CHECK(cfg.split == "eval");
    CHECK(cfg.hw.precision.b_in == 8);
    CHECK(cfg.hw.precision.b_w == 8);
    CHECK(cfg.hw.precision.b_cell == 1);
    CHECK(cfg.hw.precision.p_dac == 1);
    CHECK(cfg.hw.array.rows == 128);
    CHECK(cfg.hw.array.cols == 128);
    CHECK(cfg.hw.array.active_rows_per_cycle == 128);
    CHECK(cfg.hw.array.dummy_column);
    CHECK(cfg.hw.array.states.size() == 2);
    CHECK(cfg.hw.p_adc == required_adc_bits(128, 1, 1));  // auto
    CHECK(cfg.hw.noise.mode == NoiseMode::None);
    CHECK(cfg.hw.seed == 1);
    CHECK(cfg.hw.threads == 1);
    CHECK(cfg.duplication == 1);
    CHECK(!cfg.write_taps);
    // default output dir resolves against the config location
    CHECK(cfg.output_dir == (dir.path / "out").string());
}

TEST_CASE("relative paths anchor at the config file, absolute pass through") {
    TempDir dir;
    fs::create_directories(dir.path / "sub");
    std::ofstream(dir.path / "sub" / "states.csv") << kTwoStates;
    const std::string path = dir.file(
        "run.json",
        "{\"model\": \"sub/m\", \"dataset\": \"/abs/data\", \"output\": \"o\","
        " \"array\": {\"mem_states\": \"sub/states.csv\"}}");
    const RunConfig cfg = load_run_config(path);
    CHECK(cfg.model_dir == (dir.path / "sub" / "m").string());
    CHECK(cfg.dataset_dir == "/abs/data");
    CHECK(cfg.output_dir == (dir.path / "o").string());
    CHECK(cfg.mem_states == (dir.path / "sub" / "states.csv").string());
    CHECK(cfg.hw.array.states[1].mean == doctest::Approx(3.33e-4));
}

TEST_CASE("device and circuit noise cannot be combined") {
    TempDir dir;
    const std::string path = dir.file(
        "run.json",
        "{\"noise\": {\"device\": {\"saf\": {\"p_sa0\": 0.01}},"
        " \"circuit\": {\"output_noise\": \"n.csv\"}}}");
    CHECK_THROWS_WITH_AS(load_run_config(path),
                         "noise: device and circuit modes are exclusive", ConfigError);
}

TEST_CASE("device noise requires a state ladder file") {
    TempDir dir;
    SUBCASE("missing field") {
        const std::string path =
            dir.file("run.json", "{\"noise\": {\"device\": {\"saf\": {\"p_sa0\": 0.01}}}}");
        CHECK_THROWS_WITH_AS(load_run_config(path),
                             "array.mem_states is required in device noise mode", ConfigError);
    }
    SUBCASE("missing file is named") {
        const std::string path = dir.file(
            "run.json",
            "{\"array\": {\"mem_states\": \"ghost.csv\"},"
            " \"noise\": {\"device\": {\"saf\": {\"p_sa0\": 0.01}}}}");
        try {
            load_run_config(path);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("array.mem_states") != std::string::npos);
            CHECK(std::string(e.what()).find("ghost.csv") != std::string::npos);
        }
    }
    SUBCASE("state count must match b_cell") {
        dir.file("states.csv", kTwoStates);
        const std::string path = dir.file(
            "run.json",
            "{\"precision\": {\"b_cell\": 2}, \"array\": {\"mem_states\": \"states.csv\"}}");
        try {
            load_run_config(path);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("2 states") != std::string::npos);
            CHECK(std::string(e.what()).find("b_cell=2") != std::string::npos);
        }
    }
}

TEST_CASE("adc accepts auto or an explicit positive width") {
    TempDir dir;
    CHECK(load_run_config(dir.file("a.json", "{\"adc\": \"auto\"}")).hw.p_adc == 7);
    CHECK(load_run_config(dir.file("b.json", "{\"adc\": 5}")).hw.p_adc == 5);
    CHECK_THROWS_AS(load_run_config(dir.file("c.json", "{\"adc\": 0}")), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("d.json", "{\"adc\": \"seven\"}")), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("e.json", "{\"adc\": 2.5}")), ConfigError);
    // auto tracks the active row count, not the physical row count
    const RunConfig cfg = load_run_config(
        dir.file("f.json", "{\"array\": {\"rows\": 128, \"active_rows\": 8}}"));
    CHECK(cfg.hw.p_adc == required_adc_bits(8, 1, 1));
}

TEST_CASE("circuit mode loads the output-noise table") {
    TempDir dir;
    dir.file("noise.csv", "level,mean,std\n0,0,0.4\n");
    const RunConfig cfg = load_run_config(dir.file(
        "run.json", "{\"noise\": {\"circuit\": {\"output_noise\": \"noise.csv\"}}}"));
    CHECK(cfg.hw.noise.mode == NoiseMode::Circuit);
    CHECK(cfg.hw.noise.circuit.uniform());
    CHECK(cfg.hw.noise.circuit.rows[0].std == doctest::Approx(0.4));

    CHECK_THROWS_AS(load_run_config(dir.file("bad.json",
                                             "{\"noise\": {\"circuit\": {}}}")),
                    ConfigError);
    CHECK_THROWS_AS(
        load_run_config(dir.file(
            "gone.json", "{\"noise\": {\"circuit\": {\"output_noise\": \"ghost.csv\"}}}")),
        ConfigError);
}

TEST_CASE("CIMSIM_OUT supplies the output dir when the config omits it") {
    TempDir dir;
    const std::string path = dir.file("run.json", "{}");
    ::setenv("CIMSIM_OUT", "/env/results", 1);
    CHECK(load_run_config(path).output_dir == "/env/results");
    ::setenv("CIMSIM_OUT", "rel_results", 1);
    CHECK(load_run_config(path).output_dir == (dir.path / "rel_results").string());
    ::unsetenv("CIMSIM_OUT");
    CHECK(load_run_config(path).output_dir == (dir.path / "out").string());
    // an explicit output wins over the environment
    ::setenv("CIMSIM_OUT", "/env/results", 1);
    CHECK(load_run_config(dir.file("o.json", "{\"output\": \"mine\"}")).output_dir ==
          (dir.path / "mine").string());
    ::unsetenv("CIMSIM_OUT");
}

TEST_CASE("echoed config is a byte-identical fixpoint") {
    TempDir dir;
    dir.file("states.csv", kTwoStates);
    dir.file("noise.csv", "level,mean,std\n0,0,0.4\n");
    const std::string path = dir.file(
        "run.json",
        "{\"model\": \"m\", \"dataset\": \"d\", \"split\": \"train\", \"seed\": 7,"
        " \"threads\": 2, \"duplication\": 3, \"taps\": true,"
        " \"precision\": {\"b_in\": 6, \"b_w\": 7, \"b_cell\": 1, \"p_dac\": 2},"
        " \"array\": {\"rows\": 64, \"cols\": 32, \"active_rows\": 16,"
        "  \"domain\": \"charge\", \"dummy_column\": false, \"mem_states\": \"states.csv\"},"
        " \"adc\": \"auto\","
        " \"noise\": {\"device\": {\"saf\": {\"p_sa0\": 0.0175, \"p_sa1\": 0.09},"
        "  \"drift\": {\"t\": 1e4, \"t0\": 1.0, \"v\": 0.03, \"mode\": \"toward_gmin\"}}}}");
    const RunConfig cfg = load_run_config(path);
    CHECK(cfg.hw.p_adc == required_adc_bits(16, 2, 1));
    CHECK(cfg.hw.array.domain == Domain::Charge);
    REQUIRE(cfg.hw.noise.device.drift.has_value());
    CHECK(cfg.hw.noise.device.drift->mode == DriftMode::TowardGmin);

    const std::string echo1 = (dir.path / "echo1.json").string();
    const std::string echo2 = (dir.path / "echo2.json").string();
    save_run_config(cfg, echo1);
    const RunConfig cfg2 = load_run_config(echo1);
    save_run_config(cfg2, echo2);
    CHECK(slurp(echo1) == slurp(echo2));
    CHECK(cfg2.hw.seed == 7);
    CHECK(cfg2.hw.noise.device.saf.p_sa1 == doctest::Approx(0.09));
    CHECK(cfg2.hw.noise.device.drift->t == doctest::Approx(1e4));
    CHECK(cfg2.write_taps);

    // circuit-mode configs round-trip the same way
    const RunConfig circ = load_run_config(dir.file(
        "circ.json", "{\"noise\": {\"circuit\": {\"output_noise\": \"noise.csv\"}}}"));
    save_run_config(circ, echo1);
    save_run_config(load_run_config(echo1), echo2);
    CHECK(slurp(echo1) == slurp(echo2));
}

TEST_CASE("malformed or invalid configs are rejected") {
    TempDir dir;
    CHECK_THROWS_AS(load_run_config((dir.path / "ghost.json").string()), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("junk.json", "{not json")), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("dom.json",
                                             "{\"array\": {\"domain\": \"voltage\"}}")),
                    ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("thr.json", "{\"threads\": 0}")), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("dup.json", "{\"duplication\": 0}")), ConfigError);
    CHECK_THROWS_AS(load_run_config(dir.file("drift.json",
                                             "{\"array\": {\"mem_states\": \"s\"},"
                                             " \"noise\": {\"device\": {\"drift\":"
                                             " {\"mode\": \"sideways\"}}}}")),
                    ConfigError);
    // rows not coverable by whole sub-cycles
    CHECK_THROWS_AS(load_run_config(dir.file("rows.json",
                                             "{\"array\": {\"rows\": 100, \"active_rows\": 7}}")),
                    ConfigError);
}

TEST_CASE("sweep config: grid axes with base-config fallbacks") {
    TempDir dir;
    const std::string path = dir.file(
        "sweep.json",
        "{\"model\": \"m\", \"dataset\": \"d\", \"seed\": 9,"
        " \"precision\": {\"b_in\": 6, \"b_w\": 6, \"b_cell\": 2},"
        " \"sweep\": {\"arrays\": [32, 64], \"p_adc_offsets\": [0, -1],"
        "  \"noise_seeds\": 5}}");
    const SweepConfig sc = load_sweep_config(path);
    CHECK(sc.spec.array_sizes == std::vector<int>{32, 64});
    CHECK(sc.spec.b_cells == std::vector<int>{2});  // from base precision
    CHECK(sc.spec.p_adc_offsets == std::vector<int>{0, -1});
    REQUIRE(sc.spec.precisions.size() == 1);
    CHECK(sc.spec.precisions[0] == std::pair<int, int>{6, 6});
    CHECK(sc.spec.noise_seeds == 5);
    CHECK(sc.spec.base.seed == 9);
    CHECK(sc.spec.grid_size() == 4);

    CHECK_THROWS_WITH_AS(load_sweep_config(dir.file("nosweep.json", "{\"model\": \"m\"}")),
                         "sweep config needs a \"sweep\" section", ConfigError);
    CHECK_THROWS_AS(load_sweep_config(dir.file("empty.json",
                                               "{\"sweep\": {\"arrays\": []}}")),
                    ConfigError);
    CHECK_THROWS_AS(load_sweep_config(dir.file("pos.json",
                                               "{\"sweep\": {\"arrays\": [32],"
                                               " \"p_adc_offsets\": [1]}}")),
                    ConfigError);
    const std::string prec = dir.file(
        "prec.json", "{\"sweep\": {\"arrays\": [32], \"precisions\": [[4, 4], [8, 8]]}}");
    CHECK(load_sweep_config(prec).spec.precisions.size() == 2);
}
