// End-to-end checks of the cimsim executable: every command, the documented
// exit codes, and the on-disk outputs. The binary path comes from the build
// system via CIMSIM_BIN.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cimsim/csv.hpp"

using namespace cimsim;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        static int counter = 0;
        path = fs::temp_directory_path() /
               ("cimsim_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args) {
    const std::string cmd = std::string(CIMSIM_BIN) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    REQUIRE(status != -1);
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const fs::path& path, const std::string& body) {
    fs::create_directories(path.parent_path());
    std::ofstream(path) << body;
}

// accuracy.csv is metric,value rows
double metric(const fs::path& accuracy_csv, const std::string& name) {
    const CsvTable t = read_csv(accuracy_csv.string());
    for (const auto& r : t.rows)
        if (r[0] == name) return std::stod(r[1]);
    FAIL("metric not found: ", name);
    return 0.0;
}

// A shared fixture so the expensive generate/train step happens once.
const fs::path& fixture_dir() {
    static TempDir dir;
    static bool ready = false;
    if (!ready) {
        REQUIRE(run_cli("gen-fixture -o " + (dir.path / "fix").string() + " --seed 42") == 0);
        ready = true;
    }
    static fs::path fix = dir.path / "fix";
    return fix;
}

}  // namespace

TEST_CASE("gen-fixture emits a complete, runnable bundle") {
    const fs::path& fix = fixture_dir();
    for (const char* name :
         {"model.json", "train.bin", "train_labels.csv", "eval.bin", "eval_labels.csv",
          "mem_states.csv", "output_noise.csv", "coefficients.csv", "config.json"})
        CHECK(fs::exists(fix / name));
}

TEST_CASE("run: accuracy + PPA artifacts, exit 0") {
    const fs::path& fix = fixture_dir();
    TempDir out;
    const fs::path run_out = out.path / "r";
    REQUIRE(run_cli("run -c " + (fix / "config.json").string() + " -o " + run_out.string()) == 0);
    for (const char* name : {"config.json", "accuracy.csv", "trace.csv", "ppa.csv"})
        CHECK(fs::exists(run_out / name));
    CHECK(!fs::exists(run_out / "taps"));  // taps are opt-in
    CHECK(metric(run_out / "accuracy.csv", "samples") == 2000);
    CHECK(metric(run_out / "accuracy.csv", "accuracy") > 0.9);
    // noiseless run: noisy path equals the pure-quantization path exactly
    CHECK(metric(run_out / "accuracy.csv", "accuracy") ==
          metric(run_out / "accuracy.csv", "accuracy_ideal"));
    CHECK(metric(run_out / "accuracy.csv", "rmse_fc1") == 0.0);

    // the echoed config reproduces the run and itself
    const fs::path run2 = out.path / "r2";
    REQUIRE(run_cli("run -c " + (run_out / "config.json").string() + " -o " + run2.string()) == 0);
    CHECK(slurp(run_out / "accuracy.csv") == slurp(run2 / "accuracy.csv"));
    CHECK(slurp(run_out / "ppa.csv") == slurp(run2 / "ppa.csv"));
}

TEST_CASE("run: taps directory and thread-count invariance") {
    const fs::path& fix = fixture_dir();
    TempDir out;
    // flip on circuit noise so the noisy path actually differs
    write(out.path / "cfg.json",
          "{\"model\": \"" + fix.string() + "\", \"dataset\": \"" + fix.string() +
              "\", \"taps\": true, \"seed\": 3,"
              " \"array\": {\"mem_states\": \"" + (fix / "mem_states.csv").string() + "\"},"
              " \"noise\": {\"circuit\": {\"output_noise\": \"" +
              (fix / "output_noise.csv").string() + "\"}}}");
    const fs::path t1 = out.path / "t1", t4 = out.path / "t4";
    REQUIRE(run_cli("run -c " + (out.path / "cfg.json").string() + " -o " + t1.string() +
                    " -t 1") == 0);
    REQUIRE(run_cli("run -c " + (out.path / "cfg.json").string() + " -o " + t4.string() +
                    " -t 4") == 0);
    for (const char* name : {"fc1.csv", "act1.csv", "fc2.csv", "adc.csv"})
        CHECK(fs::exists(t1 / "taps" / name));
    for (const char* name : {"accuracy.csv", "taps/fc1.csv", "taps/adc.csv"})
        CHECK(slurp(t1 / name) == slurp(t4 / name));
    CHECK(metric(t1 / "accuracy.csv", "rmse_fc1") > 0.0);
}

TEST_CASE("analyze: rmse and adc tables from a taps directory") {
    TempDir dir;
    // hand-made taps: one error of 4 against a reference of norm 5 gives a
    // relative rmse of sqrt(16/25) = 0.8
    write(dir.path / "taps" / "fc.csv", "ideal,noisy\n3,3\n-4,0\n");
    write(dir.path / "taps" / "adc.csv", "expected,observed\n0,0\n1,1\n1,2\n0,0\n");
    const fs::path out = dir.path / "rep";
    REQUIRE(run_cli("analyze --taps " + (dir.path / "taps").string() + " -o " + out.string()) ==
            0);
    CHECK(metric(out / "rmse.csv", "fc") == doctest::Approx(0.8));
    const CsvTable adc = read_csv((out / "adc_error.csv").string());
    REQUIRE(adc.rows.size() == 2);
    CHECK(adc.rows[0][1] == "2");  // level 0 seen twice, clean
    CHECK(adc.rows[0][2] == "0");
    CHECK(adc.rows[1][2] == "1");  // one of the two level-1 conversions misread
    CHECK(std::stod(adc.rows[1][3]) == doctest::Approx(0.5));

    CHECK(run_cli("analyze --taps " + (dir.path / "missing").string()) == 2);
    fs::create_directories(dir.path / "empty");
    CHECK(run_cli("analyze --taps " + (dir.path / "empty").string()) == 2);
}

TEST_CASE("calibrate: rewritten ranges keep the model accurate") {
    const fs::path& fix = fixture_dir();
    TempDir out;
    const fs::path model2 = out.path / "recal";
    REQUIRE(run_cli("calibrate -m " + fix.string() + " -d " + fix.string() + " -s train -o " +
                    model2.string()) == 0);
    CHECK(fs::exists(model2 / "model.json"));
    CHECK(fs::exists(model2 / "calibration.csv"));
    const CsvTable log = read_csv((model2 / "calibration.csv").string());
    CHECK(log.rows.size() == 4);  // two Linear layers, two ranges each
    for (const auto& r : log.rows) CHECK(std::stod(r[2]) > 0.0);

    write(out.path / "cfg.json", "{\"model\": \"" + model2.string() + "\", \"dataset\": \"" +
                                     fix.string() + "\"}");
    const fs::path run_out = out.path / "r";
    REQUIRE(run_cli("run -c " + (out.path / "cfg.json").string() + " -o " + run_out.string()) ==
            0);
    CHECK(metric(run_out / "accuracy.csv", "accuracy") > 0.9);
}

TEST_CASE("sweep: csv artifact and thread invariance") {
    const fs::path& fix = fixture_dir();
    TempDir out;
    write(out.path / "sweep.json",
          "{\"model\": \"" + fix.string() + "\", \"dataset\": \"" + fix.string() + "\","
          " \"array\": {\"mem_states\": \"" + (fix / "mem_states.csv").string() + "\"},"
          " \"sweep\": {\"arrays\": [32, 64], \"p_adc_offsets\": [0, -1],"
          "  \"noise_seeds\": 1}}");
    const fs::path s1 = out.path / "s1", s4 = out.path / "s4";
    REQUIRE(run_cli("sweep -c " + (out.path / "sweep.json").string() + " -o " + s1.string() +
                    " -t 1") == 0);
    REQUIRE(run_cli("sweep -c " + (out.path / "sweep.json").string() + " -o " + s4.string() +
                    " -t 4") == 0);
    CHECK(slurp(s1 / "sweep.csv") == slurp(s4 / "sweep.csv"));
    CHECK(!fs::exists(s1 / "sweep_errors.csv"));  // nothing failed
    const CsvTable t = read_csv((s1 / "sweep.csv").string());
    CHECK(t.header ==
          std::vector<std::string>{"config_hash", "array", "b_cell", "p_adc", "acc", "tops_w",
                                   "tops_mm2", "fps", "pareto_flag"});
    REQUIRE(t.rows.size() == 4);
    int pareto = 0;
    for (const auto& r : t.rows) {
        CHECK(std::stod(t.rows[0][4]) > 0.9);
        pareto += std::stoi(r[8]);
    }
    CHECK(pareto >= 1);
}

TEST_CASE("exit codes: 2 for configuration errors, 3 for runtime failures") {
    const fs::path& fix = fixture_dir();
    TempDir dir;
    // both noise modes at once
    write(dir.path / "both.json",
          "{\"model\": \"" + fix.string() + "\", \"dataset\": \"" + fix.string() + "\","
          " \"array\": {\"mem_states\": \"" + (fix / "mem_states.csv").string() + "\"},"
          " \"noise\": {\"device\": {\"saf\": {\"p_sa0\": 0.01}},"
          "  \"circuit\": {\"output_noise\": \"" + (fix / "output_noise.csv").string() +
              "\"}}}");
    CHECK(run_cli("run -c " + (dir.path / "both.json").string()) == 2);
    // nonexistent config / model
    CHECK(run_cli("run -c " + (dir.path / "ghost.json").string()) == 2);
    write(dir.path / "nomodel.json",
          "{\"model\": \"" + (dir.path / "ghost").string() + "\", \"dataset\": \"" +
              fix.string() + "\"}");
    CHECK(run_cli("run -c " + (dir.path / "nomodel.json").string()) == 2);
    // bad usage
    CHECK(run_cli("run") == 2);
    CHECK(run_cli("frobnicate") == 2);

    // weights that cannot fit the tile: 8 weight bits on 1-bit cells need 8
    // columns, but the array only has 4 -> mapping fails at runtime
    write(dir.path / "tiny.json", "{\"model\": \"" + fix.string() + "\", \"dataset\": \"" +
                                      fix.string() + "\", \"array\": {\"rows\": 4, \"cols\": 4}}");
    CHECK(run_cli("run -c " + (dir.path / "tiny.json").string() + " -o " +
                  (dir.path / "t").string()) == 3);
}
