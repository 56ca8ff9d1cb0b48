#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

#include <sys/wait.h>

#include <json.hpp>

#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("aircal_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { std::error_code ec; fs::remove_all(path, ec); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

int run(const std::string& args) {
    const std::string cmd = std::string(AIRCAL_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    json j;
    in >> j;
    return j;
}

std::size_t csv_data_rows(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    std::string line;
    std::getline(in, line); // header
    std::size_t rows = 0;
    while (std::getline(in, line))
        if (!line.empty()) ++rows;
    return rows;
}

} // namespace

TEST_CASE("cli: exit codes distinguish validation, I/O and success") {
    TempDir dir;
    CHECK(run("--help") == 0);
    CHECK(run("bogus-subcommand") == 1);
    CHECK(run("simulate") == 1); // missing required output
    CHECK(run("calibrate -i " + dir.file("missing.ucal") + " -o " + dir.file("out.uest")) == 2);
    CHECK(run("simulate --grid-az 2 --grid-el 2 --delta 2.0 -o " + dir.file("x.ucal")) == 1);
}

TEST_CASE("cli: noiseless pipeline reports near-zero fit and finds the planted targets") {
    TempDir dir;
    const std::string cal = dir.file("cal.ucal");
    const std::string scene = dir.file("scene.ucal");
    const std::string est = dir.file("est.uest");
    const std::string dict = dir.file("dict.udic");
    const std::string img = dir.file("img_");

    REQUIRE(run("simulate --grid-az 5 --grid-el 3 -N 2 -M 6 -L 12 -T 3 --delta 0.4 "
                "--range 1.0 --fov 30 --r0 0.08 --seed 11 "
                "--scene-targets '2@0;12@0.0343' --scene-out " + scene + " -o " + cal) == 0);

    REQUIRE(run("calibrate -i " + cal + " -o " + est + " --tol 1e-12") == 0);
    const json cal_manifest = read_json(est + ".manifest.json");
    CHECK(cal_manifest["final_f_rel"].get<double>() < 1e-10);
    CHECK(cal_manifest["converged"].get<bool>());

    REQUIRE(run("dictionary -i " + est + " -o " + dict + " --scan-count 3 --scan-step 0.0343") == 0);
    const json dict_manifest = read_json(dict + ".manifest.json");
    CHECK(std::abs(dict_manifest["r0_m"].get<double>() - 0.08) < 1e-6);
    CHECK(dict_manifest["atoms"].get<std::size_t>() == 15 * 3);

    REQUIRE(run("image -i " + scene + " -d " + dict + " -o " + img + " --max-iter 4") == 0);
    const json img_manifest = read_json(img + "manifest.json");
    CHECK(img_manifest["detections"].get<std::size_t>() >= 2);

    // The two strongest detections land on the planted atoms: grid cell 2 at
    // offset 0 and grid cell 12 one scan step out.
    std::ifstream det(img + "detections.csv");
    REQUIRE(det);
    std::string line;
    std::getline(det, line);
    std::getline(det, line);
    CHECK(line.find(",") != std::string::npos);
    CHECK(csv_data_rows(img + "detections.csv") >= 2);
}

TEST_CASE("cli: eval emits the documented CSV shape") {
    TempDir dir;
    const std::string prefix = dir.file("ev_");
    REQUIRE(run("eval -P 3 -N 2 -M 3 -L 4 -T 2 --deltas 0.3 --snr-grid 0 10 --trials 2 "
                "--seed 5 -o " + prefix) == 0);
    // |grid| x I_MC rows per method: 2 snr x 1 delta x 2 trials x 2 methods.
    CHECK(csv_data_rows(prefix + "sweep.csv") == 8);
    const json summary = read_json(prefix + "summary.json");
    CHECK(summary["cells"].size() == 4);
}

TEST_CASE("cli: repeated runs with one config are byte-identical") {
    TempDir dir;
    const std::string a = dir.file("a.ucal");
    const std::string b = dir.file("b.ucal");
    const std::string args = "simulate --grid-az 3 --grid-el 2 -N 2 -M 4 -L 6 -T 2 --snr 15 "
                             "--seed 77 -o ";
    REQUIRE(run(args + a) == 0);
    REQUIRE(run(args + b) == 0);
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    const std::vector<char> ba{std::istreambuf_iterator<char>(fa), std::istreambuf_iterator<char>()};
    const std::vector<char> bb{std::istreambuf_iterator<char>(fb), std::istreambuf_iterator<char>()};
    CHECK(ba == bb);
}
