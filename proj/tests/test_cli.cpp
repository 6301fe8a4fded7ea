#include "dosk/kernel.hpp"
#include "dosk/simdata.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#ifndef DOSK_CLI_PATH
#error "DOSK_CLI_PATH must name the dosk executable"
#endif

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int code;
    std::string err;
};

fs::path work_dir() {
    const fs::path dir = fs::temp_directory_path() / "dosk_cli_tests";
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run run(const std::string &args) {
    const fs::path err = work_dir() / "stderr.txt";
    const std::string cmd = std::string(DOSK_CLI_PATH) + " " + args + " > /dev/null 2> " + err.string();
    const int status = std::system(cmd.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return {code, slurp(err)};
}

std::string write_file(const std::string &name, const std::string &text) {
    const fs::path p = work_dir() / name;
    std::ofstream(p) << text;
    return p.string();
}

std::string path(const std::string &name) { return (work_dir() / name).string(); }

std::size_t count_lines(const std::string &text) {
    std::size_t n = 0;
    for (char c : text) n += c == '\n';
    return n;
}

std::string regression_csv(int n, std::uint64_t seed) {
    const dosk::Dataset d = dosk::gen_regression1(n, 1, seed);
    std::ostringstream os;
    dosk::write_csv(os, d, "y");
    return os.str();
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("fit with large penalties gives the null model") {
    const std::string data = write_file("toy.csv", "a,b,y\n0.1,2,1.5\n0.4,3,2.5\n0.2,1,0.5\n0.9,5,3.0\n0.5,4,2.0\n");
    const Run r = run("fit --data " + data + " --lambda1 100 --lambda2 100 --out " + path("toy_model.json") +
                      " --report " + path("toy_report.json"));
    REQUIRE(r.code == 0);
    const json rep = json::parse(slurp(path("toy_report.json")));
    CHECK(rep["n_support_points"] == 0);
    CHECK(rep["n_selected_vars"] == 0);
    for (const char *key : {"objective", "iterations", "converged"}) CHECK(rep.contains(key));

    REQUIRE(run("predict --model " + path("toy_model.json") + " --data " + data + " --out " + path("toy_pred.csv"))
                .code == 0);
    std::istringstream pred(slurp(path("toy_pred.csv")));
    std::string line;
    std::getline(pred, line);
    CHECK(line == "prediction");
    std::getline(pred, line);
    CHECK(std::stod(line) == doctest::Approx(1.9));
}

TEST_CASE("frozen unpenalized fit reports the kernel ridge objective") {
    const std::string csv = regression_csv(30, 3);
    const std::string data = write_file("ridge.csv", csv);
    const Run r = run("fit --data " + data + " --freeze-w --no-standardize --gamma 0.3 --lambda1 0 --lambda2 0 " +
                      "--lambda3 0.05 --out " + path("ridge_model.json") + " --report " + path("ridge_report.json"));
    REQUIRE(r.code == 0);
    std::istringstream in(csv);
    const dosk::Dataset d = dosk::read_csv(in, "y", dosk::Task::Regression);
    oracle::Kern k;
    k.gamma = 0.3;
    const oracle::Mat K = oracle::gram(k, oracle::Vec::Ones(d.p()), d.X);
    const oracle::RidgeFit ref = oracle::kernel_ridge(K, d.y, 0.05);
    const double phi = oracle::objective(oracle::Loss::Squared, K, d.y, ref.alpha, ref.b, oracle::Vec::Ones(d.p()), 0.0,
                                         0.0, 0.05);
    const json rep = json::parse(slurp(path("ridge_report.json")));
    CHECK(rep["objective"].get<double>() == doctest::Approx(phi).epsilon(1e-6));
}

TEST_CASE("exit codes and messages") {
    const std::string data = write_file("labels.csv", "a,b,target\n1,2,3\n4,5,6\n");
    Run r = run("fit --data " + data + " --out " + path("m.json"));
    CHECK(r.code == 2);
    CHECK(r.err.find("label column not found") != std::string::npos);
    r = run("fit --data " + path("missing_file.csv") + " --label target --out " + path("m.json"));
    CHECK(r.code == 2);
    r = run("fit --data " + data + " --label target --kernel sigmoid --out " + path("m.json"));
    CHECK(r.code == 2);
    r = run("bogus");
    CHECK(r.code == 2);
    const std::string bad_labels = write_file("class_bad.csv", "a,y\n1,1\n2,0\n3,1\n");
    r = run("fit --data " + bad_labels + " --task class --out " + path("m.json"));
    CHECK(r.code == 2);
    const std::string truncated = write_file("trunc.json", "{\"format_version\": 1, \"kernel\": {");
    r = run("predict --model " + truncated + " --data " + data + " --label target --out " + path("p.csv"));
    CHECK(r.code == 2);
}

TEST_CASE("tune writes one row per grid cell and is reproducible") {
    const std::string data = write_file("tune.csv", regression_csv(20, 4));
    Run r = run("tune --data " + data + " --lambda1-grid 0.25 --lambda2-grid 0.5 --gamma-grid 0.3 --out " +
                path("one.json") + " --table " + path("one.csv"));
    REQUIRE(r.code == 0);
    CHECK(count_lines(slurp(path("one.csv"))) == 2);
    const json best = json::parse(slurp(path("one.json")));
    CHECK(best["lambda1"] == 0.25);
    CHECK(best["cells"] == 1);

    r = run("tune --data " + data + " --seed 7 --out " + path("full.json") + " --table " + path("full_a.csv"));
    REQUIRE(r.code == 0);
    const std::string a = slurp(path("full_a.csv"));
    CHECK(count_lines(a) == 211);
    r = run("tune --data " + data + " --seed 7 --jobs 2 --out " + path("full.json") + " --table " + path("full_b.csv"));
    REQUIRE(r.code == 0);
    CHECK(slurp(path("full_b.csv")) == a);
}

TEST_CASE("tune reports fold degeneracy as a data error") {
    const std::string data = write_file("degenerate.csv", "a,y\n1,1\n2,-1\n3,-1\n4,-1\n5,-1\n6,-1\n");
    const Run r = run("tune --data " + data + " --task class --folds 5 --out " + path("deg.json"));
    CHECK(r.code == 2);
}

TEST_CASE("bench is deterministic and reports zero spread for one replicate") {
    const std::string common = "bench --design reg1 --n 24 --p0 1 --replicates 1 --seed 3 --lambda1-grid 0,0.5 "
                               "--lambda2-grid 0.5,4 --gamma-grid 0.5 --folds 3";
    REQUIRE(run(common + " --out " + path("bench_a.json") + " --plot-data " + path("plot.csv")).code == 0);
    REQUIRE(run(common + " --out " + path("bench_b.json")).code == 0);
    const std::string a = slurp(path("bench_a.json"));
    CHECK(a == slurp(path("bench_b.json")));
    const json rep = json::parse(a);
    CHECK(rep["test_error"]["std"] == 0.0);
    CHECK(rep["rows"].size() == 1);
    CHECK(count_lines(slurp(path("plot.csv"))) == 25);
    CHECK(run("bench --design nope").code == 2);
}

}
