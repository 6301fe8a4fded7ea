#pragma once

#include "dosk/model.hpp"
#include "dosk/simdata.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dosk {

enum class Design { Regression1, Regression2, Classification1, Classification2 };

std::string to_string(Design design);
Design parse_design(const std::string &name);

/// Which estimator a benchmark replicate tunes and fits.
enum class BenchMethod {
    Dosk,      // full double-sparsity model over the CV grid
    L2Kernel,  // lambda1 = lambda2 = 0 with w frozen at 1 (squared-norm kernel learning)
};

std::string to_string(BenchMethod method);
BenchMethod parse_bench_method(const std::string &name);

/// Default CV grid for simulated designs: the stock grid with penalties
/// scaled per observation and the one-standard-error selection rule.
CvGrid benchmark_grid();

struct BenchConfig {
    Design design = Design::Regression1;
    int n = 100;
    int p0 = 2;
    int replicates = 50;
    std::uint64_t seed = 0;
    int jobs = 1;
    BenchMethod method = BenchMethod::Dosk;
    CvGrid grid = benchmark_grid();
    SolverConfig solver;
    /// Unset means the design default (see design_standardize).
    std::optional<bool> standardize;
    /// Zero means the design default (10 n for regression, 2000 for classification).
    int test_n = 0;
    bool record_timing = false;
};

/// Kernel family, loss and task used by each simulated design.
KernelSpec design_kernel(Design design);
LossSpec design_loss(Design design);
Task design_task(Design design);
/// Regression designs share one predictor range and run unscaled; the
/// classification designs are min-max scaled so noise columns span the same
/// range as the signal columns.
bool design_standardize(Design design);
int design_test_size(Design design, int n);
Dataset generate_design(Design design, int n, int p0, Rng &rng);

struct ReplicateRow {
    int replicate = 0;
    std::uint64_t seed = 0;
    double train_error = 0.0;
    double test_error = 0.0;
    double tp_rate = 0.0;
    double fn_rate = 0.0;
    Hyperparams hp;
    double gamma = 0.0;
    double cv_error = 0.0;
    std::vector<int> selected_variables;
    std::vector<double> w_hat;
    int n_support_points = 0;
    /// Objective trace of the final fit (used for the monotone-descent audit).
    std::vector<double> objective_trace;
    bool converged = false;
    double seconds = 0.0;
};

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation; 0 for a single replicate
};

Summary summarize(const std::vector<double> &values);

struct BenchReport {
    BenchConfig config;
    std::vector<ReplicateRow> rows;
    Summary train_error, test_error, tp_rate, fn_rate;
    double wall_seconds = 0.0;
    /// First replicate's training fit, for plotting: (x1, y, fitted, is_support).
    struct PlotRow {
        double x1, y, fitted;
        bool is_support;
    };
    std::vector<PlotRow> plot_rows;
    std::optional<std::string> failure;
};

/// Runs one replicate: generate train/test with seed, tune by CV, refit, evaluate.
ReplicateRow run_replicate(const BenchConfig &cfg, int replicate, std::vector<BenchReport::PlotRow> *plot = nullptr);

/// All replicates (seed + r for replicate r), in parallel up to cfg.jobs.
/// A failing replicate stops aggregation; the report carries the completed rows and the failure text.
BenchReport run_bench(const BenchConfig &cfg);

/// Machine-readable report. Timing fields are included only when cfg.record_timing is set.
std::string bench_report_json(const BenchReport &report);
/// Human-readable one-screen table.
std::string bench_report_table(const BenchReport &report);
std::string bench_plot_csv(const BenchReport &report);

}  // namespace dosk
