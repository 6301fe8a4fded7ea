#include "dosk/bench.hpp"
#include "dosk/model.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace {

using json = nlohmann::json;
using namespace dosk;

constexpr int kExitOk = 0;
constexpr int kExitData = 2;
constexpr int kExitSolver = 3;

int default_jobs() {
    if (const char *env = std::getenv("DOSK_JOBS")) {
        try {
            const int jobs = std::stoi(env);
            if (jobs >= 1) return jobs;
        } catch (const std::exception &) {
        }
        std::cerr << "warning: ignoring DOSK_JOBS='" << env << "'\n";
    }
    return 1;
}

std::vector<double> parse_list(const std::string &text, const char *flag) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception &) {
            throw InvalidArgument(std::string(flag) + ": not a number: '" + item + "'");
        }
    }
    if (out.empty()) throw InvalidArgument(std::string(flag) + ": empty list");
    return out;
}

void write_text(const std::string &path, const std::string &text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << text;
    if (!out) throw DataError("failed writing '" + path + "'");
}

std::string dump(const json &j) { return j.dump(2) + "\n"; }

json ints(const std::vector<int> &v) { return json(v); }

struct ModelFlags {
    std::string data;
    std::string label = "y";
    std::string task = "reg";
    std::string kernel = "gaussian";
    std::string loss;
    double offset_c = 1.0;
    int degree_d = 2;
    bool freeze_w = false;
    bool no_standardize = false;
    std::uint64_t seed = 0;
    int starts = 1;
    int max_iter = 300;
    double tol = 1e-3;

    void add_to(CLI::App &cmd) {
        cmd.add_option("--data", data, "training CSV with a header row")->required();
        cmd.add_option("--label", label, "response column")->capture_default_str();
        cmd.add_option("--task", task, "reg|class")->capture_default_str();
        cmd.add_option("--kernel", kernel, "gaussian|laplacian|linear|poly")->capture_default_str();
        cmd.add_option("--loss", loss, "squared|hinge|deviance (default: squared for reg, hinge for class)");
        cmd.add_option("--offset", offset_c, "polynomial offset c")->capture_default_str();
        cmd.add_option("--degree", degree_d, "polynomial degree d")->capture_default_str();
        cmd.add_flag("--freeze-w", freeze_w, "keep every variable weight at 1");
        cmd.add_flag("--no-standardize", no_standardize, "use predictors as given instead of min-max scaling");
        cmd.add_option("--seed", seed, "seed for extra random starts and fold assignment")->capture_default_str();
        cmd.add_option("--starts", starts, "number of starting points for w")->capture_default_str();
        cmd.add_option("--max-iter", max_iter, "outer iteration cap")->capture_default_str();
        cmd.add_option("--tol", tol, "stop when the objective changes by less than this")->capture_default_str();
    }

    [[nodiscard]] Task parsed_task() const { return parse_task(task); }

    [[nodiscard]] LossSpec parsed_loss() const {
        LossSpec spec;
        if (loss.empty()) {
            spec.kind = parsed_task() == Task::Regression ? LossKind::SquaredError : LossKind::HuberizedHinge;
        } else {
            spec.kind = parse_loss_kind(loss);
        }
        return spec;
    }

    [[nodiscard]] KernelSpec parsed_kernel() const {
        KernelSpec spec;
        spec.family = parse_kernel_family(kernel);
        spec.offset_c = offset_c;
        spec.degree_d = degree_d;
        return spec;
    }

    [[nodiscard]] SolverConfig solver() const {
        SolverConfig cfg;
        cfg.seed = seed;
        cfg.n_starts = starts;
        cfg.max_outer_iters = max_iter;
        cfg.tol_objective = tol;
        cfg.freeze_w = freeze_w;
        return cfg;
    }
};

struct GridFlags {
    std::string lambda1 = "0,0.25,0.5";
    std::string lambda2 = "0.125,0.25,0.5,1,2,4,8";
    std::string gamma = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1";
    double lambda3 = 0.5;
    int folds = 5;
    std::string penalty_scale;
    std::string cv_rule;

    void add_to(CLI::App &cmd, const char *default_scale, const char *default_rule) {
        penalty_scale = default_scale;
        cv_rule = default_rule;
        cmd.add_option("--lambda1-grid", lambda1, "comma-separated lambda1 candidates")->capture_default_str();
        cmd.add_option("--lambda2-grid", lambda2, "comma-separated lambda2 candidates")->capture_default_str();
        cmd.add_option("--gamma-grid", gamma, "comma-separated gamma candidates, or 'median'")->capture_default_str();
        cmd.add_option("--lambda3", lambda3, "fixed lambda3")->capture_default_str();
        cmd.add_option("--folds", folds, "cross-validation folds")->capture_default_str();
        cmd.add_option("--penalty-scale", penalty_scale, "absolute|per-obs")->capture_default_str();
        cmd.add_option("--cv-rule", cv_rule, "min|1se")->capture_default_str();
    }

    [[nodiscard]] CvGrid grid() const {
        CvGrid g;
        g.lambda1_candidates = parse_list(lambda1, "--lambda1-grid");
        g.lambda2_candidates = parse_list(lambda2, "--lambda2-grid");
        if (gamma == "median") {
            g.gamma_median = true;
        } else {
            g.gamma_candidates = parse_list(gamma, "--gamma-grid");
        }
        g.lambda3_fixed = lambda3;
        g.folds = folds;
        g.penalty_scale = parse_penalty_scale(penalty_scale);
        g.rule = parse_cv_rule(cv_rule);
        return g;
    }
};

double resolve_gamma(const std::string &text, const Matrix &X, bool standardize) {
    if (text == "median") {
        const Matrix Z = standardize ? Standardizer::fit(X).apply(X) : X;
        return median_heuristic_gamma(Z);
    }
    return parse_list(text, "--gamma").front();
}

json fit_report(const ModelFit &fit) {
    json j;
    j["objective"] = fit.model.trace_summary.objective;
    j["iterations"] = fit.model.trace_summary.iterations;
    j["converged"] = fit.model.trace_summary.converged;
    j["n_selected_vars"] = selected_variables(fit.model).size();
    j["n_support_points"] = fit.model.support.size();
    j["selected_variables"] = ints(selected_variables(fit.model));
    j["gamma"] = fit.model.kernel.gamma;
    j["line_search_invocations"] = fit.trace.line_search_invocations;
    return j;
}

int cmd_fit(const ModelFlags &mf, const std::string &gamma, const Hyperparams &hp, const std::string &out,
            const std::string &report_path) {
    const Dataset data = read_csv_file(mf.data, mf.label, mf.parsed_task());
    FitOptions opts;
    opts.loss = mf.parsed_loss();
    opts.kernel = mf.parsed_kernel();
    opts.standardize = !mf.no_standardize;
    opts.kernel.gamma = resolve_gamma(gamma, data.X, opts.standardize);
    opts.hp = hp;
    opts.solver = mf.solver();
    const ModelFit fit = fit_model(data.X, data.y, opts);
    save_model(fit.model, out);
    write_text(report_path, dump(fit_report(fit)));
    return kExitOk;
}

int cmd_predict(const std::string &model_path, const std::string &data_path, const std::string &label,
                const std::string &out) {
    const DoskModel model = load_model(model_path);
    const Matrix X = read_csv_predictors_file(data_path, label);
    if (X.cols() != model.p()) {
        throw DataError("model expects " + std::to_string(model.p()) + " predictors, data has " +
                        std::to_string(X.cols()));
    }
    const Vector f = predict(model, X);
    std::ostringstream os;
    os.precision(17);
    const bool margin = model.loss.is_margin();
    os << (margin ? "decision,label\n" : "prediction\n");
    for (Eigen::Index i = 0; i < f.size(); ++i) {
        os << f[i];
        if (margin) os << ',' << (f[i] >= 0.0 ? 1 : -1);
        os << '\n';
    }
    write_text(out, os.str());
    return kExitOk;
}

std::string cv_table_csv(const CvResult &cv) {
    std::ostringstream os;
    os.precision(17);
    os << "lambda1,lambda2,gamma,cv_error";
    const std::size_t folds = cv.table.empty() ? 0 : cv.table.front().fold_errors.size();
    for (std::size_t f = 0; f < folds; ++f) os << ",fold" << f + 1;
    os << '\n';
    for (const CvCell &cell : cv.table) {
        os << cell.lambda1 << ',' << cell.lambda2 << ',' << cell.gamma << ',' << cell.cv_error;
        for (double e : cell.fold_errors) os << ',' << e;
        os << '\n';
    }
    return os.str();
}

int cmd_tune(const ModelFlags &mf, const GridFlags &gf, int jobs, const std::string &out, const std::string &table,
             const std::string &model_out) {
    const Task task = mf.parsed_task();
    const Dataset data = read_csv_file(mf.data, mf.label, task);
    const CvGrid grid = gf.grid();
    const bool standardize = !mf.no_standardize;
    SolverConfig cfg = mf.solver();
    const CvResult cv =
        cross_validate(data.X, data.y, task, mf.parsed_kernel(), mf.parsed_loss(), grid, cfg, mf.seed, standardize, jobs);

    json j;
    j["lambda1"] = cv.best_hp.lambda1;
    j["lambda2"] = cv.best_hp.lambda2;
    j["lambda3"] = cv.best_hp.lambda3;
    j["gamma"] = cv.best_kernel.gamma;
    j["kernel"] = std::string(to_string(cv.best_kernel.family));
    j["cv_error"] = cv.best.cv_error;
    j["metric"] = task == Task::Regression ? "mpe" : "mcr";
    j["folds"] = grid.folds;
    j["penalty_scale"] = std::string(to_string(grid.penalty_scale));
    j["cv_rule"] = std::string(to_string(grid.rule));
    const Hyperparams effective = effective_hyperparams(cv.best_hp, grid.penalty_scale, data.n());
    j["effective_lambda"] = {{"lambda1", effective.lambda1}, {"lambda2", effective.lambda2}, {"lambda3", effective.lambda3}};
    j["cells"] = cv.table.size();
    if (!table.empty()) write_text(table, cv_table_csv(cv));
    if (!model_out.empty()) {
        FitOptions opts;
        opts.kernel = cv.best_kernel;
        opts.loss = mf.parsed_loss();
        opts.hp = effective;
        opts.solver = cfg;
        opts.standardize = standardize;
        const ModelFit fit = fit_model(data.X, data.y, opts);
        save_model(fit.model, model_out);
        j["fit"] = fit_report(fit);
    }
    write_text(out, dump(j));
    return kExitOk;
}

struct BenchFlags {
    std::string design = "reg1";
    int n = 100;
    int p0 = 2;
    int replicates = 50;
    std::uint64_t seed = 0;
    std::string method = "dosk";
    std::string standardize = "auto";
    int test_n = 0;
    bool timing = false;
    bool pretty = false;
    std::string out;
    std::string plot_data;
};

int cmd_bench(const BenchFlags &bf, const GridFlags &gf, int jobs) {
    BenchConfig cfg;
    cfg.design = parse_design(bf.design);
    cfg.n = bf.n;
    cfg.p0 = bf.p0;
    cfg.replicates = bf.replicates;
    cfg.seed = bf.seed;
    cfg.jobs = jobs;
    cfg.method = parse_bench_method(bf.method);
    cfg.grid = gf.grid();
    if (bf.standardize == "on") {
        cfg.standardize = true;
    } else if (bf.standardize == "off") {
        cfg.standardize = false;
    } else if (bf.standardize != "auto") {
        throw InvalidArgument("--standardize must be auto, on or off");
    }
    cfg.test_n = bf.test_n;
    cfg.record_timing = bf.timing;

    const BenchReport report = run_bench(cfg);
    const std::string text = bench_report_json(report);
    if (bf.pretty) {
        std::cout << bench_report_table(report);
        if (!bf.out.empty()) write_text(bf.out, text);
    } else {
        write_text(bf.out, text);
    }
    if (!bf.plot_data.empty()) write_text(bf.plot_data, bench_plot_csv(report));
    if (report.failure) {
        std::cerr << "error: " << *report.failure << '\n';
        return kExitSolver;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char **argv) {
    CLI::App app{"Double-sparsity kernel learning: fit, predict, tune and benchmark"};
    app.require_subcommand(1);
    int jobs = default_jobs();

    ModelFlags fit_flags;
    std::string fit_gamma = "0.5";
    Hyperparams fit_hp;
    std::string fit_out;
    std::string fit_report_path;
    CLI::App *fit = app.add_subcommand("fit", "fit one model on a CSV file");
    fit_flags.add_to(*fit);
    fit->add_option("--gamma", fit_gamma, "kernel bandwidth, or 'median'")->capture_default_str();
    fit->add_option("--lambda1", fit_hp.lambda1, "L1 weight on alpha")->capture_default_str();
    fit->add_option("--lambda2", fit_hp.lambda2, "L1 weight on w")->capture_default_str();
    fit->add_option("--lambda3", fit_hp.lambda3, "weight of alpha' K alpha")->capture_default_str();
    fit->add_option("--out", fit_out, "model JSON path")->required();
    fit->add_option("--report", fit_report_path, "fit report path (default: stdout)");

    std::string pred_model, pred_data, pred_label = "y", pred_out;
    CLI::App *pred = app.add_subcommand("predict", "predict from a saved model");
    pred->add_option("--model", pred_model, "model JSON")->required();
    pred->add_option("--data", pred_data, "CSV with the training predictor columns")->required();
    pred->add_option("--label", pred_label, "column to ignore if present")->capture_default_str();
    pred->add_option("--out", pred_out, "output CSV (default: stdout)");

    ModelFlags tune_flags;
    GridFlags tune_grid;
    std::string tune_out, tune_table, tune_model;
    CLI::App *tune = app.add_subcommand("tune", "grid search by k-fold cross-validation");
    tune_flags.add_to(*tune);
    tune_grid.add_to(*tune, "absolute", "min");
    tune->add_option("--jobs", jobs, "worker threads (default: DOSK_JOBS or 1)");
    tune->add_option("--out", tune_out, "best-parameter JSON (default: stdout)");
    tune->add_option("--table", tune_table, "full CV table CSV");
    tune->add_option("--fit-out", tune_model, "refit with the best cell and save the model here");

    BenchFlags bench_flags;
    GridFlags bench_grid;
    CLI::App *bench = app.add_subcommand("bench", "seeded simulation benchmark");
    bench->add_option("--design", bench_flags.design, "reg1|reg2|class1|class2")->capture_default_str();
    bench->add_option("--n", bench_flags.n, "training size")->capture_default_str();
    bench->add_option("--p0", bench_flags.p0, "number of noise predictors")->capture_default_str();
    bench->add_option("--replicates", bench_flags.replicates, "replicates")->capture_default_str();
    bench->add_option("--seed", bench_flags.seed, "base seed; replicate r uses seed + r")->capture_default_str();
    bench->add_option("--method", bench_flags.method, "dosk|l2kernel")->capture_default_str();
    bench->add_option("--standardize", bench_flags.standardize, "auto|on|off")->capture_default_str();
    bench->add_option("--test-n", bench_flags.test_n, "test size (0: design default)")->capture_default_str();
    bench->add_option("--jobs", jobs, "worker threads (default: DOSK_JOBS or 1)");
    bench->add_flag("--timing", bench_flags.timing, "include wall-clock fields in the report");
    bench->add_flag("--pretty", bench_flags.pretty, "print a summary table");
    bench->add_option("--out", bench_flags.out, "report JSON path (default: stdout)");
    bench->add_option("--plot-data", bench_flags.plot_data, "CSV of (x1, y, fitted, is_support) for replicate 0");
    bench_grid.add_to(*bench, "per-obs", "1se");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return kExitData;
    }

    try {
        if (jobs < 1) throw InvalidArgument("--jobs must be >= 1");
        if (*fit) return cmd_fit(fit_flags, fit_gamma, fit_hp, fit_out, fit_report_path);
        if (*pred) return cmd_predict(pred_model, pred_data, pred_label, pred_out);
        if (*tune) return cmd_tune(tune_flags, tune_grid, jobs, tune_out, tune_table, tune_model);
        if (*bench) return cmd_bench(bench_flags, bench_grid, jobs);
    } catch (const ConvergenceError &e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    } catch (const DataError &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const ParseError &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const InvalidArgument &e) {
        std::cerr << "invalid argument: " << e.what() << '\n';
        return kExitData;
    } catch (const DimensionError &e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::exception &e) {
        std::cerr << "solver error: " << e.what() << '\n';
        return kExitSolver;
    }
    return kExitOk;
}
