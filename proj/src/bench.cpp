#include "dosk/bench.hpp"

#include "json.hpp"
#include "parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

namespace dosk {

using nlohmann::json;

std::string to_string(Design design) {
    switch (design) {
    case Design::Regression1: return "reg1";
    case Design::Regression2: return "reg2";
    case Design::Classification1: return "class1";
    case Design::Classification2: return "class2";
    }
    return "unknown";
}

Design parse_design(const std::string &name) {
    if (name == "reg1") return Design::Regression1;
    if (name == "reg2") return Design::Regression2;
    if (name == "class1") return Design::Classification1;
    if (name == "class2") return Design::Classification2;
    throw InvalidArgument("unknown design '" + name + "' (expected reg1|reg2|class1|class2)");
}

std::string to_string(BenchMethod method) { return method == BenchMethod::Dosk ? "dosk" : "l2kernel"; }

BenchMethod parse_bench_method(const std::string &name) {
    if (name == "dosk") return BenchMethod::Dosk;
    if (name == "l2kernel" || name == "l2") return BenchMethod::L2Kernel;
    throw InvalidArgument("unknown method '" + name + "' (expected dosk|l2kernel)");
}

KernelSpec design_kernel(Design design) {
    KernelSpec k;
    k.family = design == Design::Regression1 ? KernelFamily::Laplacian : KernelFamily::Gaussian;
    return k;
}

LossSpec design_loss(Design design) {
    LossSpec l;
    l.kind = design_task(design) == Task::Regression ? LossKind::SquaredError : LossKind::HuberizedHinge;
    return l;
}

Task design_task(Design design) {
    return (design == Design::Regression1 || design == Design::Regression2) ? Task::Regression : Task::Classification;
}

int design_test_size(Design design, int n) { return design_task(design) == Task::Regression ? 10 * n : 2000; }

bool design_standardize(Design design) { return design_task(design) == Task::Classification; }

CvGrid benchmark_grid() {
    CvGrid grid;
    grid.penalty_scale = PenaltyScale::PerObservation;
    grid.rule = CvRule::OneStandardError;
    return grid;
}

Dataset generate_design(Design design, int n, int p0, Rng &rng) {
    switch (design) {
    case Design::Regression1: return gen_regression1(n, p0, rng);
    case Design::Regression2: return gen_regression2(n, p0, rng);
    case Design::Classification1: return gen_classification(n, 2, p0, rng);
    case Design::Classification2: return gen_classification(n, 4, p0, rng);
    }
    throw InvalidArgument("unknown design");
}

Summary summarize(const std::vector<double> &values) {
    Summary s;
    if (values.empty()) return s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return s;
}

ReplicateRow run_replicate(const BenchConfig &cfg, int replicate, std::vector<BenchReport::PlotRow> *plot) {
    const auto started = std::chrono::steady_clock::now();
    ReplicateRow row;
    row.replicate = replicate;
    row.seed = cfg.seed + static_cast<std::uint64_t>(replicate);

    Rng rng(row.seed);
    const Dataset train = generate_design(cfg.design, cfg.n, cfg.p0, rng);
    const int test_n = cfg.test_n > 0 ? cfg.test_n : design_test_size(cfg.design, cfg.n);
    const Dataset test = generate_design(cfg.design, test_n, cfg.p0, rng);
    const Task task = design_task(cfg.design);
    const bool standardize = cfg.standardize.value_or(design_standardize(cfg.design));

    CvGrid grid = cfg.grid;
    if (cfg.method == BenchMethod::L2Kernel) {
        grid.lambda1_candidates = {0.0};
        grid.lambda2_candidates = {0.0};
        grid.freeze_w = true;
    }
    const int cv_jobs = cfg.replicates == 1 ? cfg.jobs : 1;
    const CvResult cv = cross_validate(train.X, train.y, task, design_kernel(cfg.design), design_loss(cfg.design), grid,
                                       cfg.solver, row.seed, standardize, cv_jobs);

    FitOptions opts;
    opts.kernel = cv.best_kernel;
    opts.loss = design_loss(cfg.design);
    opts.hp = effective_hyperparams(cv.best_hp, grid.penalty_scale, train.n());
    opts.solver = cfg.solver;
    opts.solver.freeze_w = cfg.solver.freeze_w || grid.freeze_w;
    opts.standardize = standardize;
    const ModelFit fit = fit_model(train.X, train.y, opts);

    const Vector train_pred = predict(fit.model, train.X);
    const Vector test_pred = predict(fit.model, test.X);
    const auto err = [task](const Vector &pred, const Vector &y) {
        return task == Task::Regression ? mpe(pred, y) : mcr(pred, y);
    };
    row.train_error = err(train_pred, train.y);
    row.test_error = err(test_pred, test.y);
    row.selected_variables = selected_variables(fit.model);
    row.w_hat.assign(fit.model.w_hat.data(), fit.model.w_hat.data() + fit.model.w_hat.size());
    const SelectionRates rates = selection_rates(row.selected_variables, *train.signal_mask);
    row.tp_rate = rates.tp_rate;
    row.fn_rate = rates.fn_rate;
    row.hp = cv.best_hp;
    row.gamma = cv.best_kernel.gamma;
    row.cv_error = cv.best.cv_error;
    row.n_support_points = static_cast<int>(fit.model.support.size());
    row.objective_trace = fit.trace.objective_per_iter;
    row.converged = fit.trace.converged;

    if (plot != nullptr) {
        const std::vector<int> points = selected_points(fit.model);
        plot->clear();
        for (Eigen::Index i = 0; i < train.n(); ++i) {
            const bool support = std::binary_search(points.begin(), points.end(), static_cast<int>(i));
            plot->push_back({train.X(i, 0), train.y[i], train_pred[i], support});
        }
    }
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return row;
}

BenchReport run_bench(const BenchConfig &cfg) {
    if (cfg.n < 2 || cfg.p0 < 0 || cfg.replicates < 1) throw InvalidArgument("bench needs n >= 2, p0 >= 0, replicates >= 1");
    const auto started = std::chrono::steady_clock::now();
    BenchReport report;
    report.config = cfg;
    const auto reps = static_cast<std::size_t>(cfg.replicates);
    std::vector<std::optional<ReplicateRow>> rows(reps);
    std::vector<std::string> failures(reps);
    detail::parallel_for(reps, cfg.jobs, [&](std::size_t r) {
        try {
            rows[r] = run_replicate(cfg, static_cast<int>(r), r == 0 ? &report.plot_rows : nullptr);
        } catch (const std::exception &e) {
            failures[r] = "replicate " + std::to_string(r) + ": " + e.what();
        }
    });
    for (std::size_t r = 0; r < reps; ++r) {
        if (rows[r]) {
            report.rows.push_back(std::move(*rows[r]));
        } else if (!report.failure) {
            report.failure = failures[r];
        }
    }
    std::vector<double> tr, te, tp, fn;
    for (const auto &row : report.rows) {
        tr.push_back(row.train_error);
        te.push_back(row.test_error);
        tp.push_back(row.tp_rate);
        fn.push_back(row.fn_rate);
    }
    report.train_error = summarize(tr);
    report.test_error = summarize(te);
    report.tp_rate = summarize(tp);
    report.fn_rate = summarize(fn);
    report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    return report;
}

namespace {

json summary_json(const Summary &s) { return {{"mean", s.mean}, {"std", s.std}}; }

}  // namespace

std::string bench_report_json(const BenchReport &report) {
    const BenchConfig &c = report.config;
    json j;
    j["design"] = to_string(c.design);
    j["method"] = to_string(c.method);
    j["n"] = c.n;
    j["p0"] = c.p0;
    j["replicates"] = c.replicates;
    j["seed"] = c.seed;
    j["test_n"] = c.test_n > 0 ? c.test_n : design_test_size(c.design, c.n);
    j["standardize"] = c.standardize.value_or(design_standardize(c.design));
    j["penalty_scale"] = std::string(to_string(c.grid.penalty_scale));
    j["cv_rule"] = std::string(to_string(c.grid.rule));
    j["metric"] = design_task(c.design) == Task::Regression ? "mpe" : "mcr";
    j["kernel"] = std::string(to_string(design_kernel(c.design).family));
    j["loss"] = std::string(to_string(design_loss(c.design).kind));
    j["train_error"] = summary_json(report.train_error);
    j["test_error"] = summary_json(report.test_error);
    j["tp_rate"] = summary_json(report.tp_rate);
    j["fn_rate"] = summary_json(report.fn_rate);
    j["seeds"] = json::array();
    json rows = json::array();
    for (const auto &r : report.rows) {
        j["seeds"].push_back(r.seed);
        json row = {{"replicate", r.replicate},
                    {"seed", r.seed},
                    {"train_error", r.train_error},
                    {"test_error", r.test_error},
                    {"tp_rate", r.tp_rate},
                    {"fn_rate", r.fn_rate},
                    {"lambda1", r.hp.lambda1},
                    {"lambda2", r.hp.lambda2},
                    {"lambda3", r.hp.lambda3},
                    {"gamma", r.gamma},
                    {"cv_error", r.cv_error},
                    {"selected_variables", r.selected_variables},
                    {"w_hat", r.w_hat},
                    {"n_support_points", r.n_support_points},
                    {"iterations", static_cast<int>(r.objective_trace.size()) - 1},
                    {"converged", r.converged}};
        if (c.record_timing) row["seconds"] = r.seconds;
        rows.push_back(std::move(row));
    }
    j["rows"] = std::move(rows);
    if (c.record_timing) j["wall_seconds"] = report.wall_seconds;
    if (report.failure) j["failure"] = *report.failure;
    return j.dump(2) + "\n";
}

std::string bench_report_table(const BenchReport &report) {
    const bool reg = design_task(report.config.design) == Task::Regression;
    const double scale = reg ? 1.0 : 100.0;
    std::ostringstream os;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s  method=%s  n=%d  p0=%d  replicates=%zu\n", to_string(report.config.design).c_str(),
                  to_string(report.config.method).c_str(), report.config.n, report.config.p0, report.rows.size());
    os << buf;
    std::snprintf(buf, sizeof buf, "%-14s %-14s %-8s %-8s\n", reg ? "Train MPE" : "Train MCR%", reg ? "Test MPE" : "Test MCR%",
                  "TP", "FN");
    os << buf;
    std::snprintf(buf, sizeof buf, "%6.2f (%4.2f)  %6.2f (%4.2f)  %-8.2f %-8.2f\n", scale * report.train_error.mean,
                  scale * report.train_error.std, scale * report.test_error.mean, scale * report.test_error.std,
                  report.tp_rate.mean, report.fn_rate.mean);
    os << buf;
    if (report.failure) os << "FAILED: " << *report.failure << '\n';
    return os.str();
}

std::string bench_plot_csv(const BenchReport &report) {
    std::ostringstream os;
    os.precision(17);
    os << "x1,y,fitted,is_support\n";
    for (const auto &r : report.plot_rows) os << r.x1 << ',' << r.y << ',' << r.fitted << ',' << (r.is_support ? 1 : 0) << '\n';
    return os.str();
}

}  // namespace dosk
