// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include "dosk/bench.hpp"
#include "dosk/kernel.hpp"
#include "dosk/solver.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <chrono>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace dosk;
using testutil::random_matrix;
using testutil::to_oracle;

namespace {

int failures = 0;
std::map<int, std::string> lines;

void report(int id, bool ok, const std::string &what, const std::string &detail) {
    const std::string line =
        "ACCEPTANCE " + std::to_string(id) + ' ' + (ok ? "PASS" : "FAIL") + ": " + what + " | " + detail;
    std::cerr << line << std::endl;
    lines[id] = line;
    if (!ok) ++failures;
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

int jobs() {
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

struct TimedReport {
    BenchReport report;
    double seconds;
};

TimedReport bench(Design design, int n, int p0, BenchMethod method) {
    BenchConfig cfg;
    cfg.design = design;
    cfg.n = n;
    cfg.p0 = p0;
    cfg.replicates = 10;
    cfg.seed = 0;
    cfg.method = method;
    cfg.jobs = jobs();
    const auto t0 = std::chrono::steady_clock::now();
    BenchReport r = run_bench(cfg);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << "bench " << to_string(design) << ' ' << to_string(method) << ": " << fmt(secs, 5) << " s\n"
              << bench_report_table(r);
    return {std::move(r), secs};
}

std::string summary(const BenchReport &r, bool percent) {
    const double s = percent ? 100.0 : 1.0;
    return "test " + fmt(s * r.test_error.mean) + (percent ? "%" : "") + " (sd " + fmt(s * r.test_error.std) +
           "), TP " + fmt(r.tp_rate.mean) + ", FN " + fmt(r.fn_rate.mean);
}

// Largest single-step increase of an objective trace.
double worst_increase(const std::vector<double> &trace) {
    double worst = -1e300;
    for (std::size_t i = 1; i < trace.size(); ++i) worst = std::max(worst, trace[i] - trace[i - 1]);
    return trace.size() < 2 ? 0.0 : worst;
}

LossSpec loss_of(LossKind k) {
    LossSpec s;
    s.kind = k;
    return s;
}

oracle::Loss oracle_loss(LossKind k) {
    switch (k) {
    case LossKind::SquaredError: return oracle::Loss::Squared;
    case LossKind::HuberizedHinge: return oracle::Loss::Hinge;
    case LossKind::Deviance: return oracle::Loss::Deviance;
    }
    return oracle::Loss::Squared;
}

Vector balanced_labels(std::mt19937_64 &rng, Eigen::Index n) {
    Vector y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = i % 2 == 0 ? 1.0 : -1.0;
    std::shuffle(y.data(), y.data() + n, rng);
    return y;
}

double random_instances_worst_increase() {
    std::mt19937_64 rng(2024);
    const KernelFamily families[] = {KernelFamily::Gaussian, KernelFamily::Laplacian, KernelFamily::Polynomial,
                                     KernelFamily::Linear};
    const LossKind losses[] = {LossKind::SquaredError, LossKind::HuberizedHinge, LossKind::Deviance};
    double worst = -1e300;
    for (int t = 0; t < 50; ++t) {
        std::uniform_int_distribution<int> nd(15, 40), pd(2, 6);
        const int n = nd(rng), p = pd(rng);
        const Matrix X = random_matrix(rng, n, p);
        const LossKind lk = losses[t % 3];
        Vector y(n);
        if (lk == LossKind::SquaredError) {
            y = random_matrix(rng, n, 1, -2, 2).col(0);
            for (Eigen::Index i = 0; i < n; ++i) y(i) += 3.0 * std::sin(5.0 * X(i, 0));
        } else {
            y = balanced_labels(rng, n);
        }
        KernelSpec ks;
        ks.family = families[t % 4];
        ks.gamma = std::uniform_real_distribution<double>(0.2, 3.0)(rng);
        std::uniform_real_distribution<double> lam(0.0, 0.1);
        const Hyperparams hp{lam(rng), lam(rng), lam(rng) + 1e-3};
        SolverConfig cfg;
        cfg.n_starts = 1 + t % 2;
        cfg.seed = static_cast<std::uint64_t>(t);
        const FitResult fit = fit_dosk(X, y, ks, loss_of(lk), hp, cfg);
        worst = std::max(worst, worst_increase(fit.trace.objective_per_iter));
    }
    return worst;
}

void criterion6() {
    std::mt19937_64 rng(6);
    double worst = 0.0;
    for (KernelFamily f : {KernelFamily::Linear, KernelFamily::Polynomial, KernelFamily::Gaussian,
                           KernelFamily::Laplacian}) {
        KernelSpec s;
        s.family = f;
        s.gamma = 0.8;
        s.degree_d = 3;
        const oracle::Kern ok = to_oracle(s);
        for (int t = 0; t < 20; ++t) {
            const Vector w = random_matrix(rng, 5, 1, 0.05, 0.95).col(0);
            const Vector a = random_matrix(rng, 5, 1).col(0);
            const Vector b = random_matrix(rng, 5, 1).col(0);
            const Vector g = kernel_gradient(s, w, a, b);
            const Vector fd = oracle::fd_gradient(ok, w, a, b, 1e-6);
            for (Eigen::Index k = 0; k < w.size(); ++k) {
                const double err = std::abs(g(k) - fd(k));
                const double rel = std::abs(fd(k)) > 1e-3 ? err / std::abs(fd(k)) : err;
                worst = std::max(worst, rel);
            }
        }
    }
    report(6, worst < 1e-5, "kernel gradients vs central differences, 20 configurations x 4 families",
           "max relative error " + fmt(worst, 3) + " (limit 1e-5)");
}

void criterion7() {
    std::mt19937_64 rng(7);
    double anchor_err = 0.0;
    for (KernelFamily f : {KernelFamily::Linear, KernelFamily::Polynomial, KernelFamily::Gaussian,
                           KernelFamily::Laplacian}) {
        KernelSpec s;
        s.family = f;
        for (int t = 0; t < 5; ++t) {
            const Matrix X = random_matrix(rng, 10, 3);
            const Vector w0 = random_matrix(rng, 3, 1).col(0);
            const Vector alpha = random_matrix(rng, 10, 1, -1, 1).col(0);
            const Linearization lin = linearize(s, w0, alpha, X);
            anchor_err = std::max(anchor_err, (lin.apply(w0, alpha) - gram_matrix(s, w0, X) * alpha).cwiseAbs().maxCoeff());
        }
    }
    bool monotone = true;
    std::string ratios;
    for (KernelFamily f : {KernelFamily::Gaussian, KernelFamily::Polynomial}) {
        KernelSpec s;
        s.family = f;
        const Matrix X = random_matrix(rng, 10, 3);
        const Vector w0 = random_matrix(rng, 3, 1, 0.2, 0.8).col(0);
        const Vector alpha = random_matrix(rng, 10, 1, -1, 1).col(0);
        Vector dir = random_matrix(rng, 3, 1, -1, 1).col(0);
        dir.normalize();
        const Linearization lin = linearize(s, w0, alpha, X);
        double prev = 1e300;
        ratios += std::string(to_string(f)) + " [";
        for (double h : {1e-1, 1e-2, 1e-3}) {
            const Vector w1 = w0 + h * dir;
            const double r = (gram_matrix(s, w1, X) * alpha - lin.apply(w1, alpha)).norm() / h;
            monotone = monotone && r < prev;
            prev = r;
            ratios += fmt(r, 3) + (h > 1e-3 ? " " : "] ");
        }
    }
    report(7, anchor_err <= 1e-12 && monotone, "linearization anchor identity and shrinking residual ratio",
           "anchor error " + fmt(anchor_err, 3) + " (limit 1e-12); r(h)/h " + ratios);
}

void criterion8() {
    std::mt19937_64 rng(8);
    double ridge_err = 0.0;
    for (int t = 0; t < 10; ++t) {
        const Matrix X = random_matrix(rng, 30, 3);
        Vector y = random_matrix(rng, 30, 1, -1, 1).col(0);
        for (Eigen::Index i = 0; i < 30; ++i) y(i) += 2.0 * std::cos(4.0 * X(i, 1));
        KernelSpec ks;
        ks.gamma = std::uniform_real_distribution<double>(0.3, 2.0)(rng);
        const double l3 = std::uniform_real_distribution<double>(0.005, 0.2)(rng);
        SolverConfig cfg;
        cfg.freeze_w = true;
        const FitResult fit = fit_dosk(X, y, ks, loss_of(LossKind::SquaredError), Hyperparams{0, 0, l3}, cfg);
        const Matrix K = gram_matrix(ks, Vector::Ones(3), X);
        const oracle::RidgeFit ref = oracle::kernel_ridge(oracle::gram(to_oracle(ks), Vector::Ones(3), X), y, l3);
        const Vector fitted = K * fit.state.alpha + Vector::Constant(30, fit.state.b);
        ridge_err = std::max(ridge_err, (fitted - ref.fitted).cwiseAbs().maxCoeff());
    }

    double alpha_gap = 0.0;
    for (int t = 0; t < 10; ++t) {
        const LossKind lk = t % 2 == 0 ? LossKind::SquaredError : LossKind::Deviance;
        const Matrix X = random_matrix(rng, 5, 2);
        KernelSpec ks;
        ks.gamma = 1.5;
        const Matrix K = gram_matrix(ks, Vector::Ones(2), X);
        const Vector y = lk == LossKind::SquaredError ? Vector(random_matrix(rng, 5, 1, -2, 2).col(0))
                                                      : balanced_labels(rng, 5);
        const double b = std::uniform_real_distribution<double>(-0.5, 0.5)(rng);
        const Hyperparams hp{std::uniform_real_distribution<double>(0.0, 0.1)(rng), 0.0, 0.1};
        IterateState st{Vector::Ones(2), Vector::Zero(5), b};
        st.alpha = alpha_step(st, K, y, loss_of(lk), hp, SolverConfig{});
        const double phi = objective(st, K, y, loss_of(lk), hp);
        const Vector ref = oracle::alpha_projected_gradient(oracle_loss(lk), K, y, b, hp.lambda1, hp.lambda3, 1e-8);
        const double phi_ref =
            oracle::objective(oracle_loss(lk), K, y, ref, b, Vector::Ones(2), hp.lambda1, 0.0, hp.lambda3);
        alpha_gap = std::max(alpha_gap, std::abs(phi - phi_ref));
    }

    double w_gap = 0.0;
    for (int t = 0; t < 5; ++t) {
        const Matrix X = random_matrix(rng, 6, 2);
        const Vector y = random_matrix(rng, 6, 1, -1, 1).col(0);
        KernelSpec ks;
        ks.gamma = 1.0;
        const Vector alpha = random_matrix(rng, 6, 1, -1, 1).col(0);
        const Vector anchor = random_matrix(rng, 2, 1, 0.2, 0.8).col(0);
        const Hyperparams hp{0.0, 0.05, 0.1};
        IterateState st{anchor, alpha, 0.1};
        const Vector w = w_step_qp(st, X, y, ks, loss_of(LossKind::SquaredError), hp, anchor, SolverConfig{});
        const oracle::GridResult g =
            oracle::w_grid_search(oracle::Loss::Squared, to_oracle(ks), X, y, alpha, 0.1, anchor, 0.05, 0.1, 1e-3);
        w_gap = std::max(w_gap, (w - g.w).cwiseAbs().maxCoeff());
    }
    const bool ok = ridge_err <= 1e-4 && alpha_gap <= 1e-6 && w_gap <= 2e-3;
    report(8, ok, "reduction oracles: kernel ridge, alpha-step, w-step",
           "(a) max fitted gap " + fmt(ridge_err, 3) + " (limit 1e-4); (b) max objective gap " + fmt(alpha_gap, 3) +
               " (limit 1e-6); (c) max coordinate gap " + fmt(w_gap, 3) + " (limit 2e-3)");
}

}  // namespace

int main() {
    std::cout << "acceptance suite, workers: " << jobs() << std::endl;
    criterion6();
    criterion7();
    criterion8();

    std::vector<const BenchReport *> all;

    const TimedReport reg1 = bench(Design::Regression1, 100, 2, BenchMethod::Dosk);
    {
        const BenchReport &r = reg1.report;
        const bool ok = !r.failure && reg1.seconds <= 900.0 && r.test_error.mean >= 1.0 && r.test_error.mean <= 2.6 &&
                        r.tp_rate.mean >= 0.95 && r.fn_rate.mean <= 0.10;
        report(1, ok, "reg1 n=100 p0=2, 10 replicates: time <= 900 s, MPE in [1.0, 2.6], TP >= 0.95, FN <= 0.10",
               summary(r, false) + ", " + fmt(reg1.seconds, 4) + " s");
    }

    const TimedReport reg2 = bench(Design::Regression2, 100, 2, BenchMethod::Dosk);
    const TimedReport reg2_l2 = bench(Design::Regression2, 100, 2, BenchMethod::L2Kernel);
    {
        const BenchReport &r = reg2.report;
        const bool ok = !r.failure && !reg2_l2.report.failure && r.test_error.mean <= 13.0 &&
                        r.test_error.mean < reg2_l2.report.test_error.mean;
        report(2, ok, "reg2 n=100 p0=2, 10 replicates: MPE <= 13 and below the frozen-w reduction",
               summary(r, false) + "; frozen-w test " + fmt(reg2_l2.report.test_error.mean));
    }

    const TimedReport class1 = bench(Design::Classification1, 200, 8, BenchMethod::Dosk);
    const TimedReport class1_l2 = bench(Design::Classification1, 200, 8, BenchMethod::L2Kernel);
    {
        const BenchReport &r = class1.report;
        const bool ok = !r.failure && !class1_l2.report.failure && r.test_error.mean <= 0.045 &&
                        r.tp_rate.mean == 1.0 && r.fn_rate.mean <= 0.05 && class1_l2.report.test_error.mean > 0.08;
        report(3, ok,
               "class1 n=200 p0=8, 10 replicates: MCR <= 4.5%, TP = 1, FN <= 0.05, frozen-w reduction MCR > 8%",
               summary(r, true) + "; frozen-w test " + fmt(100.0 * class1_l2.report.test_error.mean) + "%");
    }

    const TimedReport class2 = bench(Design::Classification2, 200, 8, BenchMethod::Dosk);
    {
        const BenchReport &r = class2.report;
        const bool ok = !r.failure && r.test_error.mean <= 0.09 && r.tp_rate.mean == 1.0 && r.fn_rate.mean <= 0.05;
        report(4, ok, "class2 n=200 p0=8, 10 replicates: MCR <= 9%, TP = 1, FN <= 0.05", summary(r, true));
    }

    {
        double worst = -1e300;
        std::size_t traces = 0;
        for (const TimedReport *t : {&reg1, &reg2, &reg2_l2, &class1, &class1_l2, &class2}) {
            for (const ReplicateRow &row : t->report.rows) {
                worst = std::max(worst, worst_increase(row.objective_trace));
                ++traces;
            }
        }
        const double random_worst = random_instances_worst_increase();
        worst = std::max(worst, random_worst);
        report(5, worst <= 1e-10, "objective traces never increase by more than 1e-10",
               std::to_string(traces) + " benchmark fits + 50 random instances, largest step increase " +
                   fmt(worst, 3));
    }

    {
        BenchConfig cfg;
        cfg.design = Design::Regression1;
        cfg.n = 100;
        cfg.p0 = 2;
        cfg.replicates = 10;
        cfg.jobs = jobs();
        const std::string first = bench_report_json(reg1.report);
        const std::string second = bench_report_json(run_bench(cfg));
        report(9, first == second, "repeated bench runs give byte-identical reports",
               "reg1 report, " + std::to_string(first.size()) + " bytes, " + (first == second ? "identical" : "differs"));
    }

    for (const auto &[id, line] : lines) std::cout << line << '\n';
    std::cout << (failures == 0 ? "all acceptance criteria passed" : std::to_string(failures) + " criteria failed")
              << std::endl;
    return failures == 0 ? 0 : 1;
}
