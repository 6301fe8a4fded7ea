#pragma once

#include "dosk/common.hpp"
#include "dosk/kernel.hpp"
#include "dosk/loss.hpp"

#include <cstdint>
#include <vector>

namespace dosk {

/// Penalty weights of the double-sparsity objective
///   (1/n) sum L(y_i, (K_w alpha)_i + b) + lambda1 |alpha|_1 + lambda2 |w|_1 + lambda3 alpha' K_w alpha.
struct Hyperparams {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double lambda3 = 0.5;

    void validate() const;
    friend bool operator==(const Hyperparams &, const Hyperparams &) = default;
};

struct SolverConfig {
    int max_outer_iters = 300;
    double tol_objective = 1e-3;
    int inner_w_iters = 50;
    double tol_w = 1e-4;
    int line_search_max_halvings = 50;
    double armijo_c = 1e-4;
    int n_starts = 1;
    std::uint64_t seed = 0;
    /// Keep w at its starting value (all ones) and skip the w-step.
    bool freeze_w = false;

    // Sub-solver tolerances and caps.
    double alpha_kkt_tol = 1e-6;
    int alpha_max_sweeps = 5000;
    double w_qp_tol = 1e-6;
    int w_qp_max_iters = 20000;

    void validate() const;
};

struct IterateState {
    Vector w;
    Vector alpha;
    double b = 0.0;
};

struct FitTrace {
    /// Objective at the starting point followed by one value per outer iteration.
    std::vector<double> objective_per_iter;
    /// Accepted w step size per outer iteration (1 when the QP solution was taken as is).
    std::vector<double> step_sizes;
    /// |w_t - w_{t-1}|_2 per outer iteration.
    std::vector<double> w_change;
    int line_search_invocations = 0;
    bool converged = false;
    int iters_used = 0;
    /// Index of the start that produced the returned state.
    int best_start = 0;
};

struct FitResult {
    IterateState state;
    FitTrace trace;
};

/// Value of the objective at state; K must be the gram at state.w.
double objective(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
                 const LossSpec &loss, const Hyperparams &hp);

/// Largest violation of the subgradient optimality conditions of the alpha
/// subproblem at (alpha, b) for fixed K.
double alpha_kkt_residual(const IterateState &state, const Eigen::Ref<const Matrix> &K,
                          const Eigen::Ref<const Vector> &y, const LossSpec &loss, const Hyperparams &hp);

/// Minimizes (1/n) sum L(y_i, (K alpha)_i + b) + lambda1 |alpha|_1 + lambda3 alpha' K alpha over alpha
/// by proximal Newton steps with a coordinate descent fallback, warm-started at state.alpha.
/// Throws ConvergenceError if the KKT residual stays above cfg.alpha_kkt_tol after cfg.alpha_max_sweeps.
Vector alpha_step(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
                  const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg);

/// Scalar minimizer of (1/n) sum L(y_i, (K alpha)_i + b).
double b_step(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
              const LossSpec &loss);

/// Linearized w subproblem built at anchor:
///   min_{w in [0,1]^p} (1/n) sum L(y_i, (A w + B alpha)_i + b) + lambda2 sum w + lambda3 alpha' A w.
struct WSubproblem {
    Matrix A;           // slope at the anchor
    Vector offset;      // B alpha + b, so fitted values are A w + offset
    Vector linear_term; // lambda2 + lambda3 A' alpha
    Vector anchor;
};

WSubproblem make_w_subproblem(const IterateState &state, const Eigen::Ref<const Matrix> &X,
                              const Eigen::Ref<const Vector> &y, const KernelSpec &kernel, const Hyperparams &hp,
                              const Eigen::Ref<const Vector> &anchor);

double w_subproblem_value(const WSubproblem &qp, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Vector> &y,
                          const LossSpec &loss);

/// Projected-gradient solution of the subproblem started from start_w.
/// Throws ConvergenceError when the projected-gradient norm stays above cfg.w_qp_tol.
Vector solve_w_subproblem(const WSubproblem &qp, const Eigen::Ref<const Vector> &y, const LossSpec &loss,
                          const Eigen::Ref<const Vector> &start_w, const SolverConfig &cfg);

/// Builds the subproblem at anchor and solves it from anchor.
Vector w_step_qp(const IterateState &state, const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y,
                 const KernelSpec &kernel, const LossSpec &loss, const Hyperparams &hp,
                 const Eigen::Ref<const Vector> &anchor, const SolverConfig &cfg);

/// Gradient of the objective in w at state.w (one-sided at the box faces).
Vector objective_gradient_w(const IterateState &state, const Eigen::Ref<const Matrix> &X,
                            const Eigen::Ref<const Vector> &y, const KernelSpec &kernel, const LossSpec &loss,
                            const Hyperparams &hp);

/// Backtracking (halving from s = 1) Armijo search along direction on the true
/// objective. Returns 0 when no sufficient decrease is found within the cap.
double line_search(const IterateState &state, const Eigen::Ref<const Vector> &direction,
                   const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const KernelSpec &kernel,
                   const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg);

/// Alternating alpha / b / w minimization with the monotonicity guard and
/// multi-start selection. X is expected to be pre-scaled.
FitResult fit_dosk(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const KernelSpec &kernel,
                   const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg);

}  // namespace dosk
