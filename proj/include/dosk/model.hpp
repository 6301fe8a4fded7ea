#pragma once

#include "dosk/common.hpp"
#include "dosk/kernel.hpp"
#include "dosk/loss.hpp"
#include "dosk/simdata.hpp"
#include "dosk/solver.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace dosk {

inline constexpr int kModelFormatVersion = 1;

struct SupportPoint {
    int index = 0;  // row in the training data
    Vector x;       // in scaled (standardized) coordinates
    double alpha = 0.0;

    friend bool operator==(const SupportPoint &a, const SupportPoint &b) {
        return a.index == b.index && a.x == b.x && a.alpha == b.alpha;
    }
};

struct TraceSummary {
    double objective = 0.0;
    int iterations = 0;
    bool converged = false;

    friend bool operator==(const TraceSummary &, const TraceSummary &) = default;
};

/// Fitted estimator. Prediction only touches the support points:
///   f(x) = sum_j alpha_j K_w(x_j, s(x)) + b,  s = standardizer.
struct DoskModel {
    KernelSpec kernel;
    LossSpec loss;
    Hyperparams lambda;
    Vector w_hat;
    std::vector<SupportPoint> support;
    double b_hat = 0.0;
    Standardizer standardizer;
    TraceSummary trace_summary;

    [[nodiscard]] Eigen::Index p() const { return w_hat.size(); }

    friend bool operator==(const DoskModel &a, const DoskModel &b) {
        return a.kernel == b.kernel && a.loss == b.loss && a.lambda == b.lambda && a.w_hat == b.w_hat &&
               a.support == b.support && a.b_hat == b.b_hat && a.standardizer == b.standardizer &&
               a.trace_summary == b.trace_summary;
    }
};

struct FitOptions {
    KernelSpec kernel;
    LossSpec loss;
    Hyperparams hp;
    SolverConfig solver;
    /// Min-max scale predictors to [0,1] using the training ranges.
    bool standardize = true;
};

struct ModelFit {
    DoskModel model;
    FitTrace trace;
};

ModelFit fit_model(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const FitOptions &opts);

/// Decision values f(x) for each row of X_new (raw coordinates).
Vector predict(const DoskModel &model, const Eigen::Ref<const Matrix> &X_new);

/// {j : w_j > 1e-8}
std::vector<int> selected_variables(const DoskModel &model);
/// Training row indices with |alpha_i| > 1e-8.
std::vector<int> selected_points(const DoskModel &model);

/// How grid penalties relate to the mean-loss objective. PerObservation divides
/// lambda1..lambda3 by the number of training rows in each fit, which equals
/// weighting the same penalties against the summed loss.
enum class PenaltyScale { Absolute, PerObservation };

std::string_view to_string(PenaltyScale scale);
/// Accepts "absolute" and "per-obs" (alias "per_observation").
PenaltyScale parse_penalty_scale(std::string_view name);

/// Penalties actually used in a fit on n rows.
Hyperparams effective_hyperparams(const Hyperparams &nominal, PenaltyScale scale, Eigen::Index n);

/// How the winning grid cell is chosen. MinError takes the smallest mean CV
/// error. OneStandardError takes the sparsest cell (same order as the tie rule)
/// whose mean error is within one standard error of that minimum, the standard
/// error being the spread of the best cell's fold errors over sqrt(folds).
enum class CvRule { MinError, OneStandardError };

std::string_view to_string(CvRule rule);
/// Accepts "min" and "1se".
CvRule parse_cv_rule(std::string_view name);

struct CvGrid {
    std::vector<double> lambda1_candidates{0.0, 0.25, 0.5};
    std::vector<double> lambda2_candidates{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};
    std::vector<double> gamma_candidates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
    double lambda3_fixed = 0.5;
    int folds = 5;
    /// Replace the gamma axis by the median heuristic on the scaled training data.
    bool gamma_median = false;
    /// Skip the w-step in every cell (standard squared-norm kernel learning when lambda1 = lambda2 = 0).
    bool freeze_w = false;
    PenaltyScale penalty_scale = PenaltyScale::Absolute;
    CvRule rule = CvRule::MinError;

    void validate() const;
};

struct CvCell {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double gamma = 0.0;
    double cv_error = 0.0;
    std::vector<double> fold_errors;
};

struct CvResult {
    /// Nominal grid values; see effective_hyperparams for the refit.
    Hyperparams best_hp;
    KernelSpec best_kernel;
    CvCell best;
    std::vector<CvCell> table;  // lambda1-major, then lambda2, then gamma
};

/// Fold assignment: shuffled round-robin; stratified by label for classification.
std::vector<int> make_folds(const Eigen::Ref<const Vector> &y, Task task, int folds, std::uint64_t seed);

/// True when (a) should be preferred over (b): smaller CV error, then larger
/// lambda1, larger lambda2, smaller gamma.
bool cv_cell_better(const CvCell &a, const CvCell &b);

/// Index into table of the selected cell under rule. The result does not
/// depend on the order of table.
std::size_t select_cv_cell(const std::vector<CvCell> &table, CvRule rule);

/// Grid search with k-fold CV. Regression cells are scored by MPE,
/// classification cells by MCR on the held-out folds. jobs > 1 evaluates cells
/// on worker threads; the table does not depend on jobs.
CvResult cross_validate(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, Task task,
                        const KernelSpec &base_kernel, const LossSpec &loss, const CvGrid &grid,
                        const SolverConfig &cfg, std::uint64_t seed, bool standardize = true, int jobs = 1);

std::string model_to_json(const DoskModel &model);
DoskModel model_from_json(const std::string &text);
void save_model(const DoskModel &model, const std::string &path);
DoskModel load_model(const std::string &path);

}  // namespace dosk
