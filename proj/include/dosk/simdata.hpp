#pragma once

#include "dosk/common.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

namespace dosk {

enum class Task { Regression, Classification };

std::string to_string(Task task);
Task parse_task(const std::string &name);

struct Dataset {
    Matrix X;
    Vector y;
    /// true marks a genuinely informative predictor.
    std::optional<std::vector<bool>> signal_mask;
    Task task = Task::Regression;
    std::vector<std::string> column_names;

    [[nodiscard]] Eigen::Index n() const { return X.rows(); }
    [[nodiscard]] Eigen::Index p() const { return X.cols(); }
    void validate() const;
};

using Rng = std::mt19937_64;

/// y = 10 sin(x1) 1{0 < x1 < 2 pi} + N(0,1); x_ij ~ U[-2 pi, 4 pi] for 1 + p0 columns.
Dataset gen_regression1(int n, int p0, Rng &rng);
Dataset gen_regression1(int n, int p0, std::uint64_t seed);
double regression1_mean(double x1);

/// y = 10 sum_{j<4} exp(-x_j^2) + N(0,1); x_ij ~ U[-6, 6] for 4 + p0 columns.
Dataset gen_regression2(int n, int p0, Rng &rng);
Dataset gen_regression2(int n, int p0, std::uint64_t seed);
double regression2_mean(const Eigen::Ref<const Vector> &x);

/// Balanced two-class design. Class +1 signal coordinates ~ N(0, I_d); class -1
/// drawn from N(0, I_d) restricted to 9 < |x|^2 < 16. Noise coordinates ~ N(0, 0.1)
/// (variance) for both classes. Rows alternate +1, -1.
Dataset gen_classification(int n, int signal_dim, int p0, Rng &rng);
Dataset gen_classification(int n, int signal_dim, int p0, std::uint64_t seed);

/// Draws one shell sample by rejection; attempts is incremented per proposal.
Vector sample_shell(int signal_dim, Rng &rng, std::uint64_t &attempts);

/// Per-column min-max transform fitted on training data. Constant columns map to 0.
struct Standardizer {
    std::vector<std::pair<double, double>> ranges;  // (min, max) per column

    static Standardizer fit(const Eigen::Ref<const Matrix> &X_train);
    static Standardizer identity(Eigen::Index p);
    [[nodiscard]] Matrix apply(const Eigen::Ref<const Matrix> &X) const;
    [[nodiscard]] Eigen::Index p() const { return static_cast<Eigen::Index>(ranges.size()); }

    friend bool operator==(const Standardizer &, const Standardizer &) = default;
};

struct StandardizeResult {
    Matrix train;
    std::vector<Matrix> others;
    Standardizer scaler;
};

StandardizeResult standardize(const Eigen::Ref<const Matrix> &X_train, const std::vector<Matrix> &others = {});

/// Mean squared difference.
double mpe(const Eigen::Ref<const Vector> &pred, const Eigen::Ref<const Vector> &y);
/// Fraction of y_i != sign(pred_i), with sign(0) = +1.
double mcr(const Eigen::Ref<const Vector> &pred, const Eigen::Ref<const Vector> &y);

struct SelectionRates {
    double tp_rate = 0.0;  // signal variables selected / signal variables
    double fn_rate = 0.0;  // noise variables selected / noise variables
};

SelectionRates selection_rates(const std::vector<int> &selected, const std::vector<bool> &signal_mask);

/// CSV with a header row. label names the response column; all other columns
/// are predictors in file order. Throws DataError("label column not found") etc.
Dataset read_csv(std::istream &in, const std::string &label, Task task);
Dataset read_csv_file(const std::string &path, const std::string &label, Task task);

/// Predictor matrix only. A column named drop_column is skipped when present;
/// an empty name keeps every column.
Matrix read_csv_predictors(std::istream &in, const std::string &drop_column = "");
Matrix read_csv_predictors_file(const std::string &path, const std::string &drop_column = "");

/// Writes predictors then the response column (named label).
void write_csv(std::ostream &out, const Dataset &data, const std::string &label = "y");
void write_csv_file(const std::string &path, const Dataset &data, const std::string &label = "y");

/// JSON sidecar {"signal": [bool...], "task": ..., "label": ...}.
void write_signal_sidecar(const std::string &path, const Dataset &data, const std::string &label = "y");

}  // namespace dosk
