#pragma once

#include "dosk/common.hpp"

#include <string>
#include <string_view>

namespace dosk {

enum class LossKind { SquaredError, HuberizedHinge, Deviance };

std::string_view to_string(LossKind kind);
/// Accepts "squared", "hinge" (mapped to the huberized hinge), "huberized_hinge" and "deviance".
LossKind parse_loss_kind(std::string_view name);

struct LossSpec {
    LossKind kind = LossKind::SquaredError;
    double huber_delta = 0.5;

    void validate() const;
    [[nodiscard]] bool is_margin() const noexcept { return kind != LossKind::SquaredError; }

    friend bool operator==(const LossSpec &, const LossSpec &) = default;
};

/// L(y, f). Margin losses require y in {+1, -1}.
double loss_value(const LossSpec &spec, double y, double f);

/// dL/df.
double loss_derivative(const LossSpec &spec, double y, double f);

/// Global upper bound on d^2 L / df^2: 2 (squared), 1/delta (huberized hinge), 1/4 (deviance).
double loss_curvature_bound(const LossSpec &spec);

/// Throws DataError unless every label is +1 or -1 (margin losses only).
void check_labels(const LossSpec &spec, const Eigen::Ref<const Vector> &y);

}  // namespace dosk
