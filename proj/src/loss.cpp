#include "dosk/loss.hpp"

#include <cmath>

namespace dosk {

namespace {

void check_label(double y) {
    if (y != 1.0 && y != -1.0) {
        throw DataError("margin loss requires labels in {+1, -1}, got " + std::to_string(y));
    }
}

// log(1 + exp(-u)) without overflow.
double log1p_exp_neg(double u) {
    if (u > 0.0) return std::log1p(std::exp(-u));
    return -u + std::log1p(std::exp(u));
}

}  // namespace

std::string_view to_string(LossKind kind) {
    switch (kind) {
    case LossKind::SquaredError: return "squared";
    case LossKind::HuberizedHinge: return "hinge";
    case LossKind::Deviance: return "deviance";
    }
    return "unknown";
}

LossKind parse_loss_kind(std::string_view name) {
    if (name == "squared") return LossKind::SquaredError;
    if (name == "hinge" || name == "huberized_hinge") return LossKind::HuberizedHinge;
    if (name == "deviance" || name == "logistic") return LossKind::Deviance;
    throw InvalidArgument("unknown loss '" + std::string(name) + "'");
}

void LossSpec::validate() const {
    if (kind == LossKind::HuberizedHinge && !(huber_delta > 0.0 && std::isfinite(huber_delta))) {
        throw InvalidArgument("huber_delta must be positive");
    }
}

double loss_value(const LossSpec &spec, double y, double f) {
    switch (spec.kind) {
    case LossKind::SquaredError: {
        const double r = y - f;
        return r * r;
    }
    case LossKind::HuberizedHinge: {
        check_label(y);
        const double u = y * f;
        const double delta = spec.huber_delta;
        if (u >= 1.0) return 0.0;
        if (u > 1.0 - delta) {
            const double t = 1.0 - u;
            return t * t / (2.0 * delta);
        }
        return (1.0 - u) - 0.5 * delta;
    }
    case LossKind::Deviance:
        check_label(y);
        return log1p_exp_neg(y * f);
    }
    return 0.0;
}

double loss_derivative(const LossSpec &spec, double y, double f) {
    switch (spec.kind) {
    case LossKind::SquaredError: return 2.0 * (f - y);
    case LossKind::HuberizedHinge: {
        check_label(y);
        const double u = y * f;
        const double delta = spec.huber_delta;
        if (u >= 1.0) return 0.0;
        if (u > 1.0 - delta) return -y * (1.0 - u) / delta;
        return -y;
    }
    case LossKind::Deviance: {
        check_label(y);
        const double u = y * f;
        // -y / (1 + exp(u))
        if (u > 0.0) {
            const double e = std::exp(-u);
            return -y * e / (1.0 + e);
        }
        return -y / (1.0 + std::exp(u));
    }
    }
    return 0.0;
}

double loss_curvature_bound(const LossSpec &spec) {
    switch (spec.kind) {
    case LossKind::SquaredError: return 2.0;
    case LossKind::HuberizedHinge: return 1.0 / spec.huber_delta;
    case LossKind::Deviance: return 0.25;
    }
    return 0.0;
}

void check_labels(const LossSpec &spec, const Eigen::Ref<const Vector> &y) {
    if (!spec.is_margin()) return;
    for (Eigen::Index i = 0; i < y.size(); ++i) check_label(y[i]);
}

}  // namespace dosk
