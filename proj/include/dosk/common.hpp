#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace dosk {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Threshold below which |alpha_i| and w_j are treated as exact zeros.
inline constexpr double kSupportThreshold = 1e-8;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    DimensionError(const std::string &what, std::size_t expected, std::size_t actual)
        : Error(what + ": expected length " + std::to_string(expected) + ", got " + std::to_string(actual)),
          expected_(expected), actual_(actual) {}

    [[nodiscard]] std::size_t expected() const noexcept { return expected_; }
    [[nodiscard]] std::size_t actual() const noexcept { return actual_; }

private:
    std::size_t expected_;
    std::size_t actual_;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

// Raised for labels outside {+1, -1} under a margin loss, non-finite data,
// and empty or degenerate datasets.
class DataError : public Error {
public:
    using Error::Error;
};

// An iterative sub-solver hit its iteration cap. Carries the last iterate and
// the optimality residual reached.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string &what, Vector last_iterate, double residual)
        : Error(what + " (residual " + std::to_string(residual) + ")"),
          last_iterate_(std::move(last_iterate)), residual_(residual) {}

    [[nodiscard]] const Vector &last_iterate() const noexcept { return last_iterate_; }
    [[nodiscard]] double residual() const noexcept { return residual_; }

private:
    Vector last_iterate_;
    double residual_;
};

class ParseError : public Error {
public:
    ParseError(const std::string &field, const std::string &detail)
        : Error("malformed field '" + field + "': " + detail), field_(field) {}

    [[nodiscard]] const std::string &field() const noexcept { return field_; }

private:
    std::string field_;
};

inline void require_length(const char *what, Eigen::Index expected, Eigen::Index actual) {
    if (expected != actual) {
        throw DimensionError(what, static_cast<std::size_t>(expected), static_cast<std::size_t>(actual));
    }
}

}  // namespace dosk
