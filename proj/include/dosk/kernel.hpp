#pragma once

#include "dosk/common.hpp"

#include <string>
#include <string_view>

namespace dosk {

enum class KernelFamily { Linear, Polynomial, Gaussian, Laplacian };

std::string_view to_string(KernelFamily family);
KernelFamily parse_kernel_family(std::string_view name);

/// Kernel family plus hyperparameters. gamma is used by Gaussian/Laplacian,
/// offset_c and degree_d by Polynomial.
struct KernelSpec {
    KernelFamily family = KernelFamily::Gaussian;
    double gamma = 0.5;
    double offset_c = 1.0;
    int degree_d = 2;

    /// Throws InvalidArgument when gamma or degree_d is out of range for the family.
    void validate() const;

    friend bool operator==(const KernelSpec &, const KernelSpec &) = default;
};

/// K_w(x1, x2) = K(w .* x1, w .* x2).
double eval_weighted_kernel(const KernelSpec &spec, const Eigen::Ref<const Vector> &w,
                            const Eigen::Ref<const Vector> &x1, const Eigen::Ref<const Vector> &x2);

/// Analytic dK_w(x1, x2)/dw. For the Laplacian family the partial derivative is
/// taken as 0 wherever w_k |x1k - x2k| = 0.
Vector kernel_gradient(const KernelSpec &spec, const Eigen::Ref<const Vector> &w,
                       const Eigen::Ref<const Vector> &x1, const Eigen::Ref<const Vector> &x2);

/// Symmetric n x n gram over the rows of X.
Matrix gram_matrix(const KernelSpec &spec, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Matrix> &X);

/// m x n matrix with entry (i, j) = K_w(Xa_i, Xb_j).
Matrix cross_gram(const KernelSpec &spec, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Matrix> &Xa,
                  const Eigen::Ref<const Matrix> &Xb);

/// First-order expansion of w -> K_w alpha around anchor_w:
///   K_w alpha ~= A w + B alpha.
struct Linearization {
    Matrix A;  // n x p, row i = sum_j alpha_j grad_w K(x_i, x_j)^T
    Matrix B;  // n x n, B(i,j) = K(x_i, x_j) - grad_w K(x_i, x_j)^T anchor_w
    Vector anchor_w;

    /// A w + B alpha.
    [[nodiscard]] Vector apply(const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Vector> &alpha) const;
};

Linearization linearize(const KernelSpec &spec, const Eigen::Ref<const Vector> &w0,
                        const Eigen::Ref<const Vector> &alpha, const Eigen::Ref<const Matrix> &X);

/// Only the A factor of the linearization. gram_w0 must be gram_matrix(spec, w0, X);
/// rows j with alpha_j == 0 are skipped.
Matrix linearization_slope(const KernelSpec &spec, const Eigen::Ref<const Vector> &w0,
                           const Eigen::Ref<const Vector> &alpha, const Eigen::Ref<const Matrix> &X,
                           const Eigen::Ref<const Matrix> &gram_w0);

/// Median of the pairwise Euclidean distances between rows of X.
double median_pairwise_distance(const Eigen::Ref<const Matrix> &X);

/// gamma = 1 / (2 sigma^2) with sigma the median pairwise distance.
double median_heuristic_gamma(const Eigen::Ref<const Matrix> &X);

}  // namespace dosk
