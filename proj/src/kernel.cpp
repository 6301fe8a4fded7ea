#include "dosk/kernel.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace dosk {

namespace {

// Shared by the pointwise and matrix routines so gram entries match
// eval_weighted_kernel bit for bit. a and b are rows, w weights, length p.
double pair_value(const KernelSpec &spec, const double *w, const double *a, std::ptrdiff_t sa, const double *b,
                  std::ptrdiff_t sb, Eigen::Index p) {
    switch (spec.family) {
    case KernelFamily::Linear: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) s += w[k] * w[k] * (a[k * sa] * b[k * sb]);
        return s;
    }
    case KernelFamily::Polynomial: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) s += w[k] * w[k] * (a[k * sa] * b[k * sb]);
        return std::pow(spec.offset_c + s, spec.degree_d);
    }
    case KernelFamily::Gaussian: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) {
            const double t = w[k] * (a[k * sa] - b[k * sb]);
            s += t * t;
        }
        return std::exp(-spec.gamma * s);
    }
    case KernelFamily::Laplacian: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) s += std::abs(w[k] * (a[k * sa] - b[k * sb]));
        return std::exp(-spec.gamma * s);
    }
    }
    return 0.0;
}

void check_weights(const Eigen::Ref<const Vector> &w, Eigen::Index p) { require_length("weight vector", p, w.size()); }

}  // namespace

std::string_view to_string(KernelFamily family) {
    switch (family) {
    case KernelFamily::Linear: return "linear";
    case KernelFamily::Polynomial: return "poly";
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::Laplacian: return "laplacian";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "linear") return KernelFamily::Linear;
    if (name == "poly" || name == "polynomial") return KernelFamily::Polynomial;
    if (name == "gaussian" || name == "rbf") return KernelFamily::Gaussian;
    if (name == "laplacian") return KernelFamily::Laplacian;
    throw InvalidArgument("unknown kernel family '" + std::string(name) + "'");
}

void KernelSpec::validate() const {
    if ((family == KernelFamily::Gaussian || family == KernelFamily::Laplacian) && !(gamma > 0.0 && std::isfinite(gamma))) {
        throw InvalidArgument("kernel gamma must be positive, got " + std::to_string(gamma));
    }
    if (family == KernelFamily::Polynomial && degree_d < 1) {
        throw InvalidArgument("polynomial degree must be >= 1, got " + std::to_string(degree_d));
    }
}

double eval_weighted_kernel(const KernelSpec &spec, const Eigen::Ref<const Vector> &w,
                            const Eigen::Ref<const Vector> &x1, const Eigen::Ref<const Vector> &x2) {
    require_length("x1", w.size(), x1.size());
    require_length("x2", w.size(), x2.size());
    return pair_value(spec, w.data(), x1.data(), x1.innerStride(), x2.data(), x2.innerStride(), w.size());
}

Vector kernel_gradient(const KernelSpec &spec, const Eigen::Ref<const Vector> &w,
                       const Eigen::Ref<const Vector> &x1, const Eigen::Ref<const Vector> &x2) {
    require_length("x1", w.size(), x1.size());
    require_length("x2", w.size(), x2.size());
    const Eigen::Index p = w.size();
    Vector g(p);
    switch (spec.family) {
    case KernelFamily::Linear:
        for (Eigen::Index k = 0; k < p; ++k) g[k] = 2.0 * w[k] * x1[k] * x2[k];
        break;
    case KernelFamily::Polynomial: {
        double s = 0.0;
        for (Eigen::Index k = 0; k < p; ++k) s += w[k] * w[k] * (x1[k] * x2[k]);
        const double outer = spec.degree_d * std::pow(spec.offset_c + s, spec.degree_d - 1);
        for (Eigen::Index k = 0; k < p; ++k) g[k] = outer * 2.0 * w[k] * x1[k] * x2[k];
        break;
    }
    case KernelFamily::Gaussian: {
        const double kv = eval_weighted_kernel(spec, w, x1, x2);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double d = x1[k] - x2[k];
            g[k] = -2.0 * spec.gamma * w[k] * d * d * kv;
        }
        break;
    }
    case KernelFamily::Laplacian: {
        const double kv = eval_weighted_kernel(spec, w, x1, x2);
        for (Eigen::Index k = 0; k < p; ++k) {
            const double d = std::abs(x1[k] - x2[k]);
            g[k] = (w[k] * d == 0.0) ? 0.0 : -spec.gamma * d * kv;
        }
        break;
    }
    }
    return g;
}

Matrix gram_matrix(const KernelSpec &spec, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Matrix> &X) {
    check_weights(w, X.cols());
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    // Observations as contiguous columns.
    const Matrix Xt = X.transpose();
    Matrix K(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const double *xj = Xt.col(j).data();
        for (Eigen::Index i = j; i < n; ++i) {
            const double v = pair_value(spec, w.data(), Xt.col(i).data(), 1, xj, 1, p);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

Matrix cross_gram(const KernelSpec &spec, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Matrix> &Xa,
                  const Eigen::Ref<const Matrix> &Xb) {
    check_weights(w, Xa.cols());
    require_length("cross_gram columns", Xa.cols(), Xb.cols());
    const Eigen::Index p = Xa.cols();
    const Matrix At = Xa.transpose();
    const Matrix Bt = Xb.transpose();
    Matrix K(Xa.rows(), Xb.rows());
    for (Eigen::Index j = 0; j < Xb.rows(); ++j) {
        for (Eigen::Index i = 0; i < Xa.rows(); ++i) {
            K(i, j) = pair_value(spec, w.data(), At.col(i).data(), 1, Bt.col(j).data(), 1, p);
        }
    }
    return K;
}

Matrix linearization_slope(const KernelSpec &spec, const Eigen::Ref<const Vector> &w0,
                           const Eigen::Ref<const Vector> &alpha, const Eigen::Ref<const Matrix> &X,
                           const Eigen::Ref<const Matrix> &gram_w0) {
    check_weights(w0, X.cols());
    require_length("alpha", X.rows(), alpha.size());
    require_length("gram rows", X.rows(), gram_w0.rows());
    const Eigen::Index n = X.rows();
    const Eigen::Index p = X.cols();
    Matrix A = Matrix::Zero(n, p);

    std::vector<Eigen::Index> active;
    for (Eigen::Index j = 0; j < n; ++j) {
        if (alpha[j] != 0.0) active.push_back(j);
    }
    if (active.empty()) return A;

    const Matrix Xt = X.transpose();
    switch (spec.family) {
    case KernelFamily::Linear: {
        // A_ik = 2 w_k x_ik sum_j alpha_j x_jk
        const Vector xa = X.transpose() * alpha;
        for (Eigen::Index k = 0; k < p; ++k) A.col(k) = (2.0 * w0[k] * xa[k]) * X.col(k);
        break;
    }
    case KernelFamily::Polynomial: {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double *xi = Xt.col(i).data();
            for (Eigen::Index j : active) {
                const double *xj = Xt.col(j).data();
                double s = 0.0;
                for (Eigen::Index k = 0; k < p; ++k) s += w0[k] * w0[k] * (xi[k] * xj[k]);
                const double outer = alpha[j] * spec.degree_d * std::pow(spec.offset_c + s, spec.degree_d - 1);
                for (Eigen::Index k = 0; k < p; ++k) A(i, k) += outer * 2.0 * w0[k] * xi[k] * xj[k];
            }
        }
        break;
    }
    case KernelFamily::Gaussian: {
        std::vector<double> acc(static_cast<std::size_t>(p));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double *xi = Xt.col(i).data();
            std::fill(acc.begin(), acc.end(), 0.0);
            for (Eigen::Index j : active) {
                const double *xj = Xt.col(j).data();
                const double c = alpha[j] * gram_w0(i, j);
                for (Eigen::Index k = 0; k < p; ++k) {
                    const double d = xi[k] - xj[k];
                    acc[static_cast<std::size_t>(k)] += c * d * d;
                }
            }
            for (Eigen::Index k = 0; k < p; ++k) A(i, k) = -2.0 * spec.gamma * w0[k] * acc[static_cast<std::size_t>(k)];
        }
        break;
    }
    case KernelFamily::Laplacian: {
        std::vector<double> acc(static_cast<std::size_t>(p));
        for (Eigen::Index i = 0; i < n; ++i) {
            const double *xi = Xt.col(i).data();
            std::fill(acc.begin(), acc.end(), 0.0);
            for (Eigen::Index j : active) {
                const double *xj = Xt.col(j).data();
                const double c = alpha[j] * gram_w0(i, j);
                for (Eigen::Index k = 0; k < p; ++k) acc[static_cast<std::size_t>(k)] += c * std::abs(xi[k] - xj[k]);
            }
            for (Eigen::Index k = 0; k < p; ++k) {
                A(i, k) = (w0[k] == 0.0) ? 0.0 : -spec.gamma * acc[static_cast<std::size_t>(k)];
            }
        }
        break;
    }
    }
    return A;
}

Vector Linearization::apply(const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Vector> &alpha) const {
    require_length("weight vector", A.cols(), w.size());
    require_length("alpha", B.cols(), alpha.size());
    return A * w + B * alpha;
}

Linearization linearize(const KernelSpec &spec, const Eigen::Ref<const Vector> &w0,
                        const Eigen::Ref<const Vector> &alpha, const Eigen::Ref<const Matrix> &X) {
    check_weights(w0, X.cols());
    require_length("alpha", X.rows(), alpha.size());
    const Eigen::Index n = X.rows();
    Linearization lin;
    lin.anchor_w = w0;
    const Matrix K = gram_matrix(spec, w0, X);
    lin.A = linearization_slope(spec, w0, alpha, X, K);
    lin.B.resize(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        const Vector xj = X.row(j).transpose();
        for (Eigen::Index i = 0; i < n; ++i) {
            const Vector g = kernel_gradient(spec, w0, X.row(i).transpose(), xj);
            lin.B(i, j) = K(i, j) - g.dot(w0);
        }
    }
    return lin;
}

double median_pairwise_distance(const Eigen::Ref<const Matrix> &X) {
    const Eigen::Index n = X.rows();
    if (n < 2) throw DataError("median pairwise distance needs at least two rows");
    std::vector<double> d;
    d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) d.push_back((X.row(i) - X.row(j)).norm());
    }
    const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    if (d.size() % 2 == 1) return *mid;
    const double upper = *mid;
    const double lower = *std::max_element(d.begin(), mid);
    return 0.5 * (lower + upper);
}

double median_heuristic_gamma(const Eigen::Ref<const Matrix> &X) {
    const double sigma = median_pairwise_distance(X);
    if (!(sigma > 0.0)) throw DataError("median pairwise distance is zero; rows are identical");
    return 1.0 / (2.0 * sigma * sigma);
}

}  // namespace dosk
