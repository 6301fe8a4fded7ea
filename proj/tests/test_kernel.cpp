#include "dosk/kernel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using dosk::KernelFamily;
using dosk::KernelSpec;
using dosk::Matrix;
using dosk::Vector;
using testutil::random_matrix;
using testutil::to_oracle;

namespace {

Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

const KernelFamily kFamilies[] = {KernelFamily::Linear, KernelFamily::Polynomial, KernelFamily::Gaussian,
                                  KernelFamily::Laplacian};

KernelSpec spec_for(KernelFamily f) {
    KernelSpec s;
    s.family = f;
    s.gamma = 0.7;
    s.offset_c = 1.0;
    s.degree_d = 3;
    return s;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("zero weights give the constant kernel values") {
    KernelSpec g;
    const Vector w = Vector::Zero(3);
    CHECK(dosk::eval_weighted_kernel(g, w, vec({1, 2, 3}), vec({-4, 5, 9})) == 1.0);
    KernelSpec lin;
    lin.family = KernelFamily::Linear;
    CHECK(dosk::eval_weighted_kernel(lin, w, vec({1, 2, 3}), vec({-4, 5, 9})) == 0.0);
}

TEST_CASE("hand evaluated gaussian value and gradient") {
    KernelSpec g;
    g.gamma = 0.5;
    const Vector w = vec({1, 0}), a = vec({1, 2}), b = vec({3, 5});
    CHECK(dosk::eval_weighted_kernel(g, w, a, b) == doctest::Approx(std::exp(-2.0)).epsilon(1e-14));
    const Vector grad = dosk::kernel_gradient(g, w, a, b);
    CHECK(grad(0) == doctest::Approx(-4.0 * std::exp(-2.0)).epsilon(1e-12));
    CHECK(grad(0) == doctest::Approx(-0.541341).epsilon(1e-6));
    CHECK(grad(1) == 0.0);
}

TEST_CASE("linear gradient at unit weights") {
    KernelSpec lin;
    lin.family = KernelFamily::Linear;
    const Vector grad = dosk::kernel_gradient(lin, vec({1, 1}), vec({1, 2}), vec({3, 4}));
    CHECK(grad(0) == doctest::Approx(6.0));
    CHECK(grad(1) == doctest::Approx(16.0));
}

TEST_CASE("gaussian self similarity is one and has zero gradient") {
    std::mt19937_64 rng(3);
    KernelSpec g;
    for (int t = 0; t < 10; ++t) {
        const Matrix X = random_matrix(rng, 1, 4, -3, 3);
        const Vector w = random_matrix(rng, 4, 1).col(0);
        const Vector x = X.row(0).transpose();
        CHECK(dosk::eval_weighted_kernel(g, w, x, x) == 1.0);
        CHECK(dosk::kernel_gradient(g, w, x, x).isZero(0.0));
    }
}

TEST_CASE("dimension mismatch names both lengths") {
    KernelSpec g;
    try {
        (void)dosk::eval_weighted_kernel(g, vec({1, 1}), vec({1, 2, 3}), vec({1, 2}));
        FAIL("expected DimensionError");
    } catch (const dosk::DimensionError &e) {
        CHECK(e.expected() == 2);
        CHECK(e.actual() == 3);
    }
}

TEST_CASE("analytic gradients agree with central differences") {
    std::mt19937_64 rng(11);
    for (KernelFamily f : kFamilies) {
        const KernelSpec s = spec_for(f);
        const oracle::Kern ok = to_oracle(s);
        for (int t = 0; t < 20; ++t) {
            const Eigen::Index p = 4;
            const Vector w = random_matrix(rng, p, 1, 0.05, 0.95).col(0);
            const Vector a = random_matrix(rng, p, 1).col(0);
            const Vector b = random_matrix(rng, p, 1).col(0);
            const Vector g = dosk::kernel_gradient(s, w, a, b);
            const Vector fd = oracle::fd_gradient(ok, w, a, b);
            for (Eigen::Index k = 0; k < p; ++k) {
                const double scale = std::max(std::abs(fd(k)), 1e-3);
                CHECK(std::abs(g(k) - fd(k)) / scale < 1e-5);
            }
        }
    }
}

TEST_CASE("library kernel matches the reference formulas") {
    std::mt19937_64 rng(5);
    for (KernelFamily f : kFamilies) {
        const KernelSpec s = spec_for(f);
        const oracle::Kern ok = to_oracle(s);
        for (int t = 0; t < 20; ++t) {
            const Vector w = random_matrix(rng, 3, 1).col(0);
            const Vector a = random_matrix(rng, 3, 1, -2, 2).col(0);
            const Vector b = random_matrix(rng, 3, 1, -2, 2).col(0);
            CHECK(dosk::eval_weighted_kernel(s, w, a, b) ==
                  doctest::Approx(oracle::kernel(ok, w, a, b)).epsilon(1e-13));
        }
    }
}

TEST_CASE("laplacian derivative is zero where a coordinate difference vanishes") {
    KernelSpec s;
    s.family = KernelFamily::Laplacian;
    const Vector g = dosk::kernel_gradient(s, vec({0.5, 0.3}), vec({1, 2}), vec({1, 4}));
    CHECK(g(0) == 0.0);
    CHECK(g(1) < 0.0);
    const Vector gz = dosk::kernel_gradient(s, vec({0.0, 0.3}), vec({1, 2}), vec({3, 4}));
    CHECK(gz(0) == 0.0);
}

TEST_CASE("zero weight screens out the coordinate") {
    std::mt19937_64 rng(8);
    for (KernelFamily f : kFamilies) {
        const KernelSpec s = spec_for(f);
        for (int t = 0; t < 20; ++t) {
            Vector w = random_matrix(rng, 3, 1).col(0);
            w(1) = 0.0;
            const Vector a = random_matrix(rng, 3, 1).col(0);
            Vector b = random_matrix(rng, 3, 1).col(0);
            const double before = dosk::eval_weighted_kernel(s, w, a, b);
            b(1) += 17.25;
            CHECK(std::abs(dosk::eval_weighted_kernel(s, w, a, b) - before) <= 1e-15);
        }
    }
}

TEST_CASE("gram matrix basics") {
    KernelSpec g;
    const Matrix one = Matrix::Constant(1, 3, 0.4);
    CHECK(dosk::gram_matrix(g, Vector::Ones(3), one)(0, 0) == 1.0);

    KernelSpec lin;
    lin.family = KernelFamily::Linear;
    const Matrix E = Matrix::Identity(2, 2);
    CHECK(dosk::gram_matrix(lin, Vector::Ones(2), E).isApprox(Matrix::Identity(2, 2)));

    std::mt19937_64 rng(21);
    for (KernelFamily f : kFamilies) {
        const KernelSpec s = spec_for(f);
        const Matrix X = random_matrix(rng, 15, 3);
        const Vector w = random_matrix(rng, 3, 1).col(0);
        const Matrix G = dosk::gram_matrix(s, w, X);
        CHECK(G == G.transpose());
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            for (Eigen::Index j = 0; j < X.rows(); ++j)
                CHECK(G(i, j) == dosk::eval_weighted_kernel(s, w, X.row(i).transpose(), X.row(j).transpose()));
        const double min_eig = Eigen::SelfAdjointEigenSolver<Matrix>(G).eigenvalues().minCoeff();
        CHECK(min_eig >= -1e-8 * static_cast<double>(X.rows()));
        const Matrix C = dosk::cross_gram(s, w, X.topRows(4), X);
        CHECK(C == G.topRows(4));
    }
}

TEST_CASE("linearization reproduces the gram product at its anchor") {
    std::mt19937_64 rng(31);
    for (KernelFamily f : kFamilies) {
        const KernelSpec s = spec_for(f);
        for (int t = 0; t < 5; ++t) {
            const Matrix X = random_matrix(rng, 10, 3);
            const Vector w0 = random_matrix(rng, 3, 1).col(0);
            const Vector alpha = random_matrix(rng, 10, 1, -1, 1).col(0);
            const dosk::Linearization lin = dosk::linearize(s, w0, alpha, X);
            const Vector exact = dosk::gram_matrix(s, w0, X) * alpha;
            CHECK((lin.apply(w0, alpha) - exact).cwiseAbs().maxCoeff() <= 1e-12);
            const Matrix A = dosk::linearization_slope(s, w0, alpha, X, dosk::gram_matrix(s, w0, X));
            CHECK((A - lin.A).cwiseAbs().maxCoeff() <= 1e-12);
        }
        const Matrix X = random_matrix(rng, 6, 2);
        const dosk::Linearization zero = dosk::linearize(s, Vector::Ones(2), Vector::Zero(6), X);
        CHECK(zero.A.isZero(0.0));
        CHECK(zero.apply(Vector::Constant(2, 0.3), Vector::Zero(6)).isZero(0.0));
    }
}

TEST_CASE("linearization residual is superlinear on smooth kernels") {
    std::mt19937_64 rng(41);
    for (KernelFamily f : {KernelFamily::Gaussian, KernelFamily::Polynomial, KernelFamily::Linear}) {
        const KernelSpec s = spec_for(f);
        const Matrix X = random_matrix(rng, 10, 3);
        const Vector w0 = random_matrix(rng, 3, 1, 0.2, 0.8).col(0);
        const Vector alpha = random_matrix(rng, 10, 1, -1, 1).col(0);
        Vector dir = random_matrix(rng, 3, 1, -1, 1).col(0);
        dir.normalize();
        const dosk::Linearization lin = dosk::linearize(s, w0, alpha, X);
        double prev = 1e300;
        for (double h : {1e-1, 1e-2, 1e-3}) {
            const Vector w1 = w0 + h * dir;
            const double r = (dosk::gram_matrix(s, w1, X) * alpha - lin.apply(w1, alpha)).norm();
            CHECK(r / h < prev);
            prev = r / h;
        }
    }
}

TEST_CASE("median heuristic") {
    Matrix X(3, 1);
    X << 0, 1, 3;
    CHECK(dosk::median_pairwise_distance(X) == doctest::Approx(2.0));
    CHECK(dosk::median_heuristic_gamma(X) == doctest::Approx(1.0 / 8.0));
}

TEST_CASE("kernel names and validation") {
    CHECK(dosk::parse_kernel_family("gaussian") == KernelFamily::Gaussian);
    CHECK(dosk::parse_kernel_family("poly") == KernelFamily::Polynomial);
    CHECK_THROWS_AS(dosk::parse_kernel_family("sigmoid"), dosk::InvalidArgument);
    KernelSpec s;
    s.gamma = 0.0;
    CHECK_THROWS_AS(s.validate(), dosk::InvalidArgument);
}

}
