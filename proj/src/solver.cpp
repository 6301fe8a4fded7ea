#include "dosk/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

namespace dosk {

namespace {

double soft_threshold(double z, double t) {
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

double mean_loss(const LossSpec &loss, const Eigen::Ref<const Vector> &y, const Eigen::Ref<const Vector> &f) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) s += loss_value(loss, y[i], f[i]);
    return s / static_cast<double>(y.size());
}

Vector loss_derivatives(const LossSpec &loss, const Eigen::Ref<const Vector> &y, const Eigen::Ref<const Vector> &f) {
    Vector d(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) d[i] = loss_derivative(loss, y[i], f[i]);
    return d;
}

Vector clamp_unit(Vector w) {
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = std::clamp(w[k], 0.0, 1.0);
    return w;
}

double objective_from_fit(const IterateState &state, const Eigen::Ref<const Vector> &u, const Eigen::Ref<const Vector> &y,
                          const LossSpec &loss, const Hyperparams &hp) {
    const Vector f = u.array() + state.b;
    const double value = mean_loss(loss, y, f) + hp.lambda1 * state.alpha.lpNorm<1>() +
                         hp.lambda2 * state.w.lpNorm<1>() + hp.lambda3 * state.alpha.dot(u);
    if (!std::isfinite(value)) throw Error("objective is not finite");
    return value;
}

// Gradient of the smooth part of the alpha subproblem, given u = K alpha.
Vector alpha_smooth_gradient(const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &u, double b,
                             const Eigen::Ref<const Vector> &y, const LossSpec &loss, const Hyperparams &hp) {
    const Vector f = u.array() + b;
    const Vector d = loss_derivatives(loss, y, f);
    return K * d / static_cast<double>(y.size()) + 2.0 * hp.lambda3 * u;
}

double kkt_from_gradient(const Eigen::Ref<const Vector> &alpha, const Eigen::Ref<const Vector> &g, double lambda1) {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < alpha.size(); ++j) {
        double r;
        if (alpha[j] > 0.0) {
            r = std::abs(g[j] + lambda1);
        } else if (alpha[j] < 0.0) {
            r = std::abs(g[j] - lambda1);
        } else {
            r = std::max(0.0, std::abs(g[j]) - lambda1);
        }
        worst = std::max(worst, r);
    }
    return worst;
}

struct AlphaOutcome {
    Vector alpha;
    Vector u;  // K alpha
    double residual = 0.0;
    int sweeps = 0;
    bool converged = false;
    double b = 0.0;  // intercept the step was solved with
};

// Cyclic proximal coordinate descent. Each coordinate minimizes the quadratic
// majorizer with curvature (c/n)|K_j|^2 + 2 lambda3 K_jj, where c bounds L''.
// For the squared loss the majorizer is exact.
template <class Deriv>
AlphaOutcome coordinate_descent(const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y, double b,
                                Vector alpha, const LossSpec &loss, const Hyperparams &hp, double tol,
                                int max_sweeps, Deriv deriv) {
    const Eigen::Index n = K.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    const double curv = loss_curvature_bound(loss);
    Vector M(n);
    for (Eigen::Index j = 0; j < n; ++j) M[j] = curv * inv_n * K.col(j).squaredNorm() + 2.0 * hp.lambda3 * K(j, j);

    AlphaOutcome out;
    out.u = K * alpha;
    Vector d(n);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (Eigen::Index i = 0; i < n; ++i) d[i] = deriv(y[i], out.u[i] + b);
        const Vector g = K * d * inv_n + 2.0 * hp.lambda3 * out.u;
        out.residual = kkt_from_gradient(alpha, g, hp.lambda1);
        out.sweeps = sweep;
        if (out.residual <= tol) {
            out.converged = true;
            break;
        }
        for (Eigen::Index j = 0; j < n; ++j) {
            if (!(M[j] > 0.0)) {
                if (hp.lambda1 > 0.0 && alpha[j] != 0.0) {
                    // alpha_j only enters through the L1 term.
                    alpha[j] = 0.0;
                }
                continue;
            }
            const auto Kj = K.col(j);
            double gj = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) gj += Kj[i] * deriv(y[i], out.u[i] + b);
            gj = gj * inv_n + 2.0 * hp.lambda3 * out.u[j];
            const double updated = soft_threshold(alpha[j] - gj / M[j], hp.lambda1 / M[j]);
            const double delta = updated - alpha[j];
            if (delta != 0.0) {
                alpha[j] = updated;
                out.u.noalias() += delta * Kj;
            }
        }
    }
    if (!out.converged) {
        for (Eigen::Index i = 0; i < n; ++i) d[i] = deriv(y[i], out.u[i] + b);
        const Vector g = K * d * inv_n + 2.0 * hp.lambda3 * out.u;
        out.residual = kkt_from_gradient(alpha, g, hp.lambda1);
        out.converged = out.residual <= tol;
        out.sweeps = max_sweeps;
    }
    out.alpha = std::move(alpha);
    return out;
}

double loss_second_derivative(const LossSpec &loss, double y, double f) {
    switch (loss.kind) {
    case LossKind::SquaredError:
        return 2.0;
    case LossKind::HuberizedHinge: {
        const double m = y * f;
        return (m < 1.0 && m > 1.0 - loss.huber_delta) ? 1.0 / loss.huber_delta : 0.0;
    }
    case LossKind::Deviance: {
        const double p = 1.0 / (1.0 + std::exp(std::abs(y * f)));
        return p * (1.0 - p);
    }
    }
    return 0.0;
}

// Exact minimizer of 0.5 x'Hx - c'x + lambda1 |x|_1 by an active-set method:
// solve the sign-constrained system on the active set, then minimize the
// (convex, piecewise quadratic) objective exactly along the segment towards it.
// Returns false if it stalls before reaching the tolerance.
struct DenseHessian {
    const Matrix &H;

    [[nodiscard]] Vector apply(const Vector &x) const { return H * x; }
    [[nodiscard]] double diag(Eigen::Index i) const { return H(i, i); }
    [[nodiscard]] Matrix block(const std::vector<Eigen::Index> &idx) const {
        const auto m = static_cast<Eigen::Index>(idx.size());
        Matrix out(m, m);
        for (Eigen::Index a = 0; a < m; ++a) {
            for (Eigen::Index b = 0; b < m; ++b) out(a, b) = H(idx[a], idx[b]);
        }
        return out;
    }
};

// H = K diag(h) K + 2 lambda3 K, never formed. Only rows with h_i > 0 enter.
struct KernelHessian {
    const Eigen::Ref<const Matrix> &K;
    Vector h;
    std::vector<Eigen::Index> curved;
    double lambda3;

    [[nodiscard]] Vector apply(const Vector &x) const {
        Vector u = Vector::Zero(K.rows());
        for (Eigen::Index j = 0; j < x.size(); ++j) {
            if (x[j] != 0.0) u.noalias() += x[j] * K.col(j);
        }
        Vector out = 2.0 * lambda3 * u;
        for (Eigen::Index i : curved) out.noalias() += (h[i] * u[i]) * K.col(i);
        return out;
    }
    [[nodiscard]] double diag(Eigen::Index i) const {
        double s = 2.0 * lambda3 * K(i, i);
        for (Eigen::Index r : curved) s += h[r] * K(r, i) * K(r, i);
        return s;
    }
    [[nodiscard]] Matrix block(const std::vector<Eigen::Index> &idx) const {
        const auto m = static_cast<Eigen::Index>(idx.size());
        const auto c = static_cast<Eigen::Index>(curved.size());
        Matrix Ks(c, m);
        Matrix out(m, m);
        for (Eigen::Index b = 0; b < m; ++b) {
            for (Eigen::Index r = 0; r < c; ++r) Ks(r, b) = std::sqrt(h[curved[r]]) * K(curved[r], idx[b]);
            for (Eigen::Index a = 0; a < m; ++a) out(a, b) = 2.0 * lambda3 * K(idx[a], idx[b]);
        }
        if (c > 0) out.noalias() += Ks.transpose() * Ks;
        return out;
    }
};

template <class Hessian>
class SignSearch {
public:
    SignSearch(const Hessian &H, const Vector &c, double lambda1) : H_(H), c_(c), lambda1_(lambda1) {}

    bool run(Vector &x, double tol, int max_iters) {
        const Eigen::Index n = x.size();
        for (int it = 0; it < max_iters; ++it) {
            const Vector grad = H_.apply(x) - c_;
            bool nonzero_optimal = true;
            Eigen::Index worst = -1;
            double worst_violation = 0.0;
            nonzero_.clear();
            entering_.clear();
            for (Eigen::Index i = 0; i < n; ++i) {
                double violation;
                if (x[i] != 0.0) {
                    violation = std::abs(grad[i] + lambda1_ * sign_of(x[i]));
                    nonzero_optimal = nonzero_optimal && violation <= tol;
                    nonzero_.push_back(i);
                } else {
                    violation = std::abs(grad[i]) - lambda1_;
                    if (violation > 0.0) entering_.push_back(i);
                }
                if (violation > worst_violation) {
                    worst_violation = violation;
                    worst = i;
                }
            }
            if (worst_violation <= tol) return true;
            active_ = nonzero_;
            if (!nonzero_optimal) {
                if (!active_.empty() && step(x, grad)) continue;
            } else {
                active_.insert(active_.end(), entering_.begin(), entering_.end());
                if (step(x, grad)) continue;
                if (entering_.size() > 1) {
                    // Admitting every violator at once can give an ascent direction.
                    active_ = nonzero_;
                    active_.push_back(*std::max_element(entering_.begin(), entering_.end(),
                                                        [&](Eigen::Index i, Eigen::Index j) {
                                                            return std::abs(grad[i]) < std::abs(grad[j]);
                                                        }));
                    if (step(x, grad)) continue;
                }
            }
            // Exact minimization along the worst coordinate always makes progress.
            const double hii = H_.diag(worst);
            if (!(hii > 0.0)) return false;
            const double z = x[worst] - grad[worst] / hii;
            const double thr = lambda1_ / hii;
            const double updated = z > thr ? z - thr : (z < -thr ? z + thr : 0.0);
            x[worst] = updated;
        }
        return false;
    }

private:
    static double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

    bool step(Vector &x, const Vector &grad) {
        const auto m = static_cast<Eigen::Index>(active_.size());
        Matrix Haa = H_.block(active_);
        Vector rhs(m);
        double diag_max = 0.0;
        for (Eigen::Index a = 0; a < m; ++a) {
            const Eigen::Index i = active_[a];
            const double theta = x[i] != 0.0 ? sign_of(x[i]) : -sign_of(grad[i]);
            rhs[a] = c_[i] - lambda1_ * theta;
            diag_max = std::max(diag_max, Haa(a, a));
        }
        if (!(diag_max > 0.0)) return false;
        Haa.diagonal().array() += 1e-13 * diag_max;
        Vector z;
        const Eigen::LLT<Matrix> llt(Haa);
        if (llt.info() == Eigen::Success) {
            z = llt.solve(rhs);
        } else {
            const Eigen::LDLT<Matrix> ldlt(Haa);
            if (ldlt.info() != Eigen::Success) return false;
            z = ldlt.solve(rhs);
        }
        if (!z.allFinite()) return false;

        Vector dir = Vector::Zero(x.size());
        for (Eigen::Index a = 0; a < m; ++a) dir[active_[a]] = z[a] - x[active_[a]];
        const double quad = dir.dot(H_.apply(dir));
        if (!(quad > 0.0)) return false;
        const double lin = grad.dot(dir);

        // Walk the breakpoints of the L1 term in order of t.
        crossings_.clear();
        double slope_l1 = 0.0;
        for (Eigen::Index i : active_) {
            if (x[i] != 0.0) {
                slope_l1 += lambda1_ * sign_of(x[i]) * dir[i];
                if (dir[i] != 0.0) {
                    const double t = -x[i] / dir[i];
                    if (t > 0.0 && t < 1.0) crossings_.emplace_back(t, i);
                }
            } else {
                slope_l1 += lambda1_ * std::abs(dir[i]);
            }
        }
        if (!(lin + slope_l1 < 0.0)) return false;
        std::sort(crossings_.begin(), crossings_.end());
        double lo = 0.0;
        double t_best = 1.0;
        for (std::size_t next = 0;; ++next) {
            const double hi = next < crossings_.size() ? crossings_[next].first : 1.0;
            const double t_star = -(lin + slope_l1) / quad;
            if (t_star <= hi) {
                t_best = std::max(lo, t_star);
                break;
            }
            if (next >= crossings_.size()) break;
            // Crossing zero flips the sign of this coordinate's L1 slope.
            slope_l1 += 2.0 * lambda1_ * std::abs(dir[crossings_[next].second]);
            lo = hi;
        }
        if (!(t_best > 0.0)) return false;
        for (Eigen::Index i : active_) x[i] += t_best * dir[i];
        for (const auto &[t, i] : crossings_) {
            if (t == t_best) x[i] = 0.0;
        }
        return true;
    }

    const Hessian &H_;
    const Vector &c_;
    double lambda1_;
    std::vector<Eigen::Index> nonzero_, entering_, active_;
    std::vector<std::pair<double, Eigen::Index>> crossings_;
};

// Proximal Newton on alpha. Each step minimizes the second-order model of the
// smooth part plus the exact L1 term, followed by backtracking on the true
// objective. The squared loss needs a single step.
//
// With profile_b (squared loss only) the intercept is eliminated as
// b(alpha) = mean(y - K alpha), so alpha and b are minimized jointly. The
// derivatives then sum to zero, the gradient keeps its form and the Hessian
// becomes (2/n) K C K + 2 lambda3 K with C the centering matrix.
AlphaOutcome proximal_newton(const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y, double b,
                             Vector alpha, const LossSpec &loss, const Hyperparams &hp, double tol, int max_iters,
                             bool profile_b = false) {
    const Eigen::Index n = K.rows();
    const double inv_n = 1.0 / static_cast<double>(n);
    AlphaOutcome out;
    out.u = K * alpha;
    if (profile_b) b = (y - out.u).mean();
    auto value = [&](const Vector &a, const Vector &u) {
        const double bb = profile_b ? (y - u).mean() : b;
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += loss_value(loss, y[i], u[i] + bb);
        return s * inv_n + hp.lambda1 * a.lpNorm<1>() + hp.lambda3 * a.dot(u);
    };
    double F = value(alpha, out.u);
    Vector d(n), h(n);
    Matrix H;
    bool have_dense_H = false;
    for (int it = 0; it < max_iters; ++it) {
        for (Eigen::Index i = 0; i < n; ++i) {
            d[i] = loss_derivative(loss, y[i], out.u[i] + b);
            h[i] = loss_second_derivative(loss, y[i], out.u[i] + b);
        }
        const Vector g = K * d * inv_n + 2.0 * hp.lambda3 * out.u;
        out.residual = kkt_from_gradient(alpha, g, hp.lambda1);
        out.sweeps = it;
        if (out.residual <= tol) {
            out.converged = true;
            break;
        }
        Vector target = alpha;
        const int search_iters = 4 * static_cast<int>(n) + 20;
        Vector c;
        if (loss.kind == LossKind::SquaredError) {
            // Constant curvature: form the Hessian once.
            if (!have_dense_H) {
                H.noalias() = (2.0 * inv_n) * (K * K);
                if (profile_b) {
                    const Vector k1 = K.rowwise().sum();
                    H.noalias() -= (2.0 * inv_n * inv_n) * (k1 * k1.transpose());
                }
                H += 2.0 * hp.lambda3 * K;
                have_dense_H = true;
            }
            const DenseHessian op{H};
            c = op.apply(alpha) - g;
            SignSearch<DenseHessian>(op, c, hp.lambda1).run(target, 0.1 * tol, search_iters);
        } else {
            KernelHessian op{K, h * inv_n, {}, hp.lambda3};
            for (Eigen::Index i = 0; i < n; ++i) {
                if (h[i] > 0.0) op.curved.push_back(i);
            }
            c = op.apply(alpha) - g;
            SignSearch<KernelHessian>(op, c, hp.lambda1).run(target, 0.1 * tol, search_iters);
        }
        const Vector dir = target - alpha;
        if (dir.lpNorm<Eigen::Infinity>() == 0.0) break;
        const double predicted = g.dot(dir) + hp.lambda1 * (target.lpNorm<1>() - alpha.lpNorm<1>());
        if (!(predicted < 0.0)) break;
        const Vector du = K * dir;
        double t = 1.0;
        bool accepted = false;
        for (int half = 0; half < 40; ++half) {
            const Vector a_new = alpha + t * dir;
            const Vector u_new = out.u + t * du;
            const double F_new = value(a_new, u_new);
            if (F_new <= F + 1e-4 * t * predicted) {
                alpha = a_new;
                out.u = u_new;
                F = F_new;
                if (profile_b) b = (y - out.u).mean();
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;
    }
    if (!out.converged) {
        for (Eigen::Index i = 0; i < n; ++i) d[i] = loss_derivative(loss, y[i], out.u[i] + b);
        out.residual = kkt_from_gradient(alpha, K * d * inv_n + 2.0 * hp.lambda3 * out.u, hp.lambda1);
        out.converged = out.residual <= tol;
    }
    out.alpha = std::move(alpha);
    out.b = b;
    return out;
}

AlphaOutcome coordinate_fallback(const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y, double b,
                                 Vector alpha, const LossSpec &loss, const Hyperparams &hp, double tol,
                                 int max_sweeps) {
    switch (loss.kind) {
    case LossKind::SquaredError:
        return coordinate_descent(K, y, b, std::move(alpha), loss, hp, tol, max_sweeps,
                                  [](double yi, double fi) { return 2.0 * (fi - yi); });
    case LossKind::HuberizedHinge: {
        const double delta = loss.huber_delta;
        return coordinate_descent(K, y, b, std::move(alpha), loss, hp, tol, max_sweeps,
                                  [delta](double yi, double fi) {
                                      const double m = yi * fi;
                                      if (m >= 1.0) return 0.0;
                                      if (m > 1.0 - delta) return -yi * (1.0 - m) / delta;
                                      return -yi;
                                  });
    }
    case LossKind::Deviance:
        return coordinate_descent(K, y, b, std::move(alpha), loss, hp, tol, max_sweeps,
                                  [&loss](double yi, double fi) { return loss_derivative(loss, yi, fi); });
    }
    throw InvalidArgument("unsupported loss");
}

AlphaOutcome run_alpha_step(const IterateState &state, const Eigen::Ref<const Matrix> &K,
                            const Eigen::Ref<const Vector> &y, const LossSpec &loss, const Hyperparams &hp,
                            double tol, int max_sweeps, bool profile_b = false) {
    profile_b = profile_b && loss.kind == LossKind::SquaredError;
    AlphaOutcome out = proximal_newton(K, y, state.b, state.alpha, loss, hp, tol, 100, profile_b);
    if (out.converged) return out;
    AlphaOutcome polished = coordinate_fallback(K, y, out.b, out.alpha, loss, hp, tol, max_sweeps);
    polished.sweeps += out.sweeps;
    polished.b = out.b;
    return polished;
}

double b_step_from_fit(const Eigen::Ref<const Vector> &u, double b_start, const Eigen::Ref<const Vector> &y,
                       const LossSpec &loss) {
    const Eigen::Index n = y.size();
    if (loss.kind == LossKind::SquaredError) return (y - u).mean();

    bool has_pos = false;
    bool has_neg = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        has_pos = has_pos || y[i] > 0.0;
        has_neg = has_neg || y[i] < 0.0;
    }
    if (!has_pos || !has_neg) throw DataError("intercept is unbounded: both class labels must be present");

    auto slope = [&](double b) {
        double s = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) s += loss_derivative(loss, y[i], u[i] + b);
        return s;
    };
    constexpr double kTol = 1e-10;
    double d0 = slope(b_start);
    if (std::abs(d0) <= kTol) return b_start;

    // Bracket the root of the nondecreasing derivative.
    double lo = b_start;
    double hi = b_start;
    double step = 1.0;
    if (d0 > 0.0) {
        do {
            hi = lo;
            lo -= step;
            step *= 2.0;
        } while (slope(lo) > 0.0);
    } else {
        do {
            lo = hi;
            hi += step;
            step *= 2.0;
        } while (slope(hi) < 0.0);
    }
    double mid = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        mid = 0.5 * (lo + hi);
        const double dm = slope(mid);
        if (std::abs(dm) <= kTol) break;
        if (dm > 0.0) {
            hi = mid;
        } else {
            lo = mid;
        }
        if (!(hi - lo > 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(mid)))) break;
    }
    return mid;
}

// Projected gradient with Barzilai-Borwein step lengths and Armijo backtracking
// along the projection arc.
struct QpOutcome {
    Vector w;
    double pg_norm = 0.0;
    int iters = 0;
    bool converged = false;
};

QpOutcome projected_gradient(const WSubproblem &qp, const Eigen::Ref<const Vector> &y, const LossSpec &loss,
                             const Eigen::Ref<const Vector> &start, double tol, int max_iters) {
    const double inv_n = 1.0 / static_cast<double>(y.size());
    auto value_at = [&](const Vector &w, Vector &f) {
        f.noalias() = qp.A * w;
        f += qp.offset;
        return mean_loss(loss, y, f) + qp.linear_term.dot(w);
    };
    auto gradient_at = [&](const Vector &f) -> Vector {
        return qp.A.transpose() * loss_derivatives(loss, y, f) * inv_n + qp.linear_term;
    };
    auto pg_norm = [](const Vector &w, const Vector &g) { return (clamp_unit(w - g) - w).norm(); };

    QpOutcome out;
    Vector w = clamp_unit(start);
    Vector f(y.size());
    double val = value_at(w, f);
    Vector g = gradient_at(f);
    double t = 1.0;
    Vector f_new(y.size());
    for (int it = 0; it < max_iters; ++it) {
        out.iters = it;
        out.pg_norm = pg_norm(w, g);
        if (out.pg_norm <= tol) {
            out.converged = true;
            out.w = std::move(w);
            return out;
        }
        Vector w_new;
        double val_new = val;
        bool accepted = false;
        for (int h = 0; h < 60; ++h) {
            w_new = clamp_unit(w - t * g);
            const Vector d = w_new - w;
            val_new = value_at(w_new, f_new);
            const double slack = 4.0 * std::numeric_limits<double>::epsilon() * std::abs(val);
            if (val_new <= val + 1e-4 * g.dot(d) + slack) {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) {
            // Numerical floor: no representable decrease left.
            out.converged = out.pg_norm <= 1e3 * tol;
            out.w = std::move(w);
            return out;
        }
        const Vector g_new = gradient_at(f_new);
        const Vector s = w_new - w;
        const Vector yv = g_new - g;
        const double sy = s.dot(yv);
        t = sy > 0.0 ? std::clamp(s.squaredNorm() / sy, 1e-10, 1e10) : 1e6;
        w = std::move(w_new);
        f = f_new;
        g = g_new;
        val = val_new;
    }
    out.pg_norm = pg_norm(w, g);
    out.converged = out.pg_norm <= tol;
    out.iters = max_iters;
    out.w = std::move(w);
    return out;
}

WSubproblem build_subproblem(const IterateState &state, const Eigen::Ref<const Matrix> &X,
                             const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &u,
                             const KernelSpec &kernel, const Hyperparams &hp) {
    WSubproblem qp;
    qp.anchor = state.w;
    qp.A = linearization_slope(kernel, state.w, state.alpha, X, K);
    qp.offset = u.array() + state.b;
    qp.offset.noalias() -= qp.A * state.w;
    qp.linear_term = Vector::Constant(state.w.size(), hp.lambda2);
    qp.linear_term.noalias() += hp.lambda3 * (qp.A.transpose() * state.alpha);
    return qp;
}

Vector gradient_from_subproblem(const WSubproblem &qp, const Eigen::Ref<const Vector> &y, const LossSpec &loss) {
    // At the anchor the linearization is exact, so this is the true gradient.
    const Vector f = qp.A * qp.anchor + qp.offset;
    return qp.A.transpose() * loss_derivatives(loss, y, f) / static_cast<double>(y.size()) + qp.linear_term;
}

struct StepOutcome {
    double s = 0.0;
    Vector w;
    Matrix K;
    Vector u;
    double phi = 0.0;
};

StepOutcome armijo_search(const IterateState &state, double phi0, double directional,
                          const Eigen::Ref<const Vector> &direction, const Eigen::Ref<const Matrix> &X,
                          const Eigen::Ref<const Vector> &y, const KernelSpec &kernel, const LossSpec &loss,
                          const Hyperparams &hp, const SolverConfig &cfg) {
    StepOutcome out;
    if (direction.lpNorm<Eigen::Infinity>() == 0.0) return out;
    IterateState trial = state;
    double s = 1.0;
    for (int h = 0; h <= cfg.line_search_max_halvings; ++h) {
        trial.w = clamp_unit(state.w + s * direction);
        Matrix K = gram_matrix(kernel, trial.w, X);
        Vector u = K * state.alpha;
        const double phi = objective_from_fit(trial, u, y, loss, hp);
        if (phi <= phi0 - cfg.armijo_c * s * std::abs(directional)) {
            out.s = s;
            out.w = std::move(trial.w);
            out.K = std::move(K);
            out.u = std::move(u);
            out.phi = phi;
            return out;
        }
        s *= 0.5;
    }
    return out;
}

}  // namespace

void Hyperparams::validate() const {
    for (double v : {lambda1, lambda2, lambda3}) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InvalidArgument("penalty weights must be finite and >= 0");
    }
}

void SolverConfig::validate() const {
    if (max_outer_iters < 1 || inner_w_iters < 1 || line_search_max_halvings < 1 || n_starts < 1 ||
        alpha_max_sweeps < 1 || w_qp_max_iters < 1) {
        throw InvalidArgument("solver iteration caps must be positive");
    }
    for (double t : {tol_objective, tol_w, armijo_c, alpha_kkt_tol, w_qp_tol}) {
        if (!(t > 0.0 && t < 1.0)) throw InvalidArgument("solver tolerances must lie in (0, 1)");
    }
}

double objective(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
                 const LossSpec &loss, const Hyperparams &hp) {
    require_length("alpha", K.rows(), state.alpha.size());
    require_length("y", K.rows(), y.size());
    if (!y.allFinite() || !state.alpha.allFinite() || !state.w.allFinite() || !std::isfinite(state.b)) {
        throw DataError("objective inputs contain non-finite values");
    }
    const Vector u = K * state.alpha;
    return objective_from_fit(state, u, y, loss, hp);
}

double alpha_kkt_residual(const IterateState &state, const Eigen::Ref<const Matrix> &K,
                          const Eigen::Ref<const Vector> &y, const LossSpec &loss, const Hyperparams &hp) {
    const Vector u = K * state.alpha;
    const Vector g = alpha_smooth_gradient(K, u, state.b, y, loss, hp);
    return kkt_from_gradient(state.alpha, g, hp.lambda1);
}

Vector alpha_step(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
                  const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg) {
    require_length("alpha", K.rows(), state.alpha.size());
    require_length("y", K.rows(), y.size());
    check_labels(loss, y);
    AlphaOutcome out = run_alpha_step(state, K, y, loss, hp, cfg.alpha_kkt_tol, cfg.alpha_max_sweeps);
    if (!out.converged) throw ConvergenceError("alpha step did not converge", std::move(out.alpha), out.residual);
    return std::move(out.alpha);
}

double b_step(const IterateState &state, const Eigen::Ref<const Matrix> &K, const Eigen::Ref<const Vector> &y,
              const LossSpec &loss) {
    require_length("alpha", K.rows(), state.alpha.size());
    require_length("y", K.rows(), y.size());
    if (y.size() == 0) throw DataError("b step on empty data");
    check_labels(loss, y);
    const Vector u = K * state.alpha;
    return b_step_from_fit(u, state.b, y, loss);
}

WSubproblem make_w_subproblem(const IterateState &state, const Eigen::Ref<const Matrix> &X,
                              const Eigen::Ref<const Vector> &y, const KernelSpec &kernel, const Hyperparams &hp,
                              const Eigen::Ref<const Vector> &anchor) {
    require_length("anchor", X.cols(), anchor.size());
    require_length("alpha", X.rows(), state.alpha.size());
    require_length("y", X.rows(), y.size());
    IterateState at = state;
    at.w = anchor;
    const Matrix K = gram_matrix(kernel, anchor, X);
    const Vector u = K * state.alpha;
    return build_subproblem(at, X, K, u, kernel, hp);
}

double w_subproblem_value(const WSubproblem &qp, const Eigen::Ref<const Vector> &w, const Eigen::Ref<const Vector> &y,
                          const LossSpec &loss) {
    const Vector f = qp.A * w + qp.offset;
    return mean_loss(loss, y, f) + qp.linear_term.dot(w);
}

Vector solve_w_subproblem(const WSubproblem &qp, const Eigen::Ref<const Vector> &y, const LossSpec &loss,
                          const Eigen::Ref<const Vector> &start_w, const SolverConfig &cfg) {
    QpOutcome out = projected_gradient(qp, y, loss, start_w, cfg.w_qp_tol, cfg.w_qp_max_iters);
    if (!out.converged) throw ConvergenceError("w step did not converge", std::move(out.w), out.pg_norm);
    return std::move(out.w);
}

Vector w_step_qp(const IterateState &state, const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y,
                 const KernelSpec &kernel, const LossSpec &loss, const Hyperparams &hp,
                 const Eigen::Ref<const Vector> &anchor, const SolverConfig &cfg) {
    check_labels(loss, y);
    const WSubproblem qp = make_w_subproblem(state, X, y, kernel, hp, anchor);
    return solve_w_subproblem(qp, y, loss, anchor, cfg);
}

Vector objective_gradient_w(const IterateState &state, const Eigen::Ref<const Matrix> &X,
                            const Eigen::Ref<const Vector> &y, const KernelSpec &kernel, const LossSpec &loss,
                            const Hyperparams &hp) {
    const WSubproblem qp = make_w_subproblem(state, X, y, kernel, hp, state.w);
    return gradient_from_subproblem(qp, y, loss);
}

double line_search(const IterateState &state, const Eigen::Ref<const Vector> &direction,
                   const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const KernelSpec &kernel,
                   const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg) {
    require_length("direction", X.cols(), direction.size());
    check_labels(loss, y);
    if (direction.lpNorm<Eigen::Infinity>() == 0.0) return 0.0;
    const Matrix K = gram_matrix(kernel, state.w, X);
    const double phi0 = objective(state, K, y, loss, hp);
    const Vector g = objective_gradient_w(state, X, y, kernel, loss, hp);
    return armijo_search(state, phi0, g.dot(direction), direction, X, y, kernel, loss, hp, cfg).s;
}

namespace {

struct SingleFit {
    IterateState state;
    FitTrace trace;
};

SingleFit fit_from(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const KernelSpec &kernel,
                   const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg, Vector w0) {
    const Eigen::Index n = X.rows();
    SingleFit fit;
    IterateState &st = fit.state;
    FitTrace &trace = fit.trace;
    st.w = std::move(w0);
    st.alpha = Vector::Zero(n);
    st.b = 0.0;

    Matrix K = gram_matrix(kernel, st.w, X);
    Vector u = Vector::Zero(n);
    double phi = objective_from_fit(st, u, y, loss, hp);
    trace.objective_per_iter.push_back(phi);

    for (int t = 1; t <= cfg.max_outer_iters; ++t) {
        const double phi_prev = phi;

        // alpha step
        AlphaOutcome a = run_alpha_step(st, K, y, loss, hp, cfg.alpha_kkt_tol, cfg.alpha_max_sweeps, true);
        {
            IterateState cand = st;
            cand.alpha = a.alpha;
            cand.b = a.b;
            const double phi_a = objective_from_fit(cand, a.u, y, loss, hp);
            if (phi_a <= phi) {
                st.alpha = std::move(a.alpha);
                st.b = a.b;
                u = std::move(a.u);
                phi = phi_a;
            }
        }

        // b step
        {
            IterateState cand = st;
            cand.b = b_step_from_fit(u, st.b, y, loss);
            const double phi_b = objective_from_fit(cand, u, y, loss, hp);
            if (phi_b <= phi) {
                st.b = cand.b;
                phi = phi_b;
            }
        }

        // w step
        double step = 0.0;
        const Vector w_before = st.w;
        if (!cfg.freeze_w) {
            WSubproblem qp = build_subproblem(st, X, K, u, kernel, hp);
            Vector w_qp = projected_gradient(qp, y, loss, st.w, cfg.w_qp_tol, cfg.w_qp_max_iters).w;
            IterateState cand = st;
            cand.w = w_qp;
            Matrix K_qp = gram_matrix(kernel, w_qp, X);
            Vector u_qp = K_qp * st.alpha;
            const double phi_qp = objective_from_fit(cand, u_qp, y, loss, hp);
            if (phi_qp <= phi) {
                st.w = std::move(w_qp);
                K = std::move(K_qp);
                u = std::move(u_qp);
                phi = phi_qp;
                step = 1.0;
            } else {
                // The linearized step overshot: fall back to line search along
                // w_qp - w with repeated relinearization.
                ++trace.line_search_invocations;
                for (int inner = 0; inner < cfg.inner_w_iters; ++inner) {
                    if (inner > 0) {
                        qp = build_subproblem(st, X, K, u, kernel, hp);
                        w_qp = projected_gradient(qp, y, loss, st.w, cfg.w_qp_tol, cfg.w_qp_max_iters).w;
                    }
                    const Vector direction = w_qp - st.w;
                    const double directional = gradient_from_subproblem(qp, y, loss).dot(direction);
                    StepOutcome ls = armijo_search(st, phi, directional, direction, X, y, kernel, loss, hp, cfg);
                    if (ls.s == 0.0) break;
                    const double moved = (ls.w - st.w).norm();
                    st.w = std::move(ls.w);
                    K = std::move(ls.K);
                    u = std::move(ls.u);
                    phi = ls.phi;
                    step = inner == 0 ? ls.s : step;
                    if (moved < cfg.tol_w) break;
                }
            }
        }
        trace.step_sizes.push_back(step);
        trace.w_change.push_back((st.w - w_before).norm());
        trace.objective_per_iter.push_back(phi);
        trace.iters_used = t;
        if (std::abs(phi_prev - phi) < cfg.tol_objective) {
            trace.converged = true;
            break;
        }
    }
    return fit;
}

}  // namespace

FitResult fit_dosk(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const KernelSpec &kernel,
                   const LossSpec &loss, const Hyperparams &hp, const SolverConfig &cfg) {
    if (X.rows() == 0 || X.cols() == 0) throw DataError("cannot fit on empty data");
    require_length("y", X.rows(), y.size());
    if (!X.allFinite() || !y.allFinite()) throw DataError("training data contain non-finite values");
    kernel.validate();
    loss.validate();
    hp.validate();
    cfg.validate();
    check_labels(loss, y);

    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    FitResult best;
    double best_phi = std::numeric_limits<double>::infinity();
    for (int start = 0; start < cfg.n_starts; ++start) {
        Vector w0 = Vector::Ones(X.cols());
        if (start > 0) {
            for (Eigen::Index k = 0; k < w0.size(); ++k) w0[k] = unit(rng);
        }
        SingleFit fit = fit_from(X, y, kernel, loss, hp, cfg, std::move(w0));
        const double phi = fit.trace.objective_per_iter.back();
        if (phi < best_phi) {
            best_phi = phi;
            best.state = std::move(fit.state);
            best.trace = std::move(fit.trace);
            best.trace.best_start = start;
        }
    }
    return best;
}

}  // namespace dosk
