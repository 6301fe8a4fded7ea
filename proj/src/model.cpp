#include "dosk/model.hpp"

#include "json.hpp"
#include "parallel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

namespace dosk {

using nlohmann::json;

ModelFit fit_model(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, const FitOptions &opts) {
    if (X.rows() == 0) throw DataError("cannot fit on empty data");
    require_length("y", X.rows(), y.size());
    const Standardizer scaler = opts.standardize ? Standardizer::fit(X) : Standardizer::identity(X.cols());
    const Matrix Z = opts.standardize ? scaler.apply(X) : Matrix(X);
    FitResult fit = fit_dosk(Z, y, opts.kernel, opts.loss, opts.hp, opts.solver);

    ModelFit out;
    DoskModel &m = out.model;
    m.kernel = opts.kernel;
    m.loss = opts.loss;
    m.lambda = opts.hp;
    m.w_hat = fit.state.w;
    m.b_hat = fit.state.b;
    m.standardizer = scaler;
    for (Eigen::Index i = 0; i < fit.state.alpha.size(); ++i) {
        if (std::abs(fit.state.alpha[i]) > kSupportThreshold) {
            m.support.push_back({static_cast<int>(i), Z.row(i).transpose(), fit.state.alpha[i]});
        }
    }
    m.trace_summary.objective = fit.trace.objective_per_iter.back();
    m.trace_summary.iterations = fit.trace.iters_used;
    m.trace_summary.converged = fit.trace.converged;
    out.trace = std::move(fit.trace);
    return out;
}

Vector predict(const DoskModel &model, const Eigen::Ref<const Matrix> &X_new) {
    require_length("predictor columns", model.p(), X_new.cols());
    const Matrix Z = model.standardizer.apply(X_new);
    Vector f = Vector::Constant(X_new.rows(), model.b_hat);
    if (model.support.empty()) return f;
    Matrix S(static_cast<Eigen::Index>(model.support.size()), model.p());
    Vector a(S.rows());
    for (std::size_t k = 0; k < model.support.size(); ++k) {
        S.row(static_cast<Eigen::Index>(k)) = model.support[k].x.transpose();
        a[static_cast<Eigen::Index>(k)] = model.support[k].alpha;
    }
    const Matrix K = cross_gram(model.kernel, model.w_hat, Z, S);
    f.noalias() += K * a;
    return f;
}

std::vector<int> selected_variables(const DoskModel &model) {
    std::vector<int> out;
    for (Eigen::Index j = 0; j < model.w_hat.size(); ++j) {
        if (model.w_hat[j] > kSupportThreshold) out.push_back(static_cast<int>(j));
    }
    return out;
}

std::vector<int> selected_points(const DoskModel &model) {
    std::vector<int> out;
    for (const auto &sp : model.support) {
        if (std::abs(sp.alpha) > kSupportThreshold) out.push_back(sp.index);
    }
    std::sort(out.begin(), out.end());
    return out;
}

void CvGrid::validate() const {
    if (lambda1_candidates.empty() || lambda2_candidates.empty() || gamma_candidates.empty()) {
        throw InvalidArgument("CV grid candidate sets must be nonempty");
    }
    if (folds < 2) throw InvalidArgument("CV needs at least 2 folds");
}

std::vector<int> make_folds(const Eigen::Ref<const Vector> &y, Task task, int folds, std::uint64_t seed) {
    const auto n = static_cast<std::size_t>(y.size());
    if (folds < 2) throw InvalidArgument("CV needs at least 2 folds");
    if (n < static_cast<std::size_t>(folds)) throw DataError("fewer observations than folds");
    std::mt19937_64 rng(seed);
    std::vector<int> fold_of(n, 0);
    if (task == Task::Regression) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t k = 0; k < n; ++k) fold_of[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
        return fold_of;
    }
    std::vector<std::size_t> pos;
    std::vector<std::size_t> neg;
    for (std::size_t i = 0; i < n; ++i) (y[static_cast<Eigen::Index>(i)] > 0.0 ? pos : neg).push_back(i);
    if (pos.size() < static_cast<std::size_t>(folds) || neg.size() < static_cast<std::size_t>(folds)) {
        throw DataError("cannot stratify: each class needs at least as many members as folds");
    }
    std::shuffle(pos.begin(), pos.end(), rng);
    std::shuffle(neg.begin(), neg.end(), rng);
    std::size_t slot = 0;
    for (const auto *group : {&pos, &neg}) {
        for (std::size_t i : *group) fold_of[i] = static_cast<int>(slot++ % static_cast<std::size_t>(folds));
    }
    return fold_of;
}

bool cv_cell_better(const CvCell &a, const CvCell &b) {
    if (a.cv_error != b.cv_error) return a.cv_error < b.cv_error;
    if (a.lambda1 != b.lambda1) return a.lambda1 > b.lambda1;
    if (a.lambda2 != b.lambda2) return a.lambda2 > b.lambda2;
    return a.gamma < b.gamma;
}

std::string_view to_string(CvRule rule) { return rule == CvRule::MinError ? "min" : "1se"; }

CvRule parse_cv_rule(std::string_view name) {
    if (name == "min") return CvRule::MinError;
    if (name == "1se") return CvRule::OneStandardError;
    throw InvalidArgument("unknown CV rule: '" + std::string(name) + "'");
}

std::size_t select_cv_cell(const std::vector<CvCell> &table, CvRule rule) {
    if (table.empty()) throw InvalidArgument("empty CV table");
    std::size_t best = 0;
    for (std::size_t i = 1; i < table.size(); ++i)
        if (cv_cell_better(table[i], table[best])) best = i;
    if (rule == CvRule::MinError) return best;

    const std::vector<double> &errs = table[best].fold_errors;
    double se = 0.0;
    if (errs.size() > 1) {
        const double k = static_cast<double>(errs.size());
        const double mean = std::accumulate(errs.begin(), errs.end(), 0.0) / k;
        double ss = 0.0;
        for (double e : errs) ss += (e - mean) * (e - mean);
        se = std::sqrt(ss / (k - 1.0)) / std::sqrt(k);
    }
    const double limit = table[best].cv_error + se;
    const auto simpler = [](const CvCell &a, const CvCell &b) {
        if (a.lambda1 != b.lambda1) return a.lambda1 > b.lambda1;
        if (a.lambda2 != b.lambda2) return a.lambda2 > b.lambda2;
        if (a.gamma != b.gamma) return a.gamma < b.gamma;
        return a.cv_error < b.cv_error;
    };
    std::size_t pick = best;
    for (std::size_t i = 0; i < table.size(); ++i)
        if (table[i].cv_error <= limit && simpler(table[i], table[pick])) pick = i;
    return pick;
}

namespace {

bool uses_gamma(KernelFamily f) { return f == KernelFamily::Gaussian || f == KernelFamily::Laplacian; }

Matrix take_rows(const Eigen::Ref<const Matrix> &X, const std::vector<Eigen::Index> &rows) {
    Matrix out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = X.row(rows[k]);
    return out;
}

Vector take(const Eigen::Ref<const Vector> &y, const std::vector<Eigen::Index> &rows) {
    Vector out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) out[static_cast<Eigen::Index>(k)] = y[rows[k]];
    return out;
}

}  // namespace

std::string_view to_string(PenaltyScale scale) {
    return scale == PenaltyScale::Absolute ? "absolute" : "per-obs";
}

PenaltyScale parse_penalty_scale(std::string_view name) {
    if (name == "absolute") return PenaltyScale::Absolute;
    if (name == "per-obs" || name == "per_observation") return PenaltyScale::PerObservation;
    throw InvalidArgument("unknown penalty scale: '" + std::string(name) + "'");
}

Hyperparams effective_hyperparams(const Hyperparams &nominal, PenaltyScale scale, Eigen::Index n) {
    if (scale == PenaltyScale::Absolute) return nominal;
    if (n < 1) throw InvalidArgument("penalty scaling needs at least one row");
    const double inv = 1.0 / static_cast<double>(n);
    return {nominal.lambda1 * inv, nominal.lambda2 * inv, nominal.lambda3 * inv};
}

CvResult cross_validate(const Eigen::Ref<const Matrix> &X, const Eigen::Ref<const Vector> &y, Task task,
                        const KernelSpec &base_kernel, const LossSpec &loss, const CvGrid &grid,
                        const SolverConfig &cfg, std::uint64_t seed, bool standardize, int jobs) {
    grid.validate();
    require_length("y", X.rows(), y.size());
    const int k = grid.folds;
    const std::vector<int> fold_of = make_folds(y, task, k, seed);

    struct Split {
        Matrix X_train, X_test;
        Vector y_train, y_test;
    };
    std::vector<Split> splits(static_cast<std::size_t>(k));
    for (int f = 0; f < k; ++f) {
        std::vector<Eigen::Index> train;
        std::vector<Eigen::Index> test;
        for (Eigen::Index i = 0; i < y.size(); ++i) (fold_of[static_cast<std::size_t>(i)] == f ? test : train).push_back(i);
        Split &s = splits[static_cast<std::size_t>(f)];
        s.X_train = take_rows(X, train);
        s.X_test = take_rows(X, test);
        s.y_train = take(y, train);
        s.y_test = take(y, test);
    }

    std::vector<double> gammas = grid.gamma_candidates;
    if (!uses_gamma(base_kernel.family)) {
        gammas = {base_kernel.gamma};
    } else if (grid.gamma_median) {
        const Matrix Z = standardize ? Standardizer::fit(X).apply(X) : Matrix(X);
        gammas = {median_heuristic_gamma(Z)};
    }

    CvResult result;
    for (double l1 : grid.lambda1_candidates) {
        for (double l2 : grid.lambda2_candidates) {
            for (double g : gammas) result.table.push_back({l1, l2, g, 0.0, {}});
        }
    }

    detail::parallel_for(result.table.size(), jobs, [&](std::size_t c) {
        CvCell &cell = result.table[c];
        FitOptions opts;
        opts.kernel = base_kernel;
        opts.kernel.gamma = cell.gamma;
        opts.loss = loss;
        opts.solver = cfg;
        opts.solver.freeze_w = cfg.freeze_w || grid.freeze_w;
        opts.standardize = standardize;
        double total = 0.0;
        for (const Split &s : splits) {
            opts.hp = effective_hyperparams({cell.lambda1, cell.lambda2, grid.lambda3_fixed}, grid.penalty_scale,
                                            s.y_train.size());
            const ModelFit fit = fit_model(s.X_train, s.y_train, opts);
            const Vector pred = predict(fit.model, s.X_test);
            const double err = task == Task::Regression ? mpe(pred, s.y_test) : mcr(pred, s.y_test);
            cell.fold_errors.push_back(err);
            total += err;
        }
        cell.cv_error = total / static_cast<double>(k);
    });

    const auto best = result.table.begin() + static_cast<std::ptrdiff_t>(select_cv_cell(result.table, grid.rule));
    result.best = *best;
    result.best_hp = {best->lambda1, best->lambda2, grid.lambda3_fixed};
    result.best_kernel = base_kernel;
    result.best_kernel.gamma = best->gamma;
    return result;
}

namespace {

template <class T>
T field(const json &j, const char *name) {
    if (!j.is_object() || !j.contains(name)) throw ParseError(name, "missing");
    try {
        return j.at(name).get<T>();
    } catch (const json::exception &e) {
        throw ParseError(name, e.what());
    }
}

Vector vector_field(const json &j, const char *name) {
    const auto v = field<std::vector<double>>(j, name);
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vector &v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

std::string model_to_json(const DoskModel &m) {
    json j;
    j["format_version"] = kModelFormatVersion;
    j["kernel"] = {{"family", std::string(to_string(m.kernel.family))},
                   {"gamma", m.kernel.gamma},
                   {"offset_c", m.kernel.offset_c},
                   {"degree_d", m.kernel.degree_d}};
    j["loss"] = {{"kind", std::string(to_string(m.loss.kind))}, {"huber_delta", m.loss.huber_delta}};
    j["lambda"] = {{"lambda1", m.lambda.lambda1}, {"lambda2", m.lambda.lambda2}, {"lambda3", m.lambda.lambda3}};
    j["w_hat"] = to_std(m.w_hat);
    json support = json::array();
    for (const auto &sp : m.support) support.push_back({{"index", sp.index}, {"x", to_std(sp.x)}, {"alpha", sp.alpha}});
    j["support"] = std::move(support);
    j["b_hat"] = m.b_hat;
    json ranges = json::array();
    for (const auto &[lo, hi] : m.standardizer.ranges) ranges.push_back({lo, hi});
    j["standardizer"] = std::move(ranges);
    j["trace_summary"] = {{"objective", m.trace_summary.objective},
                          {"iterations", m.trace_summary.iterations},
                          {"converged", m.trace_summary.converged}};
    return j.dump(2) + "\n";
}

DoskModel model_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw ParseError("document", e.what());
    }
    const int version = field<int>(j, "format_version");
    if (version != kModelFormatVersion) {
        throw ParseError("format_version", "unsupported version " + std::to_string(version));
    }
    DoskModel m;
    const json kernel = field<json>(j, "kernel");
    try {
        m.kernel.family = parse_kernel_family(field<std::string>(kernel, "family"));
    } catch (const InvalidArgument &e) {
        throw ParseError("kernel.family", e.what());
    }
    m.kernel.gamma = field<double>(kernel, "gamma");
    m.kernel.offset_c = field<double>(kernel, "offset_c");
    m.kernel.degree_d = field<int>(kernel, "degree_d");

    const json loss = field<json>(j, "loss");
    try {
        m.loss.kind = parse_loss_kind(field<std::string>(loss, "kind"));
    } catch (const InvalidArgument &e) {
        throw ParseError("loss.kind", e.what());
    }
    m.loss.huber_delta = field<double>(loss, "huber_delta");

    const json lambda = field<json>(j, "lambda");
    m.lambda = {field<double>(lambda, "lambda1"), field<double>(lambda, "lambda2"), field<double>(lambda, "lambda3")};
    m.w_hat = vector_field(j, "w_hat");
    m.b_hat = field<double>(j, "b_hat");

    for (const auto &entry : field<json>(j, "support")) {
        SupportPoint sp;
        sp.index = field<int>(entry, "index");
        sp.x = vector_field(entry, "x");
        sp.alpha = field<double>(entry, "alpha");
        if (sp.x.size() != m.w_hat.size()) throw ParseError("support.x", "length differs from w_hat");
        m.support.push_back(std::move(sp));
    }
    for (const auto &r : field<json>(j, "standardizer")) {
        if (!r.is_array() || r.size() != 2) throw ParseError("standardizer", "expected [min, max] pairs");
        m.standardizer.ranges.emplace_back(r[0].get<double>(), r[1].get<double>());
    }
    if (m.standardizer.p() != m.w_hat.size()) throw ParseError("standardizer", "length differs from w_hat");

    const json trace = field<json>(j, "trace_summary");
    m.trace_summary = {field<double>(trace, "objective"), field<int>(trace, "iterations"),
                       field<bool>(trace, "converged")};
    try {
        m.kernel.validate();
        m.loss.validate();
        m.lambda.validate();
    } catch (const InvalidArgument &e) {
        throw ParseError("model", e.what());
    }
    return m;
}

void save_model(const DoskModel &model, const std::string &path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write model file '" + path + "'");
    out << model_to_json(model);
    if (!out) throw Error("failed writing model file '" + path + "'");
}

DoskModel load_model(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open model file '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

}  // namespace dosk
