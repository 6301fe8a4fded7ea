#include "dosk/simdata.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <unordered_set>

namespace dosk {

std::string to_string(Task task) { return task == Task::Regression ? "reg" : "class"; }

Task parse_task(const std::string &name) {
    if (name == "reg" || name == "regression") return Task::Regression;
    if (name == "class" || name == "classification") return Task::Classification;
    throw InvalidArgument("unknown task '" + name + "'");
}

void Dataset::validate() const {
    require_length("y", X.rows(), y.size());
    if (signal_mask) require_length("signal_mask", X.cols(), static_cast<Eigen::Index>(signal_mask->size()));
    if (task == Task::Classification) {
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (y[i] != 1.0 && y[i] != -1.0) throw DataError("classification labels must be +1 or -1");
        }
    }
}

namespace {

std::vector<std::string> default_names(Eigen::Index p) {
    std::vector<std::string> names;
    for (Eigen::Index j = 0; j < p; ++j) names.push_back("x" + std::to_string(j + 1));
    return names;
}

std::vector<bool> leading_mask(int signal, int p0) {
    std::vector<bool> mask(static_cast<std::size_t>(signal + p0), false);
    std::fill_n(mask.begin(), signal, true);
    return mask;
}

}  // namespace

double regression1_mean(double x1) {
    return (x1 > 0.0 && x1 < 2.0 * std::numbers::pi) ? 10.0 * std::sin(x1) : 0.0;
}

Dataset gen_regression1(int n, int p0, Rng &rng) {
    if (n < 1 || p0 < 0) throw InvalidArgument("gen_regression1 needs n >= 1 and p0 >= 0");
    const int p = 1 + p0;
    std::uniform_real_distribution<double> ux(-2.0 * std::numbers::pi, 4.0 * std::numbers::pi);
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset d;
    d.X.resize(n, p);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) d.X(i, j) = ux(rng);
        d.y[i] = regression1_mean(d.X(i, 0)) + noise(rng);
    }
    d.signal_mask = leading_mask(1, p0);
    d.column_names = default_names(p);
    return d;
}

Dataset gen_regression1(int n, int p0, std::uint64_t seed) {
    Rng rng(seed);
    return gen_regression1(n, p0, rng);
}

double regression2_mean(const Eigen::Ref<const Vector> &x) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < std::min<Eigen::Index>(4, x.size()); ++j) s += std::exp(-x[j] * x[j]);
    return 10.0 * s;
}

Dataset gen_regression2(int n, int p0, Rng &rng) {
    if (n < 1 || p0 < 0) throw InvalidArgument("gen_regression2 needs n >= 1 and p0 >= 0");
    const int p = 4 + p0;
    std::uniform_real_distribution<double> ux(-6.0, 6.0);
    std::normal_distribution<double> noise(0.0, 1.0);
    Dataset d;
    d.X.resize(n, p);
    d.y.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < p; ++j) d.X(i, j) = ux(rng);
        d.y[i] = regression2_mean(d.X.row(i).transpose()) + noise(rng);
    }
    d.signal_mask = leading_mask(4, p0);
    d.column_names = default_names(p);
    return d;
}

Dataset gen_regression2(int n, int p0, std::uint64_t seed) {
    Rng rng(seed);
    return gen_regression2(n, p0, rng);
}

Vector sample_shell(int signal_dim, Rng &rng, std::uint64_t &attempts) {
    constexpr std::uint64_t kMaxAttempts = 1'000'000;
    std::normal_distribution<double> z(0.0, 1.0);
    Vector x(signal_dim);
    for (std::uint64_t a = 0; a < kMaxAttempts; ++a) {
        ++attempts;
        for (int k = 0; k < signal_dim; ++k) x[k] = z(rng);
        const double r2 = x.squaredNorm();
        if (r2 > 9.0 && r2 < 16.0) return x;
    }
    throw Error("rejection sampler exceeded 1e6 attempts");
}

Dataset gen_classification(int n, int signal_dim, int p0, Rng &rng) {
    if (n < 2 || n % 2 != 0) throw InvalidArgument("gen_classification needs an even n >= 2");
    if (signal_dim < 1 || p0 < 0) throw InvalidArgument("gen_classification needs signal_dim >= 1 and p0 >= 0");
    const int p = signal_dim + p0;
    std::normal_distribution<double> z(0.0, 1.0);
    std::normal_distribution<double> noise(0.0, std::sqrt(0.1));
    Dataset d;
    d.task = Task::Classification;
    d.X.resize(n, p);
    d.y.resize(n);
    std::uint64_t attempts = 0;
    for (int i = 0; i < n; ++i) {
        const bool positive = (i % 2 == 0);
        if (positive) {
            for (int k = 0; k < signal_dim; ++k) d.X(i, k) = z(rng);
        } else {
            d.X.row(i).head(signal_dim) = sample_shell(signal_dim, rng, attempts).transpose();
        }
        for (int k = signal_dim; k < p; ++k) d.X(i, k) = noise(rng);
        d.y[i] = positive ? 1.0 : -1.0;
    }
    d.signal_mask = leading_mask(signal_dim, p0);
    d.column_names = default_names(p);
    return d;
}

Dataset gen_classification(int n, int signal_dim, int p0, std::uint64_t seed) {
    Rng rng(seed);
    return gen_classification(n, signal_dim, p0, rng);
}

Standardizer Standardizer::fit(const Eigen::Ref<const Matrix> &X_train) {
    if (X_train.rows() == 0) throw DataError("cannot standardize an empty matrix");
    Standardizer s;
    for (Eigen::Index j = 0; j < X_train.cols(); ++j) {
        s.ranges.emplace_back(X_train.col(j).minCoeff(), X_train.col(j).maxCoeff());
    }
    return s;
}

Standardizer Standardizer::identity(Eigen::Index p) {
    Standardizer s;
    s.ranges.assign(static_cast<std::size_t>(p), {0.0, 1.0});
    return s;
}

Matrix Standardizer::apply(const Eigen::Ref<const Matrix> &X) const {
    require_length("standardizer columns", p(), X.cols());
    Matrix out(X.rows(), X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const auto [lo, hi] = ranges[static_cast<std::size_t>(j)];
        const double width = hi - lo;
        if (width > 0.0) {
            out.col(j) = (X.col(j).array() - lo) / width;
        } else {
            out.col(j).setZero();
        }
    }
    return out;
}

StandardizeResult standardize(const Eigen::Ref<const Matrix> &X_train, const std::vector<Matrix> &others) {
    StandardizeResult r;
    r.scaler = Standardizer::fit(X_train);
    r.train = r.scaler.apply(X_train);
    for (const auto &m : others) r.others.push_back(r.scaler.apply(m));
    return r;
}

double mpe(const Eigen::Ref<const Vector> &pred, const Eigen::Ref<const Vector> &y) {
    require_length("predictions", y.size(), pred.size());
    if (y.size() == 0) return 0.0;
    return (pred - y).squaredNorm() / static_cast<double>(y.size());
}

double mcr(const Eigen::Ref<const Vector> &pred, const Eigen::Ref<const Vector> &y) {
    require_length("predictions", y.size(), pred.size());
    if (y.size() == 0) return 0.0;
    Eigen::Index wrong = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double label = pred[i] >= 0.0 ? 1.0 : -1.0;
        if (label != y[i]) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(y.size());
}

SelectionRates selection_rates(const std::vector<int> &selected, const std::vector<bool> &signal_mask) {
    std::unordered_set<int> chosen(selected.begin(), selected.end());
    int signal = 0;
    int noise = 0;
    int signal_hit = 0;
    int noise_hit = 0;
    for (std::size_t j = 0; j < signal_mask.size(); ++j) {
        const bool hit = chosen.count(static_cast<int>(j)) > 0;
        if (signal_mask[j]) {
            ++signal;
            signal_hit += hit;
        } else {
            ++noise;
            noise_hit += hit;
        }
    }
    SelectionRates r;
    r.tp_rate = signal > 0 ? static_cast<double>(signal_hit) / signal : 0.0;
    r.fn_rate = noise > 0 ? static_cast<double>(noise_hit) / noise : 0.0;
    return r;
}

namespace {

// One RFC-4180 record; returns false at end of input.
bool read_record(std::istream &in, std::vector<std::string> &fields) {
    fields.clear();
    if (in.peek() == std::char_traits<char>::eof()) return false;
    std::string field;
    bool quoted = false;
    bool any = false;
    char c;
    while (in.get(c)) {
        any = true;
        if (quoted) {
            if (c == '"') {
                if (in.peek() == '"') {
                    in.get(c);
                    field.push_back('"');
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(field));
            field.clear();
        } else if (c == '\n') {
            break;
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    if (quoted) throw DataError("unterminated quoted CSV field");
    if (!any) return false;
    fields.push_back(std::move(field));
    return true;
}

double parse_number(const std::string &s, std::size_t row, const std::string &column) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception &) {
        used = 0;
    }
    while (used < s.size() && (s[used] == ' ' || s[used] == '\t')) ++used;
    if (s.empty() || used != s.size() || !std::isfinite(v)) {
        throw DataError("non-numeric value '" + s + "' in row " + std::to_string(row) + ", column '" + column + "'");
    }
    return v;
}

std::string csv_quote(const std::string &s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

Dataset read_csv(std::istream &in, const std::string &label, Task task) {
    std::vector<std::string> header;
    if (!read_record(in, header)) throw DataError("CSV input is empty");
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    const auto it = std::find(header.begin(), header.end(), label);
    if (it == header.end()) throw DataError("label column not found: '" + label + "'");
    const std::size_t label_col = static_cast<std::size_t>(it - header.begin());

    Dataset d;
    d.task = task;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (j != label_col) d.column_names.push_back(header[j]);
    }
    std::vector<std::vector<double>> rows;
    std::vector<double> labels;
    std::vector<std::string> fields;
    std::size_t line = 1;
    while (read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        std::vector<double> row;
        for (std::size_t j = 0; j < fields.size(); ++j) {
            const double v = parse_number(fields[j], line, header[j]);
            if (j == label_col) {
                labels.push_back(v);
            } else {
                row.push_back(v);
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw DataError("CSV input has no data rows");
    const auto p = static_cast<Eigen::Index>(d.column_names.size());
    d.X.resize(static_cast<Eigen::Index>(rows.size()), p);
    d.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (Eigen::Index j = 0; j < p; ++j) d.X(static_cast<Eigen::Index>(i), j) = rows[i][static_cast<std::size_t>(j)];
        d.y[static_cast<Eigen::Index>(i)] = labels[i];
    }
    d.validate();
    return d;
}

Dataset read_csv_file(const std::string &path, const std::string &label, Task task) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv(in, label, task);
}

Matrix read_csv_predictors(std::istream &in, const std::string &drop_column) {
    std::vector<std::string> header;
    if (!read_record(in, header)) throw DataError("CSV input is empty");
    if (!header.empty() && header[0].rfind("\xEF\xBB\xBF", 0) == 0) header[0].erase(0, 3);
    const auto it = drop_column.empty() ? header.end() : std::find(header.begin(), header.end(), drop_column);
    const std::size_t skip = it == header.end() ? header.size() : static_cast<std::size_t>(it - header.begin());
    const std::size_t p = header.size() - (skip < header.size() ? 1 : 0);

    std::vector<double> values;
    std::vector<std::string> fields;
    std::size_t line = 1;
    std::size_t rows = 0;
    while (read_record(in, fields)) {
        ++line;
        if (fields.size() == 1 && fields[0].empty()) continue;
        if (fields.size() != header.size()) {
            throw DataError("row " + std::to_string(line) + " has " + std::to_string(fields.size()) +
                            " fields, header has " + std::to_string(header.size()));
        }
        for (std::size_t j = 0; j < fields.size(); ++j) {
            if (j != skip) values.push_back(parse_number(fields[j], line, header[j]));
        }
        ++rows;
    }
    if (rows == 0) throw DataError("CSV input has no data rows");
    Matrix X(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < p; ++j) X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = values[i * p + j];
    }
    return X;
}

Matrix read_csv_predictors_file(const std::string &path, const std::string &drop_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    return read_csv_predictors(in, drop_column);
}

void write_csv(std::ostream &out, const Dataset &data, const std::string &label) {
    const std::vector<std::string> names =
        data.column_names.size() == static_cast<std::size_t>(data.p()) ? data.column_names : default_names(data.p());
    for (const auto &name : names) out << csv_quote(name) << ',';
    out << csv_quote(label) << '\n';
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        for (Eigen::Index j = 0; j < data.p(); ++j) out << format_double(data.X(i, j)) << ',';
        out << format_double(data.y[i]) << '\n';
    }
}

void write_csv_file(const std::string &path, const Dataset &data, const std::string &label) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    write_csv(out, data, label);
}

void write_signal_sidecar(const std::string &path, const Dataset &data, const std::string &label) {
    nlohmann::json j;
    j["task"] = to_string(data.task);
    j["label"] = label;
    j["signal"] = data.signal_mask ? nlohmann::json(*data.signal_mask) : nlohmann::json(nullptr);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << j.dump(2) << '\n';
}

}  // namespace dosk
