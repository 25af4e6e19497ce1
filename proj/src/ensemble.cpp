#include "factens/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "factens/error.hpp"
#include "factens/metrics.hpp"
#include "factens/parallel.hpp"
#include "factens/rng.hpp"

namespace factens {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double hyper_value(const Hyper& h, const std::string& key) {
    auto it = h.find(key);
    if (it == h.end()) throw PreconditionError("missing hyperparameter '" + key + "'");
    return it->second;
}

Hyper merged_hyper(EnsembleKind kind, const Hyper& given) {
    Hyper h = default_hyper(kind);
    for (const auto& [k, v] : given) h[k] = v;
    return h;
}

void require_both_classes(const std::vector<int>& labels) {
    const auto ones = std::count(labels.begin(), labels.end(), 1);
    if (ones == 0 || ones == static_cast<long>(labels.size())) throw DegenerateTrainingSet();
}

std::vector<std::int8_t> column_majority(const FeatureMatrix& m) {
    std::vector<std::int8_t> fill(m.cols(), 0);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        std::size_t ones = 0, zeros = 0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            if (m.at(i, j) == 1) ++ones;
            if (m.at(i, j) == 0) ++zeros;
        }
        fill[j] = ones > zeros ? 1 : 0;
    }
    return fill;
}

// ---- voting ---------------------------------------------------------------

double majority_p(std::span<const std::int8_t> row) {
    std::size_t ones = 0, votes = 0;
    for (auto v : row) {
        if (v == kAbstain) continue;
        ++votes;
        if (v == 1) ++ones;
    }
    return votes == 0 ? 0.5 : static_cast<double>(ones) / static_cast<double>(votes);
}

void fit_weighted_vote(EnsembleModel& model, const FeatureMatrix& m) {
    const auto& y = m.require_labels();
    require_both_classes(y);
    constexpr double eps = 1e-3;
    model.weights.assign(m.cols(), 0.0);
    for (std::size_t j = 0; j < m.cols(); ++j) {
        std::size_t correct = 0, votes = 0;
        for (std::size_t i = 0; i < m.rows(); ++i) {
            const auto v = m.at(i, j);
            if (v == kAbstain) continue;
            ++votes;
            if (v == y[i]) ++correct;
        }
        double a = votes == 0 ? 0.5 : static_cast<double>(correct) / static_cast<double>(votes);
        a = std::clamp(a, eps, 1.0 - eps);
        model.weights[j] = std::log(a / (1.0 - a));
    }
}

double weighted_vote_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    double z = 0;
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] == kAbstain) continue;
        z += model.weights[j] * (row[j] == 1 ? 1.0 : -1.0);
    }
    return sigmoid(z);
}

// ---- two-coin EM (DawidSkene, LabelModel) ----------------------------------

struct CoinParams {
    std::vector<double> s, t;
    double pi = 0.5;
};

struct RowScore {
    double log_pos, log_neg;
};

RowScore coin_scores(const CoinParams& c, std::span<const std::int8_t> row) {
    double a = std::log(c.pi), b = std::log(1.0 - c.pi);
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] == 1) {
            a += std::log(c.s[j]);
            b += std::log(1.0 - c.t[j]);
        } else if (row[j] == 0) {
            a += std::log(1.0 - c.s[j]);
            b += std::log(c.t[j]);
        }
    }
    return {a, b};
}

CoinParams m_step(const FeatureMatrix& m, const std::vector<double>& q, std::optional<double> class_balance) {
    const std::size_t k = m.cols();
    CoinParams c;
    c.s.assign(k, 0.0);
    c.t.assign(k, 0.0);
    std::vector<double> pos1(k, 0.0), pos_n(k, 0.0), neg0(k, 0.0), neg_n(k, 0.0);
    double q_sum = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        q_sum += q[i];
        const auto row = m.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            if (row[j] == kAbstain) continue;
            pos_n[j] += q[i];
            neg_n[j] += 1.0 - q[i];
            if (row[j] == 1) pos1[j] += q[i];
            else neg0[j] += 1.0 - q[i];
        }
    }
    // +1 / +2: Laplace smoothing, i.e. a Beta(2,2) prior on every rate.
    for (std::size_t j = 0; j < k; ++j) {
        c.s[j] = (pos1[j] + 1.0) / (pos_n[j] + 2.0);
        c.t[j] = (neg0[j] + 1.0) / (neg_n[j] + 2.0);
    }
    c.pi = class_balance ? *class_balance : (q_sum + 1.0) / (static_cast<double>(m.rows()) + 2.0);
    return c;
}

double max_change(const CoinParams& a, const CoinParams& b) {
    double d = std::abs(a.pi - b.pi);
    for (std::size_t j = 0; j < a.s.size(); ++j) {
        d = std::max({d, std::abs(a.s[j] - b.s[j]), std::abs(a.t[j] - b.t[j])});
    }
    return d;
}

double log_beta22(double x) { return std::log(x) + std::log(1.0 - x); }

void fit_two_coin(EnsembleModel& model, const FeatureMatrix& m, bool with_propensity) {
    const bool supervised = hyper_value(model.hyper, "supervised") != 0.0;
    const int max_iter = static_cast<int>(hyper_value(model.hyper, "max_iter"));
    const double tol = hyper_value(model.hyper, "tol");
    std::optional<double> class_balance;
    if (auto it = model.hyper.find("class_balance"); it != model.hyper.end()) {
        if (!(it->second > 0 && it->second < 1)) throw PreconditionError("class_balance must lie in (0, 1)");
        class_balance = it->second;
    }
    if (m.rows() == 0) throw PreconditionError("cannot fit on an empty matrix");

    const std::size_t n = m.rows(), k = m.cols();
    std::vector<double> q(n);
    if (supervised) {
        const auto& y = m.require_labels();
        require_both_classes(y);
        for (std::size_t i = 0; i < n; ++i) q[i] = y[i];
    } else {
        if (m.has_labels()) require_both_classes(*m.labels());
        for (std::size_t i = 0; i < n; ++i) q[i] = majority_p(m.row(i));
    }

    // Propensity does not depend on the class, so it is a closed-form
    // constant of the likelihood.
    double propensity_ll = 0;
    model.propensity.assign(k, 1.0);
    if (with_propensity) {
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t present = 0;
            for (std::size_t i = 0; i < n; ++i) present += m.at(i, j) != kAbstain;
            const double lam = (static_cast<double>(present) + 1.0) / (static_cast<double>(n) + 2.0);
            model.propensity[j] = lam;
            propensity_ll += static_cast<double>(present) * std::log(lam) +
                             static_cast<double>(n - present) * std::log(1.0 - lam);
        }
    }

    auto& diag = model.diagnostics;
    diag = {};
    diag.converged = false;
    CoinParams cur;
    std::optional<CoinParams> prev;
    for (int iter = 1; iter <= max_iter; ++iter) {
        cur = m_step(m, q, class_balance);
        double ll = propensity_ll;
        for (std::size_t i = 0; i < n; ++i) {
            const auto sc = coin_scores(cur, m.row(i));
            ll += log_sum_exp(sc.log_pos, sc.log_neg);
            if (!supervised) q[i] = sigmoid(sc.log_pos - sc.log_neg);
        }
        double objective = ll;
        for (std::size_t j = 0; j < k; ++j) objective += log_beta22(cur.s[j]) + log_beta22(cur.t[j]);
        if (!class_balance) objective += log_beta22(cur.pi);
        diag.log_likelihood_trace.push_back(ll);
        diag.objective_trace.push_back(objective);
        diag.log_likelihood = ll;
        diag.iterations = iter;
        diag.final_delta = prev ? max_change(cur, *prev) : std::numeric_limits<double>::infinity();
        if (supervised || (prev && diag.final_delta < tol)) {
            diag.converged = true;
            break;
        }
        prev = cur;
    }
    model.sensitivity = cur.s;
    model.specificity = cur.t;
    model.prior = cur.pi;
}

double two_coin_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    CoinParams c{model.sensitivity, model.specificity, model.prior};
    const auto sc = coin_scores(c, row);
    return sigmoid(sc.log_pos - sc.log_neg);
}

// ---- logistic regression ---------------------------------------------------

void fit_logistic(EnsembleModel& model, const FeatureMatrix& m) {
    const auto& y = m.require_labels();
    require_both_classes(y);
    const double lambda = hyper_value(model.hyper, "l2");
    const double tol = hyper_value(model.hyper, "tol");
    const int max_iter = static_cast<int>(hyper_value(model.hyper, "max_iter"));
    if (lambda < 0) throw PreconditionError("l2 must be >= 0");

    const auto n = static_cast<Eigen::Index>(m.rows());
    const auto k = static_cast<Eigen::Index>(m.cols());
    Eigen::MatrixXd x(n, k + 1);
    Eigen::VectorXd yy(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        x(i, 0) = 1.0;
        for (Eigen::Index j = 0; j < k; ++j) x(i, j + 1) = m.at(i, j) == 1 ? 1.0 : -1.0;
        yy(i) = y[i];
    }
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(k + 1, lambda);
    penalty(0) = 0.0;

    auto objective = [&](const Eigen::VectorXd& theta) {
        const Eigen::VectorXd z = x * theta;
        double f = 0;
        for (Eigen::Index i = 0; i < n; ++i) f += softplus(z(i)) - yy(i) * z(i);
        return f + 0.5 * (penalty.array() * theta.array().square()).sum();
    };

    Eigen::VectorXd theta = Eigen::VectorXd::Zero(k + 1);
    auto& diag = model.diagnostics;
    diag = {};
    diag.converged = false;
    double f = objective(theta);
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd z = x * theta;
        Eigen::VectorXd p(n), w(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p(i) = sigmoid(z(i));
            w(i) = p(i) * (1.0 - p(i));
        }
        const Eigen::VectorXd grad = x.transpose() * (p - yy) + penalty.cwiseProduct(theta);
        diag.final_delta = grad.lpNorm<Eigen::Infinity>();
        diag.iterations = iter;
        if (diag.final_delta < tol) {
            diag.converged = true;
            break;
        }
        Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x;
        hess.diagonal() += penalty;
        hess.diagonal().array() += 1e-12;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        // Backtracking keeps each step a descent step when curvature is flat.
        double scale = 1.0;
        Eigen::VectorXd next = theta - step;
        double f_next = objective(next);
        while (f_next > f && scale > 1e-10) {
            scale *= 0.5;
            next = theta - scale * step;
            f_next = objective(next);
        }
        theta = next;
        f = f_next;
        diag.iterations = iter + 1;
    }
    if (!diag.converged) {
        const Eigen::VectorXd z = x * theta;
        Eigen::VectorXd p(n);
        for (Eigen::Index i = 0; i < n; ++i) p(i) = sigmoid(z(i));
        diag.final_delta = (x.transpose() * (p - yy) + penalty.cwiseProduct(theta)).lpNorm<Eigen::Infinity>();
        diag.converged = diag.final_delta < tol;
    }
    diag.log_likelihood = -(f - 0.5 * (penalty.array() * theta.array().square()).sum());
    model.bias = theta(0);
    model.weights.assign(theta.data() + 1, theta.data() + 1 + k);
}

double logistic_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    double z = model.bias;
    for (std::size_t j = 0; j < row.size(); ++j) z += model.weights[j] * (row[j] == 1 ? 1.0 : -1.0);
    return sigmoid(z);
}

// ---- naive Bayes -----------------------------------------------------------

void fit_naive_bayes(EnsembleModel& model, const FeatureMatrix& m) {
    const auto& y = m.require_labels();
    require_both_classes(y);
    const double alpha = hyper_value(model.hyper, "alpha");
    if (alpha <= 0) throw PreconditionError("alpha must be > 0");
    const std::size_t k = m.cols();
    std::vector<double> c11(k, 0), c00(k, 0);
    double n1 = 0, n0 = 0;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        (y[i] ? n1 : n0) += 1;
        for (std::size_t j = 0; j < k; ++j) {
            if (y[i] == 1 && m.at(i, j) == 1) c11[j] += 1;
            if (y[i] == 0 && m.at(i, j) == 0) c00[j] += 1;
        }
    }
    model.sensitivity.resize(k);
    model.specificity.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        model.sensitivity[j] = (c11[j] + alpha) / (n1 + 2 * alpha);
        model.specificity[j] = (c00[j] + alpha) / (n0 + 2 * alpha);
    }
    model.prior = n1 / (n1 + n0);
}

// ---- k nearest -------------------------------------------------------------

double knn_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    const std::size_t k_cols = row.size();
    const std::size_t n = model.store_labels.size();
    std::vector<std::size_t> dist(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t d = 0;
        for (std::size_t j = 0; j < k_cols; ++j) d += model.store[i * k_cols + j] != row[j];
        dist[i] = d;
    }
    const auto k = std::clamp<std::size_t>(static_cast<std::size_t>(hyper_value(model.hyper, "k")), 1, n);
    std::vector<std::size_t> sorted = dist;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(k - 1), sorted.end());
    const std::size_t radius = sorted[k - 1];
    std::size_t ones = 0, total = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] > radius) continue;
        ++total;
        ones += model.store_labels[i] == 1;
    }
    return static_cast<double>(ones) / static_cast<double>(total);
}

// ---- decision tree ---------------------------------------------------------

using u128 = unsigned __int128;

// Weighted Gini of a split as the exact fraction num/den (scaled by 2/n).
struct SplitCost {
    u128 num, den;
    bool operator<(const SplitCost& o) const { return num * o.den < o.num * den; }
};

int build_tree(std::vector<TreeNode>& nodes, const FeatureMatrix& m, const std::vector<int>& y,
               std::vector<std::size_t> idx, int depth, int max_depth, std::size_t min_leaf) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    std::size_t n1 = 0;
    for (auto i : idx) n1 += y[i] == 1;
    const std::size_t n = idx.size();
    nodes[id].n = n;
    nodes[id].p = (static_cast<double>(n1) + 1.0) / (static_cast<double>(n) + 2.0);
    if (n1 == 0 || n1 == n || depth >= max_depth) return id;

    int best = -1;
    SplitCost best_cost{0, 1};
    for (std::size_t f = 0; f < m.cols(); ++f) {
        std::uint64_t l_n = 0, l_1 = 0;
        for (auto i : idx) {
            if (m.at(i, f) == 0) {
                ++l_n;
                l_1 += y[i] == 1;
            }
        }
        const std::uint64_t r_n = n - l_n, r_1 = n1 - l_1;
        if (l_n < min_leaf || r_n < min_leaf || l_n == 0 || r_n == 0) continue;
        // aL bL / nL + aR bR / nR over a common denominator.
        const u128 num = u128(l_1) * (l_n - l_1) * r_n + u128(r_1) * (r_n - r_1) * l_n;
        const SplitCost cost{num, u128(l_n) * r_n};
        if (best < 0 || cost < best_cost) {
            best = static_cast<int>(f);
            best_cost = cost;
        }
    }
    if (best < 0) return id;

    std::vector<std::size_t> left, right;
    for (auto i : idx) (m.at(i, static_cast<std::size_t>(best)) == 0 ? left : right).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const int l = build_tree(nodes, m, y, std::move(left), depth + 1, max_depth, min_leaf);
    const int r = build_tree(nodes, m, y, std::move(right), depth + 1, max_depth, min_leaf);
    nodes[id].feature = best;
    nodes[id].left = l;
    nodes[id].right = r;
    return id;
}

double tree_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    int node = 0;
    while (model.tree[node].feature >= 0) {
        const auto& t = model.tree[node];
        node = row[static_cast<std::size_t>(t.feature)] == 1 ? t.right : t.left;
    }
    return model.tree[node].p;
}

double naive_bayes_p(const EnsembleModel& model, std::span<const std::int8_t> row) {
    double a = std::log(model.prior), b = std::log(1.0 - model.prior);
    for (std::size_t j = 0; j < row.size(); ++j) {
        if (row[j] == 1) {
            a += std::log(model.sensitivity[j]);
            b += std::log(1.0 - model.specificity[j]);
        } else {
            a += std::log(1.0 - model.sensitivity[j]);
            b += std::log(model.specificity[j]);
        }
    }
    return sigmoid(a - b);
}

}  // namespace

std::string_view to_string(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::MajorityVote: return "MajorityVote";
        case EnsembleKind::WeightedMajorityVote: return "WeightedMajorityVote";
        case EnsembleKind::DawidSkene: return "DawidSkene";
        case EnsembleKind::LabelModel: return "LabelModel";
        case EnsembleKind::LogisticRegression: return "LogisticRegression";
        case EnsembleKind::BernoulliNaiveBayes: return "BernoulliNaiveBayes";
        case EnsembleKind::KNearest: return "KNearest";
        case EnsembleKind::DecisionTree: return "DecisionTree";
    }
    return "?";
}

EnsembleKind parse_ensemble_kind(std::string_view s) {
    for (auto k : kAllEnsembleKinds) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown ensembler kind: " + std::string(s));
}

bool needs_dense(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::LogisticRegression:
        case EnsembleKind::BernoulliNaiveBayes:
        case EnsembleKind::KNearest:
        case EnsembleKind::DecisionTree: return true;
        default: return false;
    }
}

Hyper default_hyper(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::MajorityVote:
        case EnsembleKind::WeightedMajorityVote: return {};
        case EnsembleKind::DawidSkene: return {{"supervised", 1}, {"max_iter", 500}, {"tol", 1e-6}};
        case EnsembleKind::LabelModel: return {{"supervised", 0}, {"max_iter", 500}, {"tol", 1e-6}};
        case EnsembleKind::LogisticRegression: return {{"l2", 1.0}, {"max_iter", 100}, {"tol", 1e-8}};
        case EnsembleKind::BernoulliNaiveBayes: return {{"alpha", 1.0}};
        case EnsembleKind::KNearest: return {{"k", 5}};
        case EnsembleKind::DecisionTree: return {{"max_depth", 3}, {"min_leaf", 1}};
    }
    return {};
}

Grid default_grid(EnsembleKind k) {
    switch (k) {
        case EnsembleKind::LogisticRegression: return {{"l2", {0.01, 0.1, 1, 10}}};
        case EnsembleKind::BernoulliNaiveBayes: return {{"alpha", {0.5, 1, 2}}};
        case EnsembleKind::KNearest: return {{"k", {3, 5, 7}}};
        case EnsembleKind::DecisionTree: return {{"max_depth", {2, 3, 4}}, {"min_leaf", {1, 5}}};
        default: return {};
    }
}

std::vector<Hyper> expand_grid(const Grid& grid) {
    std::vector<Hyper> points{Hyper{}};
    for (const auto& [key, values] : grid) {
        if (values.empty()) throw PreconditionError("grid entry '" + key + "' has no values");
        std::vector<Hyper> next;
        for (const auto& p : points) {
            for (double v : values) {
                auto h = p;
                h[key] = v;
                next.push_back(std::move(h));
            }
        }
        points = std::move(next);
    }
    return points;
}

EnsembleModel fit(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m) {
    EnsembleModel model;
    model.kind = kind;
    model.hyper = merged_hyper(kind, hyper);
    model.columns = m.prompt_ids();
    model.fill = column_majority(m);
    if (needs_dense(kind) && !m.dense())
        throw PreconditionError(std::string(to_string(kind)) + " needs an imputed (dense) matrix");

    switch (kind) {
        case EnsembleKind::MajorityVote: break;
        case EnsembleKind::WeightedMajorityVote: fit_weighted_vote(model, m); break;
        case EnsembleKind::DawidSkene: fit_two_coin(model, m, false); break;
        case EnsembleKind::LabelModel: fit_two_coin(model, m, true); break;
        case EnsembleKind::LogisticRegression: fit_logistic(model, m); break;
        case EnsembleKind::BernoulliNaiveBayes: fit_naive_bayes(model, m); break;
        case EnsembleKind::KNearest: {
            const auto& y = m.require_labels();
            require_both_classes(y);
            if (hyper_value(model.hyper, "k") < 1) throw PreconditionError("k must be >= 1");
            model.store = m.values();
            model.store_labels = y;
            break;
        }
        case EnsembleKind::DecisionTree: {
            const auto& y = m.require_labels();
            require_both_classes(y);
            const int depth = static_cast<int>(hyper_value(model.hyper, "max_depth"));
            const auto min_leaf = static_cast<std::size_t>(std::max(1.0, hyper_value(model.hyper, "min_leaf")));
            std::vector<std::size_t> idx(m.rows());
            std::iota(idx.begin(), idx.end(), 0);
            build_tree(model.tree, m, y, std::move(idx), 0, depth, min_leaf);
            break;
        }
    }
    return model;
}

std::vector<double> predict_proba(const EnsembleModel& model, const FeatureMatrix& m) {
    if (m.cols() != model.columns.size())
        throw ColumnMismatch("model has " + std::to_string(model.columns.size()) + " columns, matrix has " +
                             std::to_string(m.cols()));
    std::vector<std::size_t> src(model.columns.size());
    for (std::size_t j = 0; j < model.columns.size(); ++j) {
        const int c = m.column_index(model.columns[j]);
        if (c < 0) throw ColumnMismatch("matrix lacks model column '" + model.columns[j] + "'");
        src[j] = static_cast<std::size_t>(c);
    }

    std::vector<double> out(m.rows());
    std::vector<std::int8_t> row(src.size());
    const bool dense = needs_dense(model.kind);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < src.size(); ++j) {
            row[j] = m.at(i, src[j]);
            if (dense && row[j] == kAbstain) row[j] = model.fill[j];
        }
        double p = 0.5;
        switch (model.kind) {
            case EnsembleKind::MajorityVote: p = majority_p(row); break;
            case EnsembleKind::WeightedMajorityVote: p = weighted_vote_p(model, row); break;
            case EnsembleKind::DawidSkene:
            case EnsembleKind::LabelModel: p = two_coin_p(model, row); break;
            case EnsembleKind::LogisticRegression: p = logistic_p(model, row); break;
            case EnsembleKind::BernoulliNaiveBayes: p = naive_bayes_p(model, row); break;
            case EnsembleKind::KNearest: p = knn_p(model, row); break;
            case EnsembleKind::DecisionTree: p = tree_p(model, row); break;
        }
        out[i] = std::clamp(p, 0.0, 1.0);
    }
    return out;
}

std::vector<Prediction> predict(const EnsembleModel& model, const FeatureMatrix& m) {
    const auto probs = predict_proba(model, m);
    std::vector<Prediction> out(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) {
        out[i] = {m.example_ids()[i], probs[i], probs[i] >= 0.5 ? 1 : 0};
    }
    return out;
}

std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed) {
    if (folds < 2) throw PreconditionError("folds must be >= 2");
    std::vector<std::size_t> fold_of(labels.size(), 0);
    std::size_t offset = 0;
    for (int c : {0, 1}) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] == c) idx.push_back(i);
        }
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(c)));
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t pos = 0; pos < idx.size(); ++pos) fold_of[idx[pos]] = (offset + pos) % folds;
        offset = (offset + idx.size()) % folds;
    }
    return fold_of;
}

std::vector<double> cross_val_predict(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m,
                                      std::span<const std::size_t> fold_of, std::size_t folds, std::size_t threads) {
    if (fold_of.size() != m.rows()) throw PreconditionError("fold assignment does not match rows");
    std::vector<double> out(m.rows(), 0.5);
    parallel_for(folds, threads, [&](std::size_t f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < m.rows(); ++i) (fold_of[i] == f ? test : train).push_back(i);
        if (test.empty()) return;
        const auto model = fit(kind, hyper, m.take_rows(train));
        const auto probs = predict_proba(model, m.take_rows(test));
        for (std::size_t t = 0; t < test.size(); ++t) out[test[t]] = probs[t];
    });
    return out;
}

double cross_val_balanced_accuracy(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m,
                                   std::span<const std::size_t> fold_of, std::size_t folds, std::size_t threads) {
    const auto probs = cross_val_predict(kind, hyper, m, fold_of, folds, threads);
    std::vector<int> pred(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) pred[i] = probs[i] >= 0.5 ? 1 : 0;
    return balanced_accuracy(pred, m.require_labels());
}

GridSearchResult grid_search(EnsembleKind kind, const Grid& grid, const FeatureMatrix& train, std::size_t folds,
                             std::uint64_t seed, std::size_t threads) {
    if (grid.empty()) throw PreconditionError("grid_search: empty grid");
    if (folds < 2) throw PreconditionError("grid_search: folds must be >= 2");
    GridSearchResult r;
    r.points = expand_grid(grid);
    r.seed = seed;
    r.fold_of = stratified_folds(train.require_labels(), folds, seed);
    r.scores.assign(r.points.size(), 0.0);
    parallel_for(r.points.size(), threads, [&](std::size_t g) {
        try {
            r.scores[g] = cross_val_balanced_accuracy(kind, r.points[g], train, r.fold_of, folds);
        } catch (const Error&) {
            r.scores[g] = 0.0;
        }
    });
    std::size_t best = 0;
    for (std::size_t g = 1; g < r.scores.size(); ++g) {
        if (r.scores[g] > r.scores[best]) best = g;
    }
    r.best = r.points[best];
    r.best_score = r.scores[best];
    return r;
}

nlohmann::json to_json(const EnsembleModel& model) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["kind"] = std::string(to_string(model.kind));
    j["hyper"] = model.hyper;
    j["columns"] = model.columns;
    j["fill"] = model.fill;
    j["weights"] = model.weights;
    j["bias"] = model.bias;
    j["sensitivity"] = model.sensitivity;
    j["specificity"] = model.specificity;
    j["propensity"] = model.propensity;
    j["prior"] = model.prior;
    j["store"] = model.store;
    j["store_labels"] = model.store_labels;
    auto tree = nlohmann::json::array();
    for (const auto& t : model.tree) tree.push_back({t.feature, t.left, t.right, t.p, t.n});
    j["tree"] = tree;
    const auto& d = model.diagnostics;
    j["diagnostics"] = {{"iterations", d.iterations},
                        {"final_delta", std::isfinite(d.final_delta) ? nlohmann::json(d.final_delta) : nlohmann::json(nullptr)},
                        {"converged", d.converged},
                        {"log_likelihood", d.log_likelihood}};
    return j;
}

EnsembleModel model_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kModelFormatVersion)
            throw SchemaError(0, "format_version", "unsupported model format");
        EnsembleModel m;
        m.kind = parse_ensemble_kind(j.at("kind").get<std::string>());
        m.hyper = j.at("hyper").get<Hyper>();
        m.columns = j.at("columns").get<std::vector<std::string>>();
        m.fill = j.at("fill").get<std::vector<std::int8_t>>();
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.sensitivity = j.at("sensitivity").get<std::vector<double>>();
        m.specificity = j.at("specificity").get<std::vector<double>>();
        m.propensity = j.at("propensity").get<std::vector<double>>();
        m.prior = j.at("prior").get<double>();
        m.store = j.at("store").get<std::vector<std::int8_t>>();
        m.store_labels = j.at("store_labels").get<std::vector<int>>();
        for (const auto& t : j.at("tree")) {
            m.tree.push_back({t.at(0).get<int>(), t.at(1).get<int>(), t.at(2).get<int>(), t.at(3).get<double>(),
                              t.at(4).get<std::size_t>()});
        }
        const auto& d = j.at("diagnostics");
        m.diagnostics.iterations = d.at("iterations").get<int>();
        m.diagnostics.final_delta = d.at("final_delta").is_null() ? std::numeric_limits<double>::infinity()
                                                                  : d.at("final_delta").get<double>();
        m.diagnostics.converged = d.at("converged").get<bool>();
        m.diagnostics.log_likelihood = d.at("log_likelihood").get<double>();
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(0, "model", e.what());
    }
}

}  // namespace factens
