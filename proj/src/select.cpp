#include "factens/select.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"

namespace factens {

namespace {

std::vector<std::int8_t> column(const FeatureMatrix& m, std::size_t j) {
    std::vector<std::int8_t> c(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) c[i] = m.at(i, j);
    return c;
}

void require_selectable(const FeatureMatrix& m, std::size_t size) {
    if (size > m.cols()) throw SizeExceedsColumns(size, m.cols());
    if (!m.dense()) throw PreconditionError("selection needs an imputed (dense) matrix");
    m.require_labels();
}

}  // namespace

std::string_view to_string(SelectionMethod m) { return m == SelectionMethod::MRMR ? "mRMR" : "RFE"; }

double mutual_information(std::span<const std::int8_t> x, std::span<const int> y) {
    if (x.size() != y.size()) throw PreconditionError("mutual_information: length mismatch");
    if (x.empty()) return 0;
    double joint[2][2] = {{0, 0}, {0, 0}};
    for (std::size_t i = 0; i < x.size(); ++i) joint[x[i] == 1][y[i] == 1] += 1;
    const auto n = static_cast<double>(x.size());
    double mi = 0;
    for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
            if (joint[a][b] == 0) continue;
            const double pa = (joint[a][0] + joint[a][1]) / n;
            const double pb = (joint[0][b] + joint[1][b]) / n;
            const double pab = joint[a][b] / n;
            mi += pab * std::log(pab / (pa * pb));
        }
    }
    return std::max(0.0, mi);
}

double pearson(std::span<const std::int8_t> x, std::span<const std::int8_t> y) {
    if (x.size() != y.size()) throw PreconditionError("pearson: length mismatch");
    const auto n = static_cast<double>(x.size());
    if (x.empty()) return 0;
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double cxy = 0, cxx = 0, cyy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        cxy += dx * dy;
        cxx += dx * dx;
        cyy += dy * dy;
    }
    if (cxx == 0 || cyy == 0) return 0;
    return cxy / std::sqrt(cxx * cyy);
}

SelectionResult mrmr_select(const FeatureMatrix& m, std::size_t size) {
    require_selectable(m, size);
    const auto& y = m.require_labels();
    std::vector<std::vector<std::int8_t>> cols;
    std::vector<double> relevance;
    for (std::size_t j = 0; j < m.cols(); ++j) {
        cols.push_back(column(m, j));
        relevance.push_back(mutual_information(cols.back(), y));
    }

    SelectionResult r;
    r.method = SelectionMethod::MRMR;
    r.size = size;
    std::vector<std::size_t> chosen;
    std::vector<bool> taken(m.cols(), false);
    std::vector<double> redundancy_sum(m.cols(), 0.0);
    while (chosen.size() < size) {
        int best = -1;
        double best_score = 0;
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (taken[j]) continue;
            double score = relevance[j];
            if (!chosen.empty()) score -= redundancy_sum[j] / static_cast<double>(chosen.size());
            if (best < 0 || score > best_score) {
                best = static_cast<int>(j);
                best_score = score;
            }
        }
        const auto b = static_cast<std::size_t>(best);
        taken[b] = true;
        chosen.push_back(b);
        for (std::size_t j = 0; j < m.cols(); ++j) {
            if (!taken[j]) redundancy_sum[j] += std::abs(pearson(cols[j], cols[b]));
        }
    }
    for (auto j : chosen) r.prompt_ids.push_back(m.prompt_ids()[j]);
    return r;
}

SelectionResult rfe_select(const FeatureMatrix& m, std::size_t size, EnsembleKind base, const Hyper& hyper) {
    require_selectable(m, size);
    if (base != EnsembleKind::LogisticRegression && base != EnsembleKind::WeightedMajorityVote)
        throw PreconditionError("RFE base must expose per-column weights");
    std::vector<std::string> remaining = m.prompt_ids();
    while (remaining.size() > size) {
        const auto model = fit(base, hyper, select_columns(m, remaining));
        std::size_t drop = 0;
        for (std::size_t j = 1; j < remaining.size(); ++j) {
            if (std::abs(model.weights[j]) < std::abs(model.weights[drop])) drop = j;
        }
        remaining.erase(remaining.begin() + static_cast<long>(drop));
    }
    SelectionResult r;
    r.method = SelectionMethod::RFE;
    r.size = size;
    r.prompt_ids = std::move(remaining);
    return r;
}

double subset_score(const FeatureMatrix& m, std::span<const std::string> prompt_ids,
                    const BestSubsetOptions& options) {
    const auto folds = stratified_folds(m.require_labels(), options.folds, options.seed);
    return cross_val_balanced_accuracy(options.evaluator, options.evaluator_hyper, select_columns(m, prompt_ids),
                                       folds, options.folds);
}

SelectionResult best_subset(const FeatureMatrix& m, std::size_t size, const BestSubsetOptions& options) {
    auto a = mrmr_select(m, size);
    auto b = rfe_select(m, size, options.rfe_base);
    a.cv_balanced_accuracy = subset_score(m, a.prompt_ids, options);
    auto sa = a.prompt_ids, sb = b.prompt_ids;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    if (sa == sb) return a;
    b.cv_balanced_accuracy = subset_score(m, b.prompt_ids, options);
    return b.cv_balanced_accuracy > a.cv_balanced_accuracy ? b : a;
}

nlohmann::json to_json(const SelectionResult& r) {
    return {{"method", std::string(to_string(r.method))},
            {"prompt_ids", r.prompt_ids},
            {"cv_balanced_accuracy", r.cv_balanced_accuracy},
            {"size", r.size}};
}

}  // namespace factens
