#include "factens/metrics.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"
#include "factens/format.hpp"
#include "factens/parallel.hpp"
#include "factens/rng.hpp"

namespace factens {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
    if (a != b) throw PreconditionError(std::string(what) + ": length mismatch");
}

struct Confusion {
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    double balanced_accuracy() const {
        return 0.5 * (static_cast<double>(tp) / static_cast<double>(tp + fn) +
                      static_cast<double>(tn) / static_cast<double>(tn + fp));
    }
    bool both_classes() const { return tp + fn > 0 && tn + fp > 0; }
    void add(int p, int g) {
        if (g == 1) (p == 1 ? tp : fn)++;
        else (p == 1 ? fp : tn)++;
    }
};

std::vector<ReliabilityBin> empty_bins(std::size_t m) {
    std::vector<ReliabilityBin> bins(m);
    for (std::size_t i = 0; i < m; ++i) {
        bins[i].lo = static_cast<double>(i) / static_cast<double>(m);
        bins[i].hi = static_cast<double>(i + 1) / static_cast<double>(m);
    }
    return bins;
}

void finish_bins(std::vector<ReliabilityBin>& bins, const std::vector<double>& conf_sum,
                 const std::vector<double>& hit_sum) {
    for (std::size_t i = 0; i < bins.size(); ++i) {
        if (bins[i].count == 0) {
            bins[i].mean_confidence = 0.5 * (bins[i].lo + bins[i].hi);
            bins[i].empirical_accuracy = 0;
            continue;
        }
        const auto n = static_cast<double>(bins[i].count);
        bins[i].mean_confidence = conf_sum[i] / n;
        bins[i].empirical_accuracy = hit_sum[i] / n;
    }
}

}  // namespace

double balanced_accuracy(std::span<const int> pred, std::span<const int> gold) {
    require_same_length(pred.size(), gold.size(), "balanced_accuracy");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) c.add(pred[i], gold[i]);
    if (!c.both_classes()) throw SingleClassGold();
    return c.balanced_accuracy();
}

PrecisionRecall precision_recall(std::span<const int> pred, std::span<const int> gold) {
    require_same_length(pred.size(), gold.size(), "precision_recall");
    Confusion c;
    for (std::size_t i = 0; i < pred.size(); ++i) c.add(pred[i], gold[i]);
    PrecisionRecall r;
    if (c.tp + c.fp == 0) {
        r.precision_defined = false;
        r.precision = 0;
    } else {
        r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    }
    if (c.tp + c.fn == 0) {
        r.recall_defined = false;
        r.recall = 0;
    } else {
        r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    }
    return r;
}

EceResult expected_calibration_error(std::span<const double> probs, std::span<const int> gold, std::size_t m_bins,
                                     ConfidenceMode mode) {
    require_same_length(probs.size(), gold.size(), "ece");
    if (m_bins == 0) throw PreconditionError("ece: m_bins must be >= 1");

    EceResult r;
    r.bins = empty_bins(m_bins);
    r.positive_bins = empty_bins(m_bins);
    r.negative_bins = empty_bins(m_bins);
    std::vector<double> conf_all(m_bins), hit_all(m_bins), conf_pos(m_bins), hit_pos(m_bins), conf_neg(m_bins),
        hit_neg(m_bins);

    for (std::size_t i = 0; i < probs.size(); ++i) {
        const double p = std::clamp(probs[i], 0.0, 1.0);
        const int predicted = p >= 0.5 ? 1 : 0;
        double conf, hit;
        if (mode == ConfidenceMode::PositiveClass) {
            conf = p;
            hit = gold[i] == 1 ? 1.0 : 0.0;
        } else {
            conf = std::max(p, 1.0 - p);
            hit = predicted == gold[i] ? 1.0 : 0.0;
        }
        const auto b = std::min(static_cast<std::size_t>(conf * static_cast<double>(m_bins)), m_bins - 1);
        r.bins[b].count++;
        conf_all[b] += conf;
        hit_all[b] += hit;
        auto& split_bins = predicted ? r.positive_bins : r.negative_bins;
        split_bins[b].count++;
        (predicted ? conf_pos : conf_neg)[b] += conf;
        (predicted ? hit_pos : hit_neg)[b] += hit;
    }
    finish_bins(r.bins, conf_all, hit_all);
    finish_bins(r.positive_bins, conf_pos, hit_pos);
    finish_bins(r.negative_bins, conf_neg, hit_neg);

    if (!probs.empty()) {
        const auto n = static_cast<double>(probs.size());
        for (const auto& b : r.bins) {
            if (b.count == 0) continue;
            r.ece += static_cast<double>(b.count) / n * std::abs(b.empirical_accuracy - b.mean_confidence);
        }
    }
    return r;
}

double bonferroni(double p_value, std::size_t comparisons) {
    return std::min(1.0, p_value * static_cast<double>(comparisons));
}

BootstrapResult bootstrap_compare(std::span<const int> pred_a, std::span<const int> pred_b, std::span<const int> gold,
                                  const BootstrapOptions& options) {
    require_same_length(pred_a.size(), gold.size(), "bootstrap_compare");
    require_same_length(pred_b.size(), gold.size(), "bootstrap_compare");
    if (options.resamples == 0) throw PreconditionError("bootstrap_compare: resamples must be > 0");
    if (options.comparisons == 0) throw PreconditionError("bootstrap_compare: comparisons must be >= 1");

    BootstrapResult r;
    r.delta_observed = balanced_accuracy(pred_a, gold) - balanced_accuracy(pred_b, gold);
    r.resamples = options.resamples;
    r.seed = options.seed;
    r.comparisons = options.comparisons;

    const std::size_t n = gold.size();
    std::vector<double> deltas(options.resamples);
    std::vector<std::size_t> redraws(options.resamples, 0);
    parallel_for(options.resamples, options.threads, [&](std::size_t k) {
        const auto resample_seed = derive_seed(options.seed, k);
        for (std::uint64_t attempt = 0;; ++attempt) {
            Rng rng(derive_seed(resample_seed, attempt));
            Confusion a, b;
            for (std::size_t i = 0; i < n; ++i) {
                const auto j = static_cast<std::size_t>(rng.index(n));
                a.add(pred_a[j], gold[j]);
                b.add(pred_b[j], gold[j]);
            }
            if (a.both_classes()) {
                deltas[k] = a.balanced_accuracy() - b.balanced_accuracy();
                redraws[k] = attempt;
                return;
            }
        }
    });

    std::size_t le = 0, ge = 0;
    for (std::size_t k = 0; k < deltas.size(); ++k) {
        if (deltas[k] <= 0) ++le;
        if (deltas[k] >= 0) ++ge;
        r.redraws += redraws[k];
    }
    const auto total = static_cast<double>(options.resamples);
    if (options.sided == Sidedness::OneSided) {
        r.p_value = static_cast<double>(le) / total;
    } else {
        r.p_value = std::min(1.0, 2.0 * static_cast<double>(std::min(le, ge)) / total);
    }
    r.p_value_bonferroni = bonferroni(r.p_value, options.comparisons);
    return r;
}

double binomial_ci95(double value, std::size_t n) {
    if (n == 0) throw PreconditionError("binomial_ci95: n must be >= 1");
    const double v = std::clamp(value, 0.0, 1.0);
    return 1.96 * std::sqrt(v * (1.0 - v) / static_cast<double>(n));
}

EvalReport evaluate_predictions(std::span<const double> probs, std::span<const int> gold, std::size_t m_bins) {
    require_same_length(probs.size(), gold.size(), "evaluate_predictions");
    std::vector<int> pred(probs.size());
    for (std::size_t i = 0; i < probs.size(); ++i) pred[i] = probs[i] >= 0.5 ? 1 : 0;
    EvalReport r;
    r.n = probs.size();
    r.balanced_accuracy = balanced_accuracy(pred, gold);
    const auto pr = precision_recall(pred, gold);
    r.precision = pr.precision;
    r.recall = pr.recall;
    r.precision_defined = pr.precision_defined;
    r.reliability = expected_calibration_error(probs, gold, m_bins);
    r.ece = r.reliability.ece;
    r.ci95_balanced_accuracy = binomial_ci95(r.balanced_accuracy, r.n);
    return r;
}

namespace {

nlohmann::ordered_json bins_json(const std::vector<ReliabilityBin>& bins) {
    auto arr = nlohmann::ordered_json::array();
    for (const auto& b : bins) {
        arr.push_back({{"lo", b.lo},
                       {"hi", b.hi},
                       {"count", b.count},
                       {"mean_confidence", b.mean_confidence},
                       {"empirical_accuracy", b.empirical_accuracy}});
    }
    return arr;
}

}  // namespace

nlohmann::json to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["balanced_accuracy"] = r.balanced_accuracy;
    j["precision"] = r.precision;
    j["precision_defined"] = r.precision_defined;
    j["recall"] = r.recall;
    j["ece"] = r.ece;
    j["ci95"] = {{"balanced_accuracy", r.ci95_balanced_accuracy}};
    j["n"] = r.n;
    j["reliability_bins"] = {{"all", bins_json(r.reliability.bins)},
                             {"positive", bins_json(r.reliability.positive_bins)},
                             {"negative", bins_json(r.reliability.negative_bins)}};
    return nlohmann::json::parse(j.dump());
}

nlohmann::json to_json(const BootstrapResult& r) {
    return {{"delta_observed", r.delta_observed}, {"p_value", r.p_value},
            {"p_value_bonferroni", r.p_value_bonferroni}, {"resamples", r.resamples},
            {"seed", r.seed}, {"comparisons", r.comparisons},
            {"redraws", r.redraws}};
}

std::vector<std::vector<std::string>> reliability_rows(const EceResult& r) {
    std::vector<std::vector<std::string>> rows;
    auto emit = [&](const std::vector<ReliabilityBin>& bins, const char* split) {
        for (const auto& b : bins) {
            rows.push_back({fmt_num(b.lo), fmt_num(b.hi), split, std::to_string(b.count), fmt_num(b.mean_confidence),
                            fmt_num(b.empirical_accuracy)});
        }
    };
    emit(r.bins, "all");
    emit(r.positive_bins, "positive");
    emit(r.negative_bins, "negative");
    return rows;
}

}  // namespace factens
