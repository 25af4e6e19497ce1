#include "factens/calibrate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "factens/error.hpp"

namespace factens {

namespace {

double sigmoid(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void require_aligned(std::span<const double> scores, std::span<const int> labels) {
    if (scores.size() != labels.size()) throw PreconditionError("calibrator: scores and labels differ in length");
}

// lgamma-based log Beta function.
double log_beta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

struct BinCounts {
    std::vector<double> n, m;
};

BinCounts count_bins(const Binning& bins, std::span<const double> scores, std::span<const int> labels) {
    BinCounts c{std::vector<double>(bins.edges.size() - 1, 0.0), std::vector<double>(bins.edges.size() - 1, 0.0)};
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const auto b = bins.bin_of(scores[i]);
        c.n[b] += 1;
        c.m[b] += labels[i];
    }
    return c;
}

nlohmann::json binning_json(const Binning& b) { return {{"edges", b.edges}, {"values", b.values}}; }

Binning binning_from_json(const nlohmann::json& j) {
    Binning b;
    b.edges = j.at("edges").get<std::vector<double>>();
    b.values = j.at("values").get<std::vector<double>>();
    if (b.edges.size() < 2 || b.values.size() + 1 != b.edges.size())
        throw SchemaError(0, "edges", "binning edges and values disagree");
    return b;
}

}  // namespace

std::string_view to_string(CalibratorKind k) {
    switch (k) {
        case CalibratorKind::Platt: return "Platt";
        case CalibratorKind::Isotonic: return "Isotonic";
        case CalibratorKind::HistogramBinning: return "HistogramBinning";
        case CalibratorKind::BBQ: return "BBQ";
    }
    return "?";
}

CalibratorKind parse_calibrator_kind(std::string_view s) {
    for (auto k : kAllCalibratorKinds) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown calibrator kind: " + std::string(s));
}

std::size_t Binning::bin_of(double p) const {
    const auto it = std::upper_bound(edges.begin(), edges.end(), p);
    const auto idx = static_cast<std::ptrdiff_t>(it - edges.begin()) - 1;
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(values.size()) - 1));
}

Calibrator fit_platt(std::span<const double> scores, std::span<const int> labels) {
    require_aligned(scores, labels);
    const auto n_pos = static_cast<double>(std::count(labels.begin(), labels.end(), 1));
    const auto n_neg = static_cast<double>(labels.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DegenerateLabels();
    const double t_pos = (n_pos + 1.0) / (n_pos + 2.0);
    const double t_neg = 1.0 / (n_neg + 2.0);

    auto loss = [&](double a, double b) {
        double f = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double z = a * scores[i] + b;
            const double t = labels[i] == 1 ? t_pos : t_neg;
            // t log(1+e^-z) + (1-t) log(1+e^z)
            const double lp = z > 0 ? std::log1p(std::exp(-z)) : -z + std::log1p(std::exp(z));
            f += t * lp + (1.0 - t) * (lp + z);
        }
        return f;
    };

    Calibrator c;
    c.kind = CalibratorKind::Platt;
    c.a = 0;
    c.b = std::log((n_pos + 1.0) / (n_neg + 1.0));
    double f = loss(c.a, c.b);
    for (int iter = 0; iter < 200; ++iter) {
        double ga = 0, gb = 0, haa = 0, hab = 0, hbb = 0;
        for (std::size_t i = 0; i < scores.size(); ++i) {
            const double s = scores[i];
            const double p = sigmoid(c.a * s + c.b);
            const double t = labels[i] == 1 ? t_pos : t_neg;
            const double w = p * (1.0 - p);
            ga += (p - t) * s;
            gb += p - t;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        c.iterations = iter;
        if (std::max(std::abs(ga), std::abs(gb)) < 1e-10) break;
        haa += 1e-12;
        hbb += 1e-12;
        const double det = haa * hbb - hab * hab;
        const double da = (hbb * ga - hab * gb) / det;
        const double db = (haa * gb - hab * ga) / det;
        double step = 1.0;
        double na = c.a - da, nb = c.b - db, nf = loss(na, nb);
        while (nf > f && step > 1e-10) {
            step *= 0.5;
            na = c.a - step * da;
            nb = c.b - step * db;
            nf = loss(na, nb);
        }
        if (nf > f) break;
        c.a = na;
        c.b = nb;
        f = nf;
        c.iterations = iter + 1;
    }
    return c;
}

Calibrator fit_isotonic(std::span<const double> scores, std::span<const int> labels) {
    require_aligned(scores, labels);
    if (scores.size() < 2) throw PreconditionError("isotonic: need at least 2 samples");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return scores[i] < scores[j]; });

    struct Block {
        double lo;
        double sum;
        double weight;
    };
    // Equal scores cannot be separated by a step function, so pool them first.
    std::vector<Block> pooled;
    for (auto i : order) {
        if (!pooled.empty() && pooled.back().lo == scores[i]) {
            pooled.back().sum += labels[i];
            pooled.back().weight += 1.0;
        } else {
            pooled.push_back({scores[i], static_cast<double>(labels[i]), 1.0});
        }
    }
    // Pool adjacent violators.
    std::vector<Block> stack;
    for (const auto& b : pooled) {
        stack.push_back(b);
        while (stack.size() >= 2) {
            const auto& top = stack[stack.size() - 1];
            const auto& below = stack[stack.size() - 2];
            // below.mean > top.mean, compared without division
            if (below.sum * top.weight <= top.sum * below.weight) break;
            Block merged{below.lo, below.sum + top.sum, below.weight + top.weight};
            stack.pop_back();
            stack.back() = merged;
        }
    }
    Calibrator c;
    c.kind = CalibratorKind::Isotonic;
    for (const auto& b : stack) {
        c.knots.push_back(b.lo);
        c.knot_values.push_back(b.sum / b.weight);
    }
    return c;
}

std::vector<double> equal_frequency_edges(std::span<const double> scores, std::size_t bins) {
    if (bins == 0) throw PreconditionError("histogram: bins must be >= 1");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges{0.0};
    const std::size_t n = sorted.size();
    for (std::size_t k = 1; k < bins && n > 0; ++k) {
        const std::size_t q = k * n / bins;
        if (q == 0 || q >= n) continue;
        const double e = 0.5 * (sorted[q - 1] + sorted[q]);
        if (e > edges.back() && e < 1.0) edges.push_back(e);
    }
    edges.push_back(1.0);
    return edges;
}

Calibrator fit_histogram(std::span<const double> scores, std::span<const int> labels, std::size_t bins) {
    require_aligned(scores, labels);
    if (bins == 0) throw PreconditionError("histogram: bins must be >= 1");
    if (scores.empty()) throw PreconditionError("histogram: no samples");
    Calibrator c;
    c.kind = CalibratorKind::HistogramBinning;
    c.histogram.edges = equal_frequency_edges(scores, bins);
    c.histogram.values.assign(c.histogram.edges.size() - 1, 0.0);
    const auto counts = count_bins(c.histogram, scores, labels);
    const std::size_t nb = c.histogram.values.size();
    std::vector<bool> empty(nb);
    for (std::size_t b = 0; b < nb; ++b) {
        empty[b] = counts.n[b] == 0;
        if (!empty[b]) c.histogram.values[b] = counts.m[b] / counts.n[b];
    }
    // Empty bins take the midpoint of the nearest occupied neighbours.
    for (std::size_t b = 0; b < nb; ++b) {
        if (!empty[b]) continue;
        std::optional<double> left, right;
        for (std::size_t l = b; l-- > 0;) {
            if (!empty[l]) {
                left = c.histogram.values[l];
                break;
            }
        }
        for (std::size_t r = b + 1; r < nb; ++r) {
            if (!empty[r]) {
                right = c.histogram.values[r];
                break;
            }
        }
        if (left && right) c.histogram.values[b] = 0.5 * (*left + *right);
        else c.histogram.values[b] = left ? *left : *right;
    }
    return c;
}

Calibrator fit_bbq(std::span<const double> scores, std::span<const int> labels,
                   std::optional<std::vector<std::size_t>> bin_counts) {
    require_aligned(scores, labels);
    if (scores.size() < 4) throw PreconditionError("BBQ: need at least 4 samples");
    std::vector<std::size_t> candidates;
    if (bin_counts) {
        candidates = *bin_counts;
    } else {
        const auto hi = static_cast<std::size_t>(std::ceil(2.0 * std::cbrt(static_cast<double>(scores.size()))));
        for (std::size_t b = 2; b <= std::max<std::size_t>(2, hi); ++b) candidates.push_back(b);
    }
    if (candidates.empty()) throw PreconditionError("BBQ: no candidate bin counts");

    Calibrator c;
    c.kind = CalibratorKind::BBQ;
    std::vector<double> log_score;
    for (auto b : candidates) {
        if (b == 0) throw PreconditionError("BBQ: bin count must be >= 1");
        Binning bins;
        bins.edges = equal_frequency_edges(scores, b);
        bins.values.assign(bins.edges.size() - 1, 0.0);
        const auto counts = count_bins(bins, scores, labels);
        double ls = 0;
        for (std::size_t k = 0; k < bins.values.size(); ++k) {
            const double n = counts.n[k], m = counts.m[k];
            bins.values[k] = (m + 1.0) / (n + 2.0);
            // Beta(1,1) normalizer is 1.
            ls += log_beta(m + 1.0, n - m + 1.0);
        }
        c.models.push_back(std::move(bins));
        log_score.push_back(ls);
    }
    const double top = *std::max_element(log_score.begin(), log_score.end());
    double z = 0;
    for (double s : log_score) z += std::exp(s - top);
    for (double s : log_score) c.weights.push_back(std::exp(s - top) / z);
    return c;
}

Calibrator fit_calibrator(CalibratorKind kind, std::span<const double> scores, std::span<const int> labels) {
    switch (kind) {
        case CalibratorKind::Platt: return fit_platt(scores, labels);
        case CalibratorKind::Isotonic: return fit_isotonic(scores, labels);
        case CalibratorKind::HistogramBinning: return fit_histogram(scores, labels);
        case CalibratorKind::BBQ: return fit_bbq(scores, labels);
    }
    throw PreconditionError("unknown calibrator kind");
}

double apply(const Calibrator& c, double p) {
    double out = 0;
    switch (c.kind) {
        case CalibratorKind::Platt: out = sigmoid(c.a * p + c.b); break;
        case CalibratorKind::Isotonic: {
            const auto it = std::upper_bound(c.knots.begin(), c.knots.end(), p);
            const auto idx = it == c.knots.begin() ? 0 : static_cast<std::size_t>(it - c.knots.begin()) - 1;
            out = c.knot_values[idx];
            break;
        }
        case CalibratorKind::HistogramBinning: out = c.histogram.values[c.histogram.bin_of(p)]; break;
        case CalibratorKind::BBQ:
            for (std::size_t k = 0; k < c.models.size(); ++k) out += c.weights[k] * c.models[k].values[c.models[k].bin_of(p)];
            break;
    }
    return std::clamp(out, 0.0, 1.0);
}

std::vector<double> apply_all(const Calibrator& c, std::span<const double> p) {
    std::vector<double> out(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) out[i] = apply(c, p[i]);
    return out;
}

nlohmann::json to_json(const Calibrator& c) {
    nlohmann::json j;
    j["format_version"] = kCalibratorFormatVersion;
    j["kind"] = std::string(to_string(c.kind));
    switch (c.kind) {
        case CalibratorKind::Platt: j["a"] = c.a; j["b"] = c.b; j["iterations"] = c.iterations; break;
        case CalibratorKind::Isotonic: j["knots"] = c.knots; j["knot_values"] = c.knot_values; break;
        case CalibratorKind::HistogramBinning: j["histogram"] = binning_json(c.histogram); break;
        case CalibratorKind::BBQ: {
            auto models = nlohmann::json::array();
            for (const auto& m : c.models) models.push_back(binning_json(m));
            j["models"] = models;
            j["weights"] = c.weights;
            break;
        }
    }
    return j;
}

Calibrator calibrator_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != kCalibratorFormatVersion)
            throw SchemaError(0, "format_version", "unsupported calibrator format");
        Calibrator c;
        c.kind = parse_calibrator_kind(j.at("kind").get<std::string>());
        switch (c.kind) {
            case CalibratorKind::Platt:
                c.a = j.at("a").get<double>();
                c.b = j.at("b").get<double>();
                c.iterations = j.value("iterations", 0);
                break;
            case CalibratorKind::Isotonic:
                c.knots = j.at("knots").get<std::vector<double>>();
                c.knot_values = j.at("knot_values").get<std::vector<double>>();
                if (c.knots.empty() || c.knots.size() != c.knot_values.size())
                    throw SchemaError(0, "knots", "knots and values disagree");
                break;
            case CalibratorKind::HistogramBinning: c.histogram = binning_from_json(j.at("histogram")); break;
            case CalibratorKind::BBQ:
                for (const auto& m : j.at("models")) c.models.push_back(binning_from_json(m));
                c.weights = j.at("weights").get<std::vector<double>>();
                if (c.models.empty() || c.models.size() != c.weights.size())
                    throw SchemaError(0, "weights", "models and weights disagree");
                break;
        }
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(0, "calibrator", e.what());
    }
}

}  // namespace factens
