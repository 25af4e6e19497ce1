#pragma once

// Planted generators shared by the unit and acceptance tests. Each draws from
// a fully specified model, so the model itself is the oracle.

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "factens/featurize.hpp"
#include "factens/rng.hpp"

namespace factens::testing {

// Exactly n/2 labels of each class, shuffled.
inline std::vector<int> balanced_labels(std::size_t n, Rng& rng) {
    std::vector<int> y(n, 0);
    for (std::size_t i = 0; i < n / 2; ++i) y[i] = 1;
    rng.shuffle(std::span<int>(y));
    return y;
}

inline std::vector<std::string> ids(const std::string& prefix, std::size_t n) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

// Two-coin labelers: P(vote 1 | y=1) = s[j], P(vote 0 | y=0) = t[j];
// labels drawn Bernoulli(pi).
inline FeatureMatrix planted_two_coin(const std::vector<double>& s, const std::vector<double>& t, double pi,
                                      std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t k = s.size();
    std::vector<std::int8_t> v;
    std::vector<int> y;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = rng.bernoulli(pi) ? 1 : 0;
        y.push_back(label);
        for (std::size_t j = 0; j < k; ++j) {
            const bool one = label == 1 ? rng.bernoulli(s[j]) : !rng.bernoulli(t[j]);
            v.push_back(one ? 1 : 0);
        }
    }
    return {ids("r", n), ids("p", k), std::move(v), std::move(y)};
}

// Symmetric labelers with accuracy acc[j] on exactly balanced labels.
inline FeatureMatrix independent_labelers(const std::vector<double>& acc, std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    auto y = balanced_labels(n, rng);
    std::vector<std::int8_t> v;
    for (std::size_t i = 0; i < n; ++i) {
        for (double a : acc) v.push_back(static_cast<std::int8_t>(rng.bernoulli(a) ? y[i] : 1 - y[i]));
    }
    return {ids("r", n), ids("p", acc.size()), std::move(v), std::move(y)};
}

struct ScoredSample {
    std::vector<double> scores;
    std::vector<int> labels;
};

// Overconfident scorer: reported score s ~ U[0,1], true positive rate
// 0.5 + (s - 0.5) / 2, so a reported 0.9 is right 70% of the time.
inline ScoredSample overconfident(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    ScoredSample out;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = rng.uniform();
        out.scores.push_back(s);
        out.labels.push_back(rng.bernoulli(0.5 + (s - 0.5) / 2) ? 1 : 0);
    }
    return out;
}

// Calibrated scorer: label ~ Bernoulli(score), score ~ U[0,1].
inline ScoredSample calibrated(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    ScoredSample out;
    for (std::size_t i = 0; i < n; ++i) {
        const double s = rng.uniform();
        out.scores.push_back(s);
        out.labels.push_back(rng.bernoulli(s) ? 1 : 0);
    }
    return out;
}

// Exhaustive oracles.

// Least-squares monotone fit by brute force: every contiguous partition of the
// distinct-score groups, each block at its mean, keeping the non-decreasing
// partition with the smallest squared error. Scores live on the 1/8 grid and
// N <= 8, so block sizes divide 840 and the objective is compared in integers.
inline std::map<double, double> exhaustive_isotonic(const std::vector<double>& scores, const std::vector<int>& labels) {
    std::map<double, std::pair<long, long>> groups;  // score -> (sum, weight)
    for (std::size_t i = 0; i < scores.size(); ++i) {
        groups[scores[i]].first += labels[i];
        groups[scores[i]].second += 1;
    }
    std::vector<double> keys;
    std::vector<long> s, w;
    for (const auto& [k, v] : groups) {
        keys.push_back(k);
        s.push_back(v.first);
        w.push_back(v.second);
    }
    const std::size_t g = keys.size();
    long best_obj = -1;
    std::vector<double> best_vals;
    for (unsigned cuts = 0; cuts < (1u << (g - 1)); ++cuts) {
        std::vector<std::pair<long, long>> blocks;
        std::vector<std::size_t> block_of(g);
        blocks.push_back({0, 0});
        for (std::size_t i = 0; i < g; ++i) {
            if (i > 0 && (cuts >> (i - 1)) & 1u) blocks.push_back({0, 0});
            blocks.back().first += s[i];
            blocks.back().second += w[i];
            block_of[i] = blocks.size() - 1;
        }
        bool monotone = true;
        for (std::size_t b = 1; b < blocks.size(); ++b) {
            if (blocks[b - 1].first * blocks[b].second > blocks[b].first * blocks[b - 1].second) monotone = false;
        }
        if (!monotone) continue;
        // Squared error = sum(y) - sum_b S_b^2 / W_b, so maximize the latter.
        long obj = 0;
        for (const auto& [bs, bw] : blocks) obj += bs * bs * (840 / bw);
        if (obj > best_obj) {
            best_obj = obj;
            best_vals.assign(g, 0);
            for (std::size_t i = 0; i < g; ++i) {
                const auto& b = blocks[block_of[i]];
                best_vals[i] = static_cast<double>(b.first) / static_cast<double>(b.second);
            }
        }
    }
    std::map<double, double> out;
    for (std::size_t i = 0; i < g; ++i) out[keys[i]] = best_vals[i];
    return out;
}

// Balanced accuracy scaled by 2 * pos * neg, i.e. tp * neg + tn * pos; exact
// in integers.
inline long ba_key(const std::vector<double>& s, const std::vector<int>& g, double t) {
    long tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        (g[i] ? pos : neg)++;
        if (g[i] && s[i] >= t) ++tp;
        if (!g[i] && s[i] < t) ++tn;
    }
    return tp * neg + tn * pos;
}

// Best balanced accuracy over every real threshold. The rule score >= t only
// changes labels when t crosses a score, so the achievable labelings are
// "t = each score" plus "t above everything".
inline long exhaustive_best(const std::vector<double>& s, const std::vector<int>& g) {
    std::vector<double> cuts(s.begin(), s.end());
    cuts.push_back(*std::max_element(s.begin(), s.end()) + 1.0);
    long best = 0;
    for (double t : cuts) best = std::max(best, ba_key(s, g, t));
    return best;
}

}  // namespace factens::testing
