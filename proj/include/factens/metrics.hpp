#pragma once

// Classification and calibration metrics, reliability-diagram data, and the
// paired bootstrap used for significance testing.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace factens {

// (TPR + TNR) / 2. Throws SingleClassGold.
double balanced_accuracy(std::span<const int> pred, std::span<const int> gold);

struct PrecisionRecall {
    double precision = 0;
    double recall = 0;
    bool precision_defined = true;  // false when nothing was predicted positive
    bool recall_defined = true;     // false when gold has no positives
};

PrecisionRecall precision_recall(std::span<const int> pred, std::span<const int> gold);

enum class ConfidenceMode {
    PositiveClass,  // confidence = P(consistent), accuracy = positive rate
    MaxClass,       // confidence = max(p, 1-p), accuracy = correctness of the argmax
};

struct ReliabilityBin {
    double lo = 0, hi = 0;
    std::size_t count = 0;
    double mean_confidence = 0;
    double empirical_accuracy = 0;
};

struct EceResult {
    double ece = 0;
    std::vector<ReliabilityBin> bins;           // all samples
    std::vector<ReliabilityBin> positive_bins;  // predicted label 1 (p >= 0.5)
    std::vector<ReliabilityBin> negative_bins;  // predicted label 0
};

inline constexpr std::size_t kDefaultEceBins = 8;

// Equal-width bins [(i-1)/M, i/M), the last closed at 1.
EceResult expected_calibration_error(std::span<const double> probs, std::span<const int> gold,
                                     std::size_t m_bins = kDefaultEceBins,
                                     ConfidenceMode mode = ConfidenceMode::PositiveClass);

enum class Sidedness { OneSided, TwoSided };

struct BootstrapOptions {
    std::size_t resamples = 10000;
    std::uint64_t seed = 0;
    std::size_t comparisons = 1;  // Bonferroni factor
    Sidedness sided = Sidedness::OneSided;
    std::size_t threads = 1;
};

struct BootstrapResult {
    double delta_observed = 0;
    double p_value = 1;
    double p_value_bonferroni = 1;
    std::size_t resamples = 0;
    std::uint64_t seed = 0;
    std::size_t comparisons = 1;
    std::size_t redraws = 0;  // resamples redrawn because gold came out single-class
};

double bonferroni(double p_value, std::size_t comparisons);

// Paired resampling of example indices. One-sided p = share of resamples with
// BA(a) - BA(b) <= 0. Resample r draws from derive_seed(seed, r), so results
// do not depend on thread count.
BootstrapResult bootstrap_compare(std::span<const int> pred_a, std::span<const int> pred_b,
                                  std::span<const int> gold, const BootstrapOptions& options = {});

// Normal-approximation 95% half-width: 1.96 * sqrt(v (1 - v) / n).
double binomial_ci95(double value, std::size_t n);

struct EvalReport {
    double balanced_accuracy = 0;
    double precision = 0;
    double recall = 0;
    bool precision_defined = true;
    double ece = 0;
    EceResult reliability;
    double ci95_balanced_accuracy = 0;
    std::size_t n = 0;
};

EvalReport evaluate_predictions(std::span<const double> probs, std::span<const int> gold,
                                std::size_t m_bins = kDefaultEceBins);

nlohmann::json to_json(const EvalReport& r);
nlohmann::json to_json(const BootstrapResult& r);

// Rows: bin_lo,bin_hi,split,count,conf,acc with split in {all,positive,negative}.
std::vector<std::vector<std::string>> reliability_rows(const EceResult& r);

}  // namespace factens
