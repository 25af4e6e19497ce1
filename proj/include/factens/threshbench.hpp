#pragma once

// Threshold-sensitivity study for continuous consistency scorers: how much
// balanced accuracy is lost when the decision threshold is not tuned on the
// test set itself.

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace factens {

struct ScoreRow {
    std::string example_id;
    std::string dataset;
    double score = 0;
    int gold = 0;
};

struct ScoreTable {
    std::string model_name;
    double lo = 0, hi = 1;
    bool invert = false;  // true when lower scores mean "more consistent"
    std::vector<ScoreRow> rows;

    // lo < hi and every score inside [lo, hi]. Throws PreconditionError.
    void validate() const;
    double oriented(double score) const { return invert ? lo + hi - score : score; }
    std::vector<std::string> datasets() const;
};

enum class ThresholdStrategy { OptimizeOnTest, OptimizeAtCenter, OptimizeOnTrain };
enum class TrainPooling { Pooled, Averaged };

std::string_view to_string(ThresholdStrategy s);
TrainPooling parse_train_pooling(std::string_view s);

struct ThresholdResult {
    double threshold = 0;
    double balanced_accuracy = 0;
};

// Balanced accuracy of the rule score >= threshold.
double threshold_balanced_accuracy(std::span<const double> scores, std::span<const int> gold, double threshold);

// Sweeps min - eps, midpoints of consecutive distinct scores, and max + eps;
// eps = 1e-9 * span, where span is (hi - lo) when given, else the score
// spread (or 1). Ties keep the smallest threshold. Throws SingleClassGold.
ThresholdResult optimal_threshold(std::span<const double> scores, std::span<const int> gold,
                                  std::optional<double> span = std::nullopt);

ThresholdResult evaluate_strategy(const ScoreTable& table, ThresholdStrategy strategy,
                                  const std::string& test_dataset, TrainPooling pooling = TrainPooling::Pooled);

struct DeltaRecord {
    std::string model;
    std::string dataset;
    ThresholdResult on_test, at_center, on_train;
    // bal_acc(OptimizeOnTest) - bal_acc(other)
    double delta_center = 0;
    double delta_train = 0;
};

DeltaRecord delta_report(const ScoreTable& table, const std::string& test_dataset,
                         TrainPooling pooling = TrainPooling::Pooled);

// Every dataset of every table, in model then dataset order.
std::vector<DeltaRecord> run_threshbench(std::span<const ScoreTable> tables, TrainPooling pooling);

struct ScoreRange {
    double lo = 0, hi = 1;
    bool invert = false;
};

// CSV model,example_id,dataset,score,label plus a YAML sidecar
//   models: { <name>: { lo: .., hi: .., invert: false } }
// Every model in the CSV must have a declared range.
std::vector<ScoreTable> load_score_tables(const std::filesystem::path& csv_path,
                                          const std::filesystem::path& ranges_path);
std::map<std::string, ScoreRange> load_score_ranges(const std::filesystem::path& ranges_path);

// model,dataset,strategy,threshold,balanced_accuracy,delta
void write_delta_csv(const std::filesystem::path& path, std::span<const DeltaRecord> records,
                     const std::string& comment = {});

}  // namespace factens
