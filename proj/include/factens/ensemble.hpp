#pragma once

// Aggregators over binary prompt verdicts. Every kind emits P(consistent) per
// row; labels follow p >= 0.5.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "factens/featurize.hpp"

namespace factens {

enum class EnsembleKind {
    MajorityVote,
    WeightedMajorityVote,
    DawidSkene,
    LabelModel,
    LogisticRegression,
    BernoulliNaiveBayes,
    KNearest,
    DecisionTree,
};

inline constexpr EnsembleKind kAllEnsembleKinds[] = {
    EnsembleKind::MajorityVote,       EnsembleKind::WeightedMajorityVote, EnsembleKind::DawidSkene,
    EnsembleKind::LabelModel,         EnsembleKind::LogisticRegression,   EnsembleKind::BernoulliNaiveBayes,
    EnsembleKind::KNearest,           EnsembleKind::DecisionTree,
};

std::string_view to_string(EnsembleKind k);
EnsembleKind parse_ensemble_kind(std::string_view s);

// Kinds that cannot handle Abstain cells; they need imputed input at fit.
bool needs_dense(EnsembleKind k);

using Hyper = std::map<std::string, double>;
// Grid points are the cartesian product of the value lists, in map order.
using Grid = std::map<std::string, std::vector<double>>;

Hyper default_hyper(EnsembleKind k);
Grid default_grid(EnsembleKind k);
std::vector<Hyper> expand_grid(const Grid& grid);

struct FitDiagnostics {
    int iterations = 0;
    double final_delta = 0;
    bool converged = true;
    double log_likelihood = 0;
    // EM kinds: one entry per iteration. `objective` includes the smoothing
    // priors and is the quantity EM is guaranteed to increase.
    std::vector<double> log_likelihood_trace;
    std::vector<double> objective_trace;
};

struct TreeNode {
    int feature = -1;  // -1 for leaves
    int left = -1;     // child for feature value 0
    int right = -1;    // child for feature value 1
    double p = 0.5;
    std::size_t n = 0;
};

struct EnsembleModel {
    EnsembleKind kind = EnsembleKind::MajorityVote;
    Hyper hyper;
    std::vector<std::string> columns;
    // Column-majority fill used by dense kinds for Abstain cells at predict.
    std::vector<std::int8_t> fill;

    // WeightedMajorityVote: vote weights. LogisticRegression: coefficients
    // on the signed encoding 2x - 1, with `bias` as the intercept.
    std::vector<double> weights;
    double bias = 0;

    // DawidSkene / LabelModel: P(vote 1 | y=1), P(vote 0 | y=0), P(vote
    // present). BernoulliNaiveBayes reuses sensitivity = P(x=1 | y=1) and
    // specificity = P(x=0 | y=0).
    std::vector<double> sensitivity;
    std::vector<double> specificity;
    std::vector<double> propensity;
    double prior = 0.5;

    // KNearest
    std::vector<std::int8_t> store;
    std::vector<int> store_labels;

    // DecisionTree, root at index 0.
    std::vector<TreeNode> tree;

    FitDiagnostics diagnostics;
};

struct Prediction {
    std::string example_id;
    double p_consistent = 0.5;
    int label = 1;
};

// Hyperparameters missing from `hyper` take their defaults. Throws
// DegenerateTrainingSet when a trainable kind sees one class.
EnsembleModel fit(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m);

// Columns are matched by id. Throws ColumnMismatch.
std::vector<Prediction> predict(const EnsembleModel& model, const FeatureMatrix& m);
std::vector<double> predict_proba(const EnsembleModel& model, const FeatureMatrix& m);

// Stratified fold index per row: each class is shuffled with `seed` and dealt
// round-robin.
std::vector<std::size_t> stratified_folds(std::span<const int> labels, std::size_t folds, std::uint64_t seed);

// Out-of-fold probabilities. A fold whose training part fails to fit throws.
std::vector<double> cross_val_predict(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m,
                                      std::span<const std::size_t> fold_of, std::size_t folds,
                                      std::size_t threads = 1);

// Balanced accuracy of pooled out-of-fold labels.
double cross_val_balanced_accuracy(EnsembleKind kind, const Hyper& hyper, const FeatureMatrix& m,
                                   std::span<const std::size_t> fold_of, std::size_t folds,
                                   std::size_t threads = 1);

struct GridSearchResult {
    Hyper best;
    double best_score = 0;
    std::vector<Hyper> points;
    std::vector<double> scores;  // 0 for points whose fit failed
    std::vector<std::size_t> fold_of;
    std::uint64_t seed = 0;
};

GridSearchResult grid_search(EnsembleKind kind, const Grid& grid, const FeatureMatrix& train, std::size_t folds,
                             std::uint64_t seed, std::size_t threads = 1);

inline constexpr int kModelFormatVersion = 1;

nlohmann::json to_json(const EnsembleModel& model);
EnsembleModel model_from_json(const nlohmann::json& j);

}  // namespace factens
