#pragma once

// Prompt-subset selection by mRMR and recursive feature elimination.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "factens/ensemble.hpp"
#include "factens/featurize.hpp"

namespace factens {

enum class SelectionMethod { MRMR, RFE };

std::string_view to_string(SelectionMethod m);

struct SelectionResult {
    SelectionMethod method = SelectionMethod::MRMR;
    std::vector<std::string> prompt_ids;  // in selection order (RFE: original column order)
    double cv_balanced_accuracy = 0;      // set by best_subset
    std::size_t size = 0;
};

// Empirical mutual information (nats) of two binary vectors.
double mutual_information(std::span<const std::int8_t> x, std::span<const int> y);
// Pearson correlation; 0 when either side is constant.
double pearson(std::span<const std::int8_t> x, std::span<const std::int8_t> y);

// Greedy forward selection on relevance - mean |correlation| with the
// selected set. Needs a dense labelled matrix. Throws SizeExceedsColumns.
SelectionResult mrmr_select(const FeatureMatrix& m, std::size_t size);

// Repeatedly refits `base` and drops the column with the smallest |weight|;
// ties drop the earliest column. base must be LogisticRegression or
// WeightedMajorityVote.
SelectionResult rfe_select(const FeatureMatrix& m, std::size_t size,
                           EnsembleKind base = EnsembleKind::LogisticRegression, const Hyper& hyper = {});

struct BestSubsetOptions {
    std::size_t folds = 5;
    std::uint64_t seed = 0;
    EnsembleKind rfe_base = EnsembleKind::LogisticRegression;
    // Scored with this evaluator under stratified k-fold CV.
    EnsembleKind evaluator = EnsembleKind::LabelModel;
    Hyper evaluator_hyper = {{"supervised", 1}};
};

// Runs both selectors and keeps the higher cross-validated balanced accuracy;
// ties keep mRMR.
SelectionResult best_subset(const FeatureMatrix& m, std::size_t size, const BestSubsetOptions& options = {});

// Cross-validated balanced accuracy of one subset under `options`.
double subset_score(const FeatureMatrix& m, std::span<const std::string> prompt_ids,
                    const BestSubsetOptions& options);

nlohmann::json to_json(const SelectionResult& r);

}  // namespace factens
