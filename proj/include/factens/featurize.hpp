#pragma once

// Binary feature matrices: rows are examples, columns are prompts, cells are
// verdicts (0, 1, or Abstain).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "factens/corpus.hpp"
#include "factens/prompts.hpp"

namespace factens {

inline constexpr std::int8_t kAbstain = -1;

class FeatureMatrix {
public:
    FeatureMatrix() = default;
    // values is row-major, rows x cols. Throws PreconditionError on any
    // inconsistent shape, duplicate prompt id, or out-of-domain cell.
    FeatureMatrix(std::vector<std::string> example_ids, std::vector<std::string> prompt_ids,
                  std::vector<std::int8_t> values, std::optional<std::vector<int>> labels = std::nullopt);

    std::size_t rows() const { return example_ids_.size(); }
    std::size_t cols() const { return prompt_ids_.size(); }

    std::int8_t at(std::size_t row, std::size_t col) const { return values_[row * cols() + col]; }
    std::span<const std::int8_t> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

    const std::vector<std::string>& example_ids() const { return example_ids_; }
    const std::vector<std::string>& prompt_ids() const { return prompt_ids_; }
    const std::vector<std::int8_t>& values() const { return values_; }
    const std::optional<std::vector<int>>& labels() const { return labels_; }
    bool has_labels() const { return labels_.has_value(); }
    const std::vector<int>& require_labels() const;

    bool dense() const;
    int column_index(const std::string& prompt_id) const;

    FeatureMatrix without_labels() const;
    FeatureMatrix with_labels(std::vector<int> labels) const;
    FeatureMatrix take_rows(std::span<const std::size_t> indices) const;

    friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

private:
    std::vector<std::string> example_ids_;
    std::vector<std::string> prompt_ids_;
    std::vector<std::int8_t> values_;
    std::optional<std::vector<int>> labels_;
};

// Missing cells become Abstain.
FeatureMatrix build_matrix(std::span<const Verdict> verdicts, std::span<const LabeledExample> examples,
                           std::span<const std::string> prompt_ids);
FeatureMatrix build_matrix(std::span<const Verdict> verdicts, std::span<const LabeledExample> examples,
                           std::span<const PromptSpec> pool);

struct Cell {
    std::string example_id;
    std::string prompt_id;
    std::int8_t value;
    friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Every cell, row-major.
std::vector<Cell> flatten(const FeatureMatrix& m);

enum class ImputePolicy { AbstainAsInconsistent, AbstainAsColumnMajority };

ImputePolicy parse_impute_policy(std::string_view s);

// Column majority ties resolve to 0.
FeatureMatrix impute(const FeatureMatrix& m, ImputePolicy policy);

// Columns restricted and reordered to `prompt_ids`.
FeatureMatrix select_columns(const FeatureMatrix& m, std::span<const std::string> prompt_ids);

// Row-wise concatenation; column ids must match exactly.
FeatureMatrix vstack(std::span<const FeatureMatrix> parts);

// CSV: example_id,label,<prompt ids...>; Abstain and missing labels are empty
// cells. `comment`, when non-empty, is written as a leading '#' line.
void write_matrix_csv(const std::filesystem::path& path, const FeatureMatrix& m, const std::string& comment = {});
FeatureMatrix read_matrix_csv(const std::filesystem::path& path);

}  // namespace factens
