#include "factens/featurize.hpp"

#include <fstream>
#include <map>
#include <set>
#include <unordered_map>

#include "factens/csv.hpp"
#include "factens/error.hpp"

namespace factens {

FeatureMatrix::FeatureMatrix(std::vector<std::string> example_ids, std::vector<std::string> prompt_ids,
                             std::vector<std::int8_t> values, std::optional<std::vector<int>> labels)
    : example_ids_(std::move(example_ids)),
      prompt_ids_(std::move(prompt_ids)),
      values_(std::move(values)),
      labels_(std::move(labels)) {
    if (values_.size() != example_ids_.size() * prompt_ids_.size())
        throw PreconditionError("feature matrix: value count does not match rows x cols");
    if (labels_ && labels_->size() != example_ids_.size())
        throw PreconditionError("feature matrix: label count does not match rows");
    std::set<std::string> seen(prompt_ids_.begin(), prompt_ids_.end());
    if (seen.size() != prompt_ids_.size()) throw PreconditionError("feature matrix: duplicate prompt id");
    for (auto v : values_) {
        if (v != 0 && v != 1 && v != kAbstain) throw PreconditionError("feature matrix: cell outside {0,1,Abstain}");
    }
    if (labels_) {
        for (int l : *labels_) {
            if (l != 0 && l != 1) throw PreconditionError("feature matrix: label outside {0,1}");
        }
    }
}

const std::vector<int>& FeatureMatrix::require_labels() const {
    if (!labels_) throw PreconditionError("feature matrix has no labels");
    return *labels_;
}

bool FeatureMatrix::dense() const {
    for (auto v : values_) {
        if (v == kAbstain) return false;
    }
    return true;
}

int FeatureMatrix::column_index(const std::string& prompt_id) const {
    for (std::size_t j = 0; j < prompt_ids_.size(); ++j) {
        if (prompt_ids_[j] == prompt_id) return static_cast<int>(j);
    }
    return -1;
}

FeatureMatrix FeatureMatrix::without_labels() const { return {example_ids_, prompt_ids_, values_, std::nullopt}; }

FeatureMatrix FeatureMatrix::with_labels(std::vector<int> labels) const {
    return {example_ids_, prompt_ids_, values_, std::move(labels)};
}

FeatureMatrix FeatureMatrix::take_rows(std::span<const std::size_t> indices) const {
    std::vector<std::string> ids;
    std::vector<std::int8_t> vals;
    std::optional<std::vector<int>> labs;
    ids.reserve(indices.size());
    vals.reserve(indices.size() * cols());
    if (labels_) labs.emplace();
    for (auto i : indices) {
        if (i >= rows()) throw PreconditionError("take_rows: index out of range");
        ids.push_back(example_ids_[i]);
        auto r = row(i);
        vals.insert(vals.end(), r.begin(), r.end());
        if (labels_) labs->push_back((*labels_)[i]);
    }
    return {std::move(ids), prompt_ids_, std::move(vals), std::move(labs)};
}

FeatureMatrix build_matrix(std::span<const Verdict> verdicts, std::span<const LabeledExample> examples,
                           std::span<const std::string> prompt_ids) {
    std::unordered_map<std::string, std::size_t> row_of, col_of;
    for (std::size_t i = 0; i < examples.size(); ++i) {
        if (!row_of.emplace(examples[i].id, i).second)
            throw PreconditionError("build_matrix: duplicate example id " + examples[i].id);
    }
    for (std::size_t j = 0; j < prompt_ids.size(); ++j) col_of.emplace(prompt_ids[j], j);

    const std::size_t cols = prompt_ids.size();
    std::vector<std::int8_t> values(examples.size() * cols, kAbstain);
    std::vector<bool> filled(values.size(), false);
    for (const auto& v : verdicts) {
        auto r = row_of.find(v.example_id);
        if (r == row_of.end()) throw PreconditionError("build_matrix: verdict for unknown example " + v.example_id);
        auto c = col_of.find(v.prompt_id);
        if (c == col_of.end()) throw UnknownPrompt(v.prompt_id);
        const auto cell = r->second * cols + c->second;
        if (filled[cell]) throw DuplicateVerdict(v.example_id, v.prompt_id);
        filled[cell] = true;
        values[cell] = static_cast<std::int8_t>(v.value);
    }

    std::vector<std::string> ids;
    std::vector<int> labels;
    for (const auto& e : examples) {
        ids.push_back(e.id);
        labels.push_back(e.label);
    }
    return {std::move(ids), std::vector<std::string>(prompt_ids.begin(), prompt_ids.end()), std::move(values),
            std::move(labels)};
}

FeatureMatrix build_matrix(std::span<const Verdict> verdicts, std::span<const LabeledExample> examples,
                           std::span<const PromptSpec> pool) {
    std::vector<std::string> ids;
    for (const auto& p : pool) ids.push_back(p.prompt_id);
    return build_matrix(verdicts, examples, ids);
}

std::vector<Cell> flatten(const FeatureMatrix& m) {
    std::vector<Cell> out;
    out.reserve(m.values().size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) out.push_back({m.example_ids()[i], m.prompt_ids()[j], m.at(i, j)});
    }
    return out;
}

ImputePolicy parse_impute_policy(std::string_view s) {
    if (s == "inconsistent" || s == "AbstainAsInconsistent") return ImputePolicy::AbstainAsInconsistent;
    if (s == "column_majority" || s == "AbstainAsColumnMajority") return ImputePolicy::AbstainAsColumnMajority;
    throw ConfigError("unknown impute policy: " + std::string(s));
}

FeatureMatrix impute(const FeatureMatrix& m, ImputePolicy policy) {
    std::vector<std::int8_t> fill(m.cols(), 0);
    if (policy == ImputePolicy::AbstainAsColumnMajority) {
        for (std::size_t j = 0; j < m.cols(); ++j) {
            std::size_t ones = 0, zeros = 0;
            for (std::size_t i = 0; i < m.rows(); ++i) {
                const auto v = m.at(i, j);
                if (v == 1) ++ones;
                if (v == 0) ++zeros;
            }
            if (ones + zeros == 0) throw AllAbstainColumn(m.prompt_ids()[j]);
            fill[j] = ones > zeros ? 1 : 0;
        }
    }
    auto values = m.values();
    for (std::size_t k = 0; k < values.size(); ++k) {
        if (values[k] == kAbstain) values[k] = fill[k % m.cols()];
    }
    return {m.example_ids(), m.prompt_ids(), std::move(values), m.labels()};
}

FeatureMatrix select_columns(const FeatureMatrix& m, std::span<const std::string> prompt_ids) {
    std::vector<std::size_t> src;
    src.reserve(prompt_ids.size());
    for (const auto& id : prompt_ids) {
        const int j = m.column_index(id);
        if (j < 0) throw UnknownPrompt(id);
        src.push_back(static_cast<std::size_t>(j));
    }
    std::vector<std::int8_t> values;
    values.reserve(m.rows() * src.size());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (auto j : src) values.push_back(m.at(i, j));
    }
    return {m.example_ids(), std::vector<std::string>(prompt_ids.begin(), prompt_ids.end()), std::move(values),
            m.labels()};
}

FeatureMatrix vstack(std::span<const FeatureMatrix> parts) {
    if (parts.empty()) return {};
    const auto& cols = parts.front().prompt_ids();
    const bool labelled = parts.front().has_labels();
    std::vector<std::string> ids;
    std::vector<std::int8_t> values;
    std::vector<int> labels;
    for (const auto& p : parts) {
        if (p.prompt_ids() != cols) throw ColumnMismatch("vstack: column ids differ");
        if (p.has_labels() != labelled) throw PreconditionError("vstack: mixed labelled and unlabelled parts");
        ids.insert(ids.end(), p.example_ids().begin(), p.example_ids().end());
        values.insert(values.end(), p.values().begin(), p.values().end());
        if (labelled) labels.insert(labels.end(), p.labels()->begin(), p.labels()->end());
    }
    return {std::move(ids), cols, std::move(values),
            labelled ? std::optional<std::vector<int>>(std::move(labels)) : std::nullopt};
}

void write_matrix_csv(const std::filesystem::path& path, const FeatureMatrix& m, const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    if (!comment.empty()) out << "# " << comment << '\n';
    csv::Record header{"example_id", "label"};
    header.insert(header.end(), m.prompt_ids().begin(), m.prompt_ids().end());
    csv::write_record(out, header);
    for (std::size_t i = 0; i < m.rows(); ++i) {
        csv::Record rec{m.example_ids()[i], m.has_labels() ? std::to_string((*m.labels())[i]) : std::string{}};
        for (auto v : m.row(i)) rec.push_back(v == kAbstain ? std::string{} : std::to_string(v));
        csv::write_record(out, rec);
    }
}

FeatureMatrix read_matrix_csv(const std::filesystem::path& path) {
    const auto t = csv::read_table(path);
    if (t.header.size() < 2 || t.header[0] != "example_id" || t.header[1] != "label")
        throw SchemaError(0, "<header>", "expected example_id,label,<prompt ids...>");
    std::vector<std::string> prompt_ids(t.header.begin() + 2, t.header.end());
    std::vector<std::string> ids;
    std::vector<std::int8_t> values;
    std::vector<int> labels;
    bool any_label = false, any_missing = false;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& rec = t.rows[r];
        if (rec.size() != t.header.size()) throw SchemaError(r + 1, "<columns>", "wrong field count");
        ids.push_back(rec[0]);
        if (rec[1].empty()) {
            any_missing = true;
            labels.push_back(0);
        } else if (rec[1] == "0" || rec[1] == "1") {
            any_label = true;
            labels.push_back(rec[1] == "1");
        } else {
            throw SchemaError(r + 1, "label", "expected 0, 1 or empty");
        }
        for (std::size_t c = 2; c < rec.size(); ++c) {
            const auto& cell = rec[c];
            if (cell.empty()) values.push_back(kAbstain);
            else if (cell == "0" || cell == "1") values.push_back(static_cast<std::int8_t>(cell == "1"));
            else throw SchemaError(r + 1, t.header[c], "expected 0, 1 or empty");
        }
    }
    if (any_label && any_missing) throw SchemaError(0, "label", "labels present on some rows only");
    return {std::move(ids), std::move(prompt_ids), std::move(values),
            any_label ? std::optional<std::vector<int>>(std::move(labels)) : std::nullopt};
}

}  // namespace factens
