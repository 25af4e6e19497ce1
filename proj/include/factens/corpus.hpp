#pragma once

// Benchmark ingestion: a uniform (document, summary, label) record for every
// source, plus the sampling and leave-one-dataset-out splitting the
// evaluation protocol needs.

#include <compare>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace factens {

enum class DatasetKind {
    AggreFactXsumFtsota,
    HaluEvalSumm,
    TofuEvalMediaSum,
    TofuEvalMeetingBank,
    Custom,
};

// A dataset identity. Custom datasets carry their own name; the four
// benchmarks are named by their kind.
struct DatasetId {
    DatasetKind kind = DatasetKind::Custom;
    std::string custom_name;

    static DatasetId custom(std::string name) { return {DatasetKind::Custom, std::move(name)}; }
    // Accepts the canonical benchmark names; anything else becomes Custom.
    static DatasetId parse(std::string_view name);

    std::string name() const;

    friend bool operator==(const DatasetId& a, const DatasetId& b) { return a.name() == b.name(); }
    friend auto operator<=>(const DatasetId& a, const DatasetId& b) { return a.name() <=> b.name(); }
};

enum class Split { Train, Dev, Test };

std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct LabeledExample {
    std::string id;
    DatasetId dataset;
    std::string document;
    std::string summary;
    int label = 0;  // 1 = factually consistent
    Split split = Split::Test;
};

struct AnnotatedSentence {
    std::string text;
    int flag = 1;
};

struct SentenceAnnotatedSummary {
    std::string summary_id;
    std::vector<AnnotatedSentence> sentences;
};

struct MergedSummary {
    std::string summary;
    int label = 0;
};

enum class DataFormat { JsonLines, Csv };

DataFormat parse_format(std::string_view s);

// Rows are numbered from 1 in file order (header excluded for CSV). Rows
// tagged `"topic": "marginal"` are dropped; only main-topic summaries are kept.
std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, DataFormat format,
                                         const DatasetId& dataset, Split split = Split::Test);

// Joins sentences with one space; consistent only if every sentence is.
MergedSummary merge_tofueval_sentences(const SentenceAnnotatedSummary& s);

// Exactly n_total/2 examples per label, drawn without replacement.
std::vector<LabeledExample> balanced_sample(const std::vector<LabeledExample>& examples,
                                            std::size_t n_total, std::uint64_t seed);

using DatasetMap = std::map<DatasetId, std::vector<LabeledExample>>;

struct TrainTestSplit {
    std::vector<LabeledExample> train;
    std::vector<LabeledExample> test;
};

TrainTestSplit leave_one_out_split(const DatasetMap& all, const DatasetId& held_out);

// Normalized JSON-lines form written by `ingest`.
void write_jsonl(const std::filesystem::path& path, const std::vector<LabeledExample>& examples);

}  // namespace factens
