#include "factens/corpus.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factens/csv.hpp"
#include "factens/error.hpp"
#include "factens/rng.hpp"

namespace factens {

namespace {

constexpr std::array<std::pair<DatasetKind, std::string_view>, 4> kBenchmarkNames{{
    {DatasetKind::AggreFactXsumFtsota, "AggreFactXsumFtsota"},
    {DatasetKind::HaluEvalSumm, "HaluEvalSumm"},
    {DatasetKind::TofuEvalMediaSum, "TofuEvalMediaSum"},
    {DatasetKind::TofuEvalMeetingBank, "TofuEvalMeetingBank"},
}};

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

struct RowFields {
    std::string id;
    std::string document;
    std::string summary;
    int label = 0;
    Split split;
    bool keep = true;
};

int parse_label_text(std::string_view text, std::size_t row) {
    if (text == "0") return 0;
    if (text == "1") return 1;
    throw SchemaError(row, "label", "expected 0 or 1");
}

RowFields parse_json_row(const std::string& line, std::size_t row, Split default_split) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError(row, "<json>", e.what());
    }
    if (!j.is_object()) throw SchemaError(row, "<json>", "row is not an object");

    auto require_string = [&](const char* field) -> std::string {
        auto it = j.find(field);
        if (it == j.end()) throw SchemaError(row, field, "missing");
        if (!it->is_string()) throw SchemaError(row, field, "expected string");
        auto value = it->get<std::string>();
        if (value.empty()) throw SchemaError(row, field, "empty");
        return value;
    };
    auto read_flag = [&](const nlohmann::json& v, const char* field) -> int {
        if (v.is_boolean()) return v.get<bool>() ? 1 : 0;
        if (v.is_number_integer()) {
            const auto x = v.get<long long>();
            if (x == 0 || x == 1) return static_cast<int>(x);
        }
        throw SchemaError(row, field, "expected 0 or 1");
    };

    RowFields r;
    r.split = default_split;
    r.id = require_string("id");
    r.document = require_string("document");

    if (auto it = j.find("sentences"); it != j.end()) {
        if (!it->is_array()) throw SchemaError(row, "sentences", "expected array");
        SentenceAnnotatedSummary s{r.id, {}};
        for (const auto& item : *it) {
            if (!item.is_object() || !item.contains("text") || !item["text"].is_string())
                throw SchemaError(row, "sentences", "each sentence needs a string 'text'");
            if (!item.contains("flag")) throw SchemaError(row, "sentences", "sentence missing 'flag'");
            s.sentences.push_back({item["text"].get<std::string>(), read_flag(item["flag"], "sentences")});
        }
        if (s.sentences.empty()) throw SchemaError(row, "sentences", "empty sentence list");
        auto merged = merge_tofueval_sentences(s);
        if (merged.summary.empty()) throw SchemaError(row, "sentences", "empty merged summary");
        r.summary = std::move(merged.summary);
        r.label = merged.label;
    } else {
        r.summary = require_string("summary");
        auto it_label = j.find("label");
        if (it_label == j.end()) throw SchemaError(row, "label", "missing");
        r.label = read_flag(*it_label, "label");
    }

    if (auto it = j.find("topic"); it != j.end() && it->is_string()) {
        r.keep = lower(it->get<std::string>()) != "marginal";
    }
    if (auto it = j.find("split"); it != j.end()) {
        if (!it->is_string()) throw SchemaError(row, "split", "expected string");
        try {
            r.split = parse_split(it->get<std::string>());
        } catch (const Error&) {
            throw SchemaError(row, "split", "unknown split");
        }
    }
    return r;
}

std::vector<RowFields> read_jsonl(const std::filesystem::path& path, Split split) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path.string(), "cannot open");
    std::vector<RowFields> rows;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        rows.push_back(parse_json_row(line, row, split));
    }
    return rows;
}

std::vector<RowFields> read_csv(const std::filesystem::path& path, Split split) {
    csv::Table t;
    try {
        t = csv::read_table(path, /*skip_comments=*/false);
    } catch (const IoError&) {
        throw;
    } catch (const Error& e) {
        throw SchemaError(0, "<csv>", e.what());
    }
    std::vector<RowFields> rows;
    if (t.header.empty()) return rows;
    const int c_id = t.column("id"), c_doc = t.column("document"), c_sum = t.column("summary"),
              c_label = t.column("label"), c_topic = t.column("topic"), c_split = t.column("split");
    for (auto [c, name] : {std::pair{c_id, "id"}, {c_doc, "document"}, {c_sum, "summary"}, {c_label, "label"}}) {
        if (c < 0) throw SchemaError(0, name, "missing header column");
    }
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const std::size_t row = i + 1;
        const auto& rec = t.rows[i];
        if (rec.size() != t.header.size())
            throw SchemaError(row, "<columns>", "expected " + std::to_string(t.header.size()) + " fields");
        RowFields r;
        r.split = split;
        r.id = rec[c_id];
        r.document = rec[c_doc];
        r.summary = rec[c_sum];
        if (r.id.empty()) throw SchemaError(row, "id", "empty");
        if (r.document.empty()) throw SchemaError(row, "document", "empty");
        if (r.summary.empty()) throw SchemaError(row, "summary", "empty");
        if (rec[c_label].empty()) throw SchemaError(row, "label", "missing");
        r.label = parse_label_text(rec[c_label], row);
        if (c_topic >= 0) r.keep = lower(rec[c_topic]) != "marginal";
        if (c_split >= 0 && !rec[c_split].empty()) {
            try {
                r.split = parse_split(rec[c_split]);
            } catch (const Error&) {
                throw SchemaError(row, "split", "unknown split");
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

DatasetId DatasetId::parse(std::string_view name) {
    for (const auto& [kind, n] : kBenchmarkNames) {
        if (n == name) return {kind, {}};
    }
    return custom(std::string(name));
}

std::string DatasetId::name() const {
    for (const auto& [k, n] : kBenchmarkNames) {
        if (k == kind) return std::string(n);
    }
    return custom_name;
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Dev: return "dev";
        case Split::Test: return "test";
    }
    return "test";
}

Split parse_split(std::string_view s) {
    const auto l = lower(s);
    if (l == "train") return Split::Train;
    if (l == "dev" || l == "val" || l == "validation") return Split::Dev;
    if (l == "test") return Split::Test;
    throw Error("unknown split: " + std::string(s));
}

DataFormat parse_format(std::string_view s) {
    const auto l = lower(s);
    if (l == "jsonl" || l == "jsonlines" || l == "json-lines") return DataFormat::JsonLines;
    if (l == "csv") return DataFormat::Csv;
    throw Error("unknown data format: " + std::string(s));
}

std::vector<LabeledExample> load_dataset(const std::filesystem::path& path, DataFormat format,
                                         const DatasetId& dataset, Split split) {
    if (!std::filesystem::exists(path)) throw IoError(path.string(), "no such file");
    auto rows = format == DataFormat::JsonLines ? read_jsonl(path, split) : read_csv(path, split);

    std::vector<LabeledExample> out;
    out.reserve(rows.size());
    std::set<std::string> seen;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        auto& r = rows[i];
        if (!seen.insert(r.id).second) throw SchemaError(i + 1, "id", "duplicate id '" + r.id + "'");
        if (!r.keep) continue;
        out.push_back({std::move(r.id), dataset, std::move(r.document), std::move(r.summary), r.label, r.split});
    }
    return out;
}

MergedSummary merge_tofueval_sentences(const SentenceAnnotatedSummary& s) {
    if (s.sentences.empty()) throw EmptySummary();
    MergedSummary m;
    m.label = 1;
    for (std::size_t i = 0; i < s.sentences.size(); ++i) {
        if (i) m.summary.push_back(' ');
        m.summary += s.sentences[i].text;
        if (s.sentences[i].flag != 1) m.label = 0;
    }
    return m;
}

std::vector<LabeledExample> balanced_sample(const std::vector<LabeledExample>& examples,
                                            std::size_t n_total, std::uint64_t seed) {
    if (n_total % 2 != 0) throw PreconditionError("balanced_sample: n_total must be even");
    const std::size_t need = n_total / 2;
    std::array<std::vector<std::size_t>, 2> by_label;
    for (std::size_t i = 0; i < examples.size(); ++i) by_label[examples[i].label == 1 ? 1 : 0].push_back(i);
    for (int label : {0, 1}) {
        if (by_label[label].size() < need) throw InsufficientClassCount(label, by_label[label].size(), need);
    }

    Rng rng(seed);
    std::vector<std::size_t> picked;
    picked.reserve(n_total);
    for (int label : {0, 1}) {
        auto& pool = by_label[label];
        // Partial Fisher-Yates: the first `need` slots become the sample.
        for (std::size_t i = 0; i < need; ++i) {
            const auto j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
            std::swap(pool[i], pool[j]);
            picked.push_back(pool[i]);
        }
    }
    rng.shuffle(std::span(picked));

    std::vector<LabeledExample> out;
    out.reserve(n_total);
    for (auto i : picked) out.push_back(examples[i]);
    return out;
}

TrainTestSplit leave_one_out_split(const DatasetMap& all, const DatasetId& held_out) {
    auto it = all.find(held_out);
    if (it == all.end()) throw UnknownDataset(held_out.name());
    TrainTestSplit s;
    s.test = it->second;
    for (const auto& [id, examples] : all) {
        if (id == held_out) continue;
        s.train.insert(s.train.end(), examples.begin(), examples.end());
    }
    return s;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<LabeledExample>& examples) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    for (const auto& e : examples) {
        nlohmann::ordered_json j;
        j["id"] = e.id;
        j["dataset"] = e.dataset.name();
        j["document"] = e.document;
        j["summary"] = e.summary;
        j["label"] = e.label;
        j["split"] = std::string(to_string(e.split));
        out << j.dump() << '\n';
    }
}

}  // namespace factens
