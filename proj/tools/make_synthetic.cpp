// Writes the synthetic end-to-end fixture: four small datasets, a replay
// cache of LLM responses for the shipped nine-prompt pool, continuous score
// tables for the threshold study, and a run config.
//
//   make_synthetic <prompts/pool.yaml> <output dir>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "factens/csv.hpp"
#include "factens/format.hpp"
#include "factens/llm.hpp"
#include "factens/prompts.hpp"
#include "factens/rng.hpp"

using namespace factens;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20240101;
constexpr const char* kStamp = "2024-01-01T00:00:00Z";

struct Row {
    std::string id;
    std::string document;
    std::vector<std::pair<std::string, int>> sentences;  // summary sentences with flags
    int label = 0;
    bool marginal = false;

    std::string summary() const {
        std::string s;
        for (const auto& [t, f] : sentences) s += (s.empty() ? "" : " ") + t;
        return s;
    }
};

const std::vector<std::string> kSubjects{"The council", "A local bakery", "The river authority", "Two researchers",
                                         "The school board", "A regional airline", "The museum", "City engineers"};
const std::vector<std::string> kVerbs{"approved", "postponed", "announced", "rejected", "funded", "reviewed"};
const std::vector<std::string> kObjects{"a new bridge", "the harvest festival", "a flood barrier", "extended hours",
                                        "a solar project", "the budget", "a bus route", "a library wing"};

std::string pick(Rng& rng, const std::vector<std::string>& v) { return v[rng.index(v.size())]; }

// A document of three facts; consistent summaries restate them, inconsistent
// ones change a number or a verb in one sentence.
Row make_row(Rng& rng, const std::string& prefix, std::size_t i, int label, std::size_t n_sentences) {
    Row r;
    r.id = prefix + "-" + std::to_string(i);
    r.label = label;
    std::vector<std::string> facts;
    for (std::size_t k = 0; k < n_sentences; ++k) {
        const auto subj = pick(rng, kSubjects);
        const auto verb = pick(rng, kVerbs);
        const auto obj = pick(rng, kObjects);
        const auto n = 2 + rng.index(40);
        facts.push_back(subj + " " + verb + " " + obj + " after " + std::to_string(n) + " days of debate.");
    }
    for (const auto& f : facts) r.document += (r.document.empty() ? "" : " ") + f;
    const std::size_t wrong = label ? n_sentences : rng.index(n_sentences);
    for (std::size_t k = 0; k < n_sentences; ++k) {
        std::string s = facts[k];
        if (k == wrong) {
            const auto pos = s.find(" after ");
            s = s.substr(0, pos) + " after " + std::to_string(50 + rng.index(40)) + " days of debate.";
        }
        r.sentences.push_back({s, k == wrong ? 0 : 1});
    }
    return r;
}

std::vector<Row> make_dataset(Rng& rng, const std::string& prefix, std::size_t pos, std::size_t neg,
                              std::size_t marginal, std::size_t n_sentences) {
    std::vector<Row> rows;
    const std::size_t total = pos + neg;
    std::vector<int> labels;
    for (std::size_t i = 0; i < total; ++i) labels.push_back(i < pos ? 1 : 0);
    rng.shuffle(std::span<int>(labels));
    for (std::size_t i = 0; i < total; ++i) rows.push_back(make_row(rng, prefix, i, labels[i], n_sentences));
    for (std::size_t i = 0; i < marginal; ++i) {
        auto r = make_row(rng, prefix + "-m", i, static_cast<int>(rng.index(2)), n_sentences);
        r.marginal = true;
        rows.push_back(std::move(r));
    }
    return rows;
}

// Per-prompt sensitivity and specificity; each dataset shifts them.
struct Quality {
    double sens, spec;
};

const std::vector<Quality> kPromptQuality{
    {0.78, 0.70}, {0.84, 0.76}, {0.72, 0.74}, {0.80, 0.78}, {0.66, 0.80},
    {0.74, 0.84}, {0.88, 0.52}, {0.70, 0.62}, {0.76, 0.64},
};

std::string response_text(const PromptSpec& p, bool positive, Rng& rng) {
    const auto& pos = p.parser.positive_markers.front();
    const auto& neg = p.parser.negative_markers.front();
    static const std::vector<std::string> lead{"Step 1: I read the claim. Step 2: I compared it with the source. ",
                                               "Comparing each key point with the article. ",
                                               "Let me check the facts one by one. ", ""};
    const std::string l = lead[rng.index(lead.size())];
    if (pos == "SUPPORTED") return l + "Final answer: " + (positive ? pos : neg);
    if (pos == "yes") return l + (positive ? "Yes, the summary is consistent." : "No, there is an error in the summary.");
    return l + "The text is " + (positive ? pos : neg) + ".";
}

void write_lines(const fs::path& path, const std::vector<std::string>& lines) {
    std::ofstream out(path, std::ios::binary);
    for (const auto& l : lines) out << l << '\n';
}

}  // namespace

int main(int argc, char** argv) {
    if (argc != 3) {
        std::cerr << "usage: make_synthetic <pool.yaml> <output dir>\n";
        return 2;
    }
    const fs::path pool_file = argv[1];
    const fs::path out = argv[2];
    fs::create_directories(out);
    const auto pool = load_pool(pool_file);
    if (pool.size() != kPromptQuality.size()) {
        std::cerr << "expected a pool of " << kPromptQuality.size() << " prompts\n";
        return 2;
    }

    Rng rng(kSeed);
    struct Spec {
        std::string name, file, prefix;
        std::size_t pos, neg, marginal, sentences;
        bool tofu, csv;
        double shift;  // added to every prompt's sensitivity, subtracted from specificity
    };
    const std::vector<Spec> specs{
        {"AggreFactXsumFtsota", "aggrefact.csv", "agg", 60, 90, 0, 1, false, true, -0.04},
        {"HaluEvalSumm", "halueval.jsonl", "halu", 110, 90, 0, 2, false, false, 0.02},
        {"TofuEvalMediaSum", "tofueval_mediasum.jsonl", "tmed", 85, 65, 12, 3, true, false, 0.06},
        {"TofuEvalMeetingBank", "tofueval_meetingbank.jsonl", "tmb", 95, 55, 9, 3, true, false, -0.02},
    };

    std::vector<std::string> cache_lines;
    auto add_cache = [&](const PromptSpec& p, const std::string& rendered, int attempt, const std::string& response) {
        nlohmann::ordered_json j;
        j["key"] = cache_key(p, rendered, attempt);
        j["model"] = p.model_id;
        j["prompt_id"] = p.prompt_id;
        j["response"] = response;
        j["ts"] = kStamp;
        cache_lines.push_back(j.dump());
    };

    csv::Record score_header{"model", "example_id", "dataset", "score", "label"};
    std::vector<csv::Record> score_rows;
    struct Scorer {
        std::string name;
        double lo, hi, base, gain, noise;
        std::map<std::string, double> dataset_shift;
    };
    const std::vector<Scorer> scorers{
        {"QAFactEval", 0, 5, 1.6, 1.5, 0.9, {{"agg", -0.6}, {"halu", 0.5}, {"tmed", 0.2}, {"tmb", -0.3}}},
        {"SummaC-ZS", -1, 1, -0.15, 0.45, 0.35, {{"agg", -0.25}, {"halu", 0.2}, {"tmed", 0.1}, {"tmb", 0.0}}},
        {"AlignScore", 0, 1, 0.35, 0.3, 0.18, {{"agg", -0.1}, {"halu", 0.15}, {"tmed", 0.05}, {"tmb", -0.05}}},
    };

    for (const auto& s : specs) {
        const auto rows = make_dataset(rng, s.prefix, s.pos, s.neg, s.marginal, s.sentences);
        std::vector<std::string> lines;
        if (s.csv) {
            std::ofstream f(out / s.file, std::ios::binary);
            csv::write_record(f, {"id", "document", "summary", "label"});
            for (const auto& r : rows) csv::write_record(f, {r.id, r.document, r.summary(), std::to_string(r.label)});
        } else {
            for (const auto& r : rows) {
                nlohmann::ordered_json j;
                j["id"] = r.id;
                j["document"] = r.document;
                if (s.tofu) {
                    j["topic"] = r.marginal ? "marginal" : "main";
                    j["sentences"] = nlohmann::json::array();
                    for (const auto& [t, flag] : r.sentences) j["sentences"].push_back({{"text", t}, {"flag", flag}});
                } else {
                    j["summary"] = r.summary();
                    j["label"] = r.label;
                }
                lines.push_back(j.dump());
            }
            write_lines(out / s.file, lines);
        }

        for (const auto& r : rows) {
            if (r.marginal) continue;
            const LabeledExample e{r.id, DatasetId::parse(s.name), r.document, r.summary(), r.label};
            for (std::size_t j = 0; j < pool.size(); ++j) {
                const auto& p = pool[j];
                const auto q = kPromptQuality[j];
                const double correct_p = r.label ? std::min(0.97, q.sens + s.shift) : std::min(0.97, q.spec - s.shift);
                const bool says_positive = rng.bernoulli(correct_p) ? r.label == 1 : r.label == 0;
                const auto rendered = render(p, e);
                const double u = rng.uniform();
                if (u < 0.02) {
                    // Unparseable, then a parseable re-query.
                    add_cache(p, rendered, 0, "I am unable to decide from the information given.");
                    add_cache(p, rendered, 1, response_text(p, says_positive, rng));
                } else if (u < 0.03) {
                    // Unparseable with no re-query on record: abstains under replay.
                    add_cache(p, rendered, 0, "The request is ambiguous.");
                } else {
                    add_cache(p, rendered, 0, response_text(p, says_positive, rng));
                }
            }
            for (const auto& sc : scorers) {
                const double z = (rng.uniform() + rng.uniform() + rng.uniform() - 1.5) * 2.0;
                double v = sc.base + sc.dataset_shift.at(s.prefix) + sc.gain * r.label + sc.noise * z;
                v = std::clamp(v, sc.lo, sc.hi);
                score_rows.push_back({sc.name, r.id, s.name, fmt_num(v), std::to_string(r.label)});
            }
        }
    }
    write_lines(out / "cache.jsonl", cache_lines);

    {
        std::ofstream f(out / "scores.csv", std::ios::binary);
        csv::write_record(f, score_header);
        for (const auto& r : score_rows) csv::write_record(f, r);
    }
    {
        std::ofstream f(out / "ranges.yaml", std::ios::binary);
        f << "models:\n";
        for (const auto& sc : scorers)
            f << "  " << sc.name << ": {lo: " << fmt_num(sc.lo) << ", hi: " << fmt_num(sc.hi) << ", invert: false}\n";
    }
    std::cout << "wrote " << cache_lines.size() << " cache entries and " << score_rows.size() << " score rows to "
              << out.string() << '\n';
    return 0;
}
