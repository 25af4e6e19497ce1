#include "factens/threshbench.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <set>

#include <yaml-cpp/yaml.h>

#include "factens/csv.hpp"
#include "factens/error.hpp"
#include "factens/format.hpp"

namespace factens {

namespace {

struct Split {
    std::vector<double> scores;
    std::vector<int> gold;
};

Split rows_where(const ScoreTable& t, const std::string& dataset, bool equal) {
    Split s;
    for (const auto& r : t.rows) {
        if ((r.dataset == dataset) != equal) continue;
        s.scores.push_back(t.oriented(r.score));
        s.gold.push_back(r.gold);
    }
    return s;
}

bool both_classes(const std::vector<int>& g) {
    const auto ones = std::count(g.begin(), g.end(), 1);
    return ones > 0 && ones < static_cast<long>(g.size());
}

double parse_double(const std::string& s, std::size_t row, const char* field) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(row, field, "not a number: '" + s + "'");
    }
}

}  // namespace

void ScoreTable::validate() const {
    if (!(lo < hi)) throw PreconditionError("score table '" + model_name + "': range lo must be < hi");
    for (const auto& r : rows) {
        if (!(r.score >= lo && r.score <= hi))
            throw PreconditionError("score table '" + model_name + "': score " + fmt_num(r.score) + " of '" +
                                    r.example_id + "' outside [" + fmt_num(lo) + ", " + fmt_num(hi) + "]");
        if (r.gold != 0 && r.gold != 1) throw PreconditionError("score table '" + model_name + "': label not 0/1");
    }
}

std::vector<std::string> ScoreTable::datasets() const {
    std::set<std::string> s;
    for (const auto& r : rows) s.insert(r.dataset);
    return {s.begin(), s.end()};
}

std::string_view to_string(ThresholdStrategy s) {
    switch (s) {
        case ThresholdStrategy::OptimizeOnTest: return "OptimizeOnTest";
        case ThresholdStrategy::OptimizeAtCenter: return "OptimizeAtCenter";
        case ThresholdStrategy::OptimizeOnTrain: return "OptimizeOnTrain";
    }
    return "?";
}

TrainPooling parse_train_pooling(std::string_view s) {
    if (s == "pooled") return TrainPooling::Pooled;
    if (s == "averaged") return TrainPooling::Averaged;
    throw ConfigError("train_pooling must be 'pooled' or 'averaged', got '" + std::string(s) + "'");
}

double threshold_balanced_accuracy(std::span<const double> scores, std::span<const int> gold, double threshold) {
    if (scores.size() != gold.size()) throw PreconditionError("threshold: length mismatch");
    std::size_t tp = 0, tn = 0, pos = 0, neg = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool p = scores[i] >= threshold;
        if (gold[i] == 1) {
            ++pos;
            tp += p;
        } else {
            ++neg;
            tn += !p;
        }
    }
    if (pos == 0 || neg == 0) throw SingleClassGold();
    return 0.5 * (static_cast<double>(tp) / static_cast<double>(pos) + static_cast<double>(tn) / static_cast<double>(neg));
}

ThresholdResult optimal_threshold(std::span<const double> scores, std::span<const int> gold,
                                  std::optional<double> span) {
    if (scores.size() != gold.size()) throw PreconditionError("threshold: length mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });
    std::uint64_t pos = 0, neg = 0;
    for (int g : gold) (g == 1 ? pos : neg)++;
    if (pos == 0 || neg == 0) throw SingleClassGold();

    const double mn = scores[order.front()], mx = scores[order.back()];
    double width = span ? *span : mx - mn;
    if (!(width > 0)) width = 1.0;
    const double eps = 1e-9 * width;

    // Start with everything predicted positive, then move each distinct score
    // group to the negative side in ascending order.
    std::uint64_t tp = pos, tn = 0;
    std::uint64_t best_tp = tp, best_tn = tn;
    double best_theta = mn - eps;
    std::size_t i = 0;
    while (i < order.size()) {
        const double s = scores[order[i]];
        while (i < order.size() && scores[order[i]] == s) {
            if (gold[order[i]] == 1) --tp;
            else ++tn;
            ++i;
        }
        const double theta = i < order.size() ? 0.5 * (s + scores[order[i]]) : mx + eps;
        // Compare tp/pos + tn/neg exactly.
        if (tp * neg + tn * pos > best_tp * neg + best_tn * pos) {
            best_tp = tp;
            best_tn = tn;
            best_theta = theta;
        }
    }
    return {best_theta, 0.5 * (static_cast<double>(best_tp) / static_cast<double>(pos) +
                               static_cast<double>(best_tn) / static_cast<double>(neg))};
}

ThresholdResult evaluate_strategy(const ScoreTable& table, ThresholdStrategy strategy,
                                  const std::string& test_dataset, TrainPooling pooling) {
    const auto test = rows_where(table, test_dataset, true);
    if (test.scores.empty()) throw UnknownDataset(test_dataset);
    const double span = table.hi - table.lo;
    switch (strategy) {
        case ThresholdStrategy::OptimizeOnTest: return optimal_threshold(test.scores, test.gold, span);
        case ThresholdStrategy::OptimizeAtCenter: {
            const double theta = 0.5 * (table.lo + table.hi);
            return {theta, threshold_balanced_accuracy(test.scores, test.gold, theta)};
        }
        case ThresholdStrategy::OptimizeOnTrain: {
            double theta = 0;
            if (pooling == TrainPooling::Pooled) {
                const auto train = rows_where(table, test_dataset, false);
                if (!both_classes(train.gold)) throw MissingTrainRows(test_dataset);
                theta = optimal_threshold(train.scores, train.gold, span).threshold;
            } else {
                std::vector<double> thetas;
                for (const auto& d : table.datasets()) {
                    if (d == test_dataset) continue;
                    const auto part = rows_where(table, d, true);
                    if (!both_classes(part.gold)) continue;
                    thetas.push_back(optimal_threshold(part.scores, part.gold, span).threshold);
                }
                if (thetas.empty()) throw MissingTrainRows(test_dataset);
                theta = std::accumulate(thetas.begin(), thetas.end(), 0.0) / static_cast<double>(thetas.size());
            }
            return {theta, threshold_balanced_accuracy(test.scores, test.gold, theta)};
        }
    }
    throw PreconditionError("unknown strategy");
}

DeltaRecord delta_report(const ScoreTable& table, const std::string& test_dataset, TrainPooling pooling) {
    DeltaRecord r;
    r.model = table.model_name;
    r.dataset = test_dataset;
    r.on_test = evaluate_strategy(table, ThresholdStrategy::OptimizeOnTest, test_dataset, pooling);
    r.at_center = evaluate_strategy(table, ThresholdStrategy::OptimizeAtCenter, test_dataset, pooling);
    r.on_train = evaluate_strategy(table, ThresholdStrategy::OptimizeOnTrain, test_dataset, pooling);
    r.delta_center = r.on_test.balanced_accuracy - r.at_center.balanced_accuracy;
    r.delta_train = r.on_test.balanced_accuracy - r.on_train.balanced_accuracy;
    return r;
}

std::vector<DeltaRecord> run_threshbench(std::span<const ScoreTable> tables, TrainPooling pooling) {
    std::vector<DeltaRecord> out;
    for (const auto& t : tables) {
        t.validate();
        for (const auto& d : t.datasets()) out.push_back(delta_report(t, d, pooling));
    }
    return out;
}

std::map<std::string, ScoreRange> load_score_ranges(const std::filesystem::path& ranges_path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(ranges_path.string());
    } catch (const YAML::BadFile&) {
        throw IoError(ranges_path.string(), "cannot open score ranges");
    } catch (const YAML::Exception& e) {
        throw ConfigError("score ranges " + ranges_path.string() + ": " + e.what());
    }
    std::map<std::string, ScoreRange> out;
    try {
        for (const auto& kv : root["models"]) {
            ScoreRange r;
            r.lo = kv.second["lo"].as<double>();
            r.hi = kv.second["hi"].as<double>();
            r.invert = kv.second["invert"].as<bool>(false);
            if (!(r.lo < r.hi)) throw ConfigError("score range for '" + kv.first.as<std::string>() + "': lo >= hi");
            out[kv.first.as<std::string>()] = r;
        }
    } catch (const YAML::Exception& e) {
        throw ConfigError("score ranges " + ranges_path.string() + ": " + e.what());
    }
    return out;
}

std::vector<ScoreTable> load_score_tables(const std::filesystem::path& csv_path,
                                          const std::filesystem::path& ranges_path) {
    const auto ranges = load_score_ranges(ranges_path);
    const auto t = csv::read_table(csv_path);
    const int c_model = t.column("model"), c_id = t.column("example_id"), c_ds = t.column("dataset"),
              c_score = t.column("score"), c_label = t.column("label");
    for (auto [c, name] : {std::pair{c_model, "model"}, {c_id, "example_id"}, {c_ds, "dataset"},
                           {c_score, "score"}, {c_label, "label"}}) {
        if (c < 0) throw SchemaError(0, name, "missing column");
    }
    std::map<std::string, ScoreTable> by_model;
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        const auto& rec = t.rows[r];
        if (rec.size() != t.header.size()) throw SchemaError(r + 1, "<columns>", "wrong field count");
        const auto& model = rec[static_cast<std::size_t>(c_model)];
        auto [it, fresh] = by_model.try_emplace(model);
        auto& table = it->second;
        if (fresh) {
            auto range = ranges.find(model);
            if (range == ranges.end()) throw ConfigError("no score range declared for model '" + model + "'");
            table.model_name = model;
            table.lo = range->second.lo;
            table.hi = range->second.hi;
            table.invert = range->second.invert;
        }
        const auto& label = rec[static_cast<std::size_t>(c_label)];
        if (label != "0" && label != "1") throw SchemaError(r + 1, "label", "expected 0 or 1");
        table.rows.push_back({rec[static_cast<std::size_t>(c_id)], rec[static_cast<std::size_t>(c_ds)],
                              parse_double(rec[static_cast<std::size_t>(c_score)], r + 1, "score"),
                              label == "1" ? 1 : 0});
    }
    std::vector<ScoreTable> out;
    for (auto& [name, table] : by_model) {
        table.validate();
        out.push_back(std::move(table));
    }
    return out;
}

void write_delta_csv(const std::filesystem::path& path, std::span<const DeltaRecord> records,
                     const std::string& comment) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    if (!comment.empty()) out << "# " << comment << '\n';
    csv::write_record(out, {"model", "dataset", "strategy", "threshold", "balanced_accuracy", "delta"});
    for (const auto& r : records) {
        auto row = [&](ThresholdStrategy s, const ThresholdResult& t, double delta) {
            csv::write_record(out, {r.model, r.dataset, std::string(to_string(s)), fmt_num(t.threshold),
                                    fmt_num(t.balanced_accuracy), fmt_num(delta)});
        };
        row(ThresholdStrategy::OptimizeOnTest, r.on_test, 0.0);
        row(ThresholdStrategy::OptimizeAtCenter, r.at_center, r.delta_center);
        row(ThresholdStrategy::OptimizeOnTrain, r.on_train, r.delta_train);
    }
}

}  // namespace factens
