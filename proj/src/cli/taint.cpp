#include "factens/cli/taint.hpp"

#include <nlohmann/json.hpp>

#include "factens/error.hpp"

namespace factens::cli {

std::string qualified_id(const std::string& dataset, const std::string& id) { return dataset + ":" + id; }

TaintGuard::TaintGuard(std::string held_out, std::span<const std::string> held_out_ids)
    : held_out_(std::move(held_out)), keys_(held_out_ids.begin(), held_out_ids.end()) {}

void TaintGuard::check(const std::string& stage, std::span<const std::string> ids) {
    for (const auto& id : ids) {
        if (keys_.count(id))
            throw TaintViolation("held-out example " + id + " reached stage '" + stage + "' (held out: " + held_out_ + ")");
    }
    for (auto& [name, rows] : log_) {
        if (name == stage) {
            rows += ids.size();
            return;
        }
    }
    log_.emplace_back(stage, ids.size());
}

nlohmann::json TaintGuard::to_json() const {
    nlohmann::json stages = nlohmann::json::array();
    for (const auto& [name, rows] : log_) stages.push_back({{"stage", name}, {"rows_checked", rows}, {"held_out_rows_seen", 0}});
    return {{"held_out", held_out_}, {"held_out_keys", keys_.size()}, {"stages", stages}};
}

}  // namespace factens::cli
