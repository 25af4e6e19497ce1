#pragma once

// Guards the leave-one-dataset-out protocol: every row reaching a fitting
// stage is checked against the held-out dataset's (dataset, id) keys.

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace factens::cli {

// Rows are keyed "<dataset>:<id>" once datasets are pooled.
std::string qualified_id(const std::string& dataset, const std::string& id);

class TaintGuard {
public:
    TaintGuard(std::string held_out, std::span<const std::string> held_out_ids);

    // Throws TaintViolation naming the first held-out key found.
    void check(const std::string& stage, std::span<const std::string> ids);

    // Stage -> rows checked, in first-check order.
    const std::vector<std::pair<std::string, std::size_t>>& log() const { return log_; }
    nlohmann::json to_json() const;

private:
    std::string held_out_;
    std::set<std::string> keys_;
    std::vector<std::pair<std::string, std::size_t>> log_;
};

}  // namespace factens::cli
