#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "factens/cli/config.hpp"

namespace factens::cli {

#ifndef FACTENS_VERSION
#define FACTENS_VERSION "0.0.0"
#endif

inline constexpr const char* kVersion = FACTENS_VERSION;

struct Provenance {
    std::string config_hash;
    Seeds seeds;
    std::string version = kVersion;

    nlohmann::json to_json() const;
    // config_hash=<hex> seeds=master:..,sample:..,folds:..,bootstrap:.. version=<v>
    std::string line() const;
};

// Stamps provenance into a JSON document and writes it with sorted keys.
void write_json(const std::filesystem::path& path, nlohmann::json doc, const Provenance& prov);
// Writes `text` preceded by a "# <provenance>" line.
void write_text(const std::filesystem::path& path, const std::string& text, const Provenance& prov);

// run_metadata.json: merges `fields` into the existing document.
void update_run_metadata(const std::filesystem::path& output_dir, const Provenance& prov,
                         const nlohmann::json& fields = nlohmann::json::object());

}  // namespace factens::cli
