#include "factens/cli/provenance.hpp"

#include <fstream>

#include "factens/error.hpp"

namespace factens::cli {

namespace fs = std::filesystem;

namespace {

void ensure_parent(const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

}  // namespace

nlohmann::json Provenance::to_json() const {
    return {{"config_hash", config_hash},
            {"seeds", {{"master", seeds.master}, {"sample", seeds.sample}, {"folds", seeds.folds}, {"bootstrap", seeds.bootstrap}}},
            {"version", version}};
}

std::string Provenance::line() const {
    return "config_hash=" + config_hash + " seeds=master:" + std::to_string(seeds.master) +
           ",sample:" + std::to_string(seeds.sample) + ",folds:" + std::to_string(seeds.folds) +
           ",bootstrap:" + std::to_string(seeds.bootstrap) + " version=" + version;
}

void write_json(const fs::path& path, nlohmann::json doc, const Provenance& prov) {
    ensure_parent(path);
    doc["provenance"] = prov.to_json();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    out << doc.dump(2) << '\n';
}

void write_text(const fs::path& path, const std::string& text, const Provenance& prov) {
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    out << "# " << prov.line() << '\n' << text;
}

void update_run_metadata(const fs::path& output_dir, const Provenance& prov, const nlohmann::json& fields) {
    const auto path = output_dir / "run_metadata.json";
    nlohmann::json doc = nlohmann::json::object();
    if (std::ifstream in(path); in) {
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::exception&) {
            doc = nlohmann::json::object();
        }
    }
    doc.erase("provenance");
    for (const auto& [k, v] : fields.items()) doc[k] = v;
    doc["seeds"] = prov.to_json()["seeds"];
    doc["config_hash"] = prov.config_hash;
    doc["version"] = prov.version;
    fs::create_directories(output_dir);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    out << doc.dump(2) << '\n';
}

}  // namespace factens::cli
