#include "factens/cli/config.hpp"

#include <fstream>
#include <random>

#include <nlohmann/json.hpp>
#include <yaml-cpp/yaml.h>

#include "factens/error.hpp"
#include "factens/hash.hpp"
#include "factens/rng.hpp"

namespace factens::cli {

namespace fs = std::filesystem;

namespace {

template <typename T>
T scalar(const YAML::Node& node, const std::string& where) {
    try {
        return node.as<T>();
    } catch (const YAML::Exception&) {
        throw ConfigError("config: bad value for '" + where + "'");
    }
}

template <typename T>
T scalar_or(const YAML::Node& parent, const char* key, T fallback, const std::string& where) {
    const auto n = parent[key];
    if (!n) return fallback;
    return scalar<T>(n, where + "." + key);
}

void require_file(const RunConfig& c, const fs::path& p, const std::string& what) {
    if (!fs::exists(c.resolve(p))) throw ConfigError(what + " not found: " + c.resolve(p).string());
}

std::string sided_name(Sidedness s) { return s == Sidedness::OneSided ? "one" : "two"; }

}  // namespace

fs::path RunConfig::resolve(const fs::path& p) const { return p.is_absolute() ? p : base_dir / p; }

const DatasetConfig& RunConfig::dataset(const std::string& name) const {
    for (const auto& d : datasets) {
        if (d.name == name) return d;
    }
    throw ConfigError("dataset '" + name + "' is not declared in the config");
}

RunConfig load_config(const fs::path& path, bool check_datasets) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path.string());
    } catch (const YAML::BadFile&) {
        throw ConfigError("config not found: " + path.string());
    } catch (const YAML::Exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!root.IsMap()) throw ConfigError("config: top level must be a mapping");

    RunConfig c;
    c.base_dir = path.parent_path().empty() ? fs::path(".") : path.parent_path();
    c.output_dir = scalar_or<std::string>(root, "output_dir", "out", "");
    if (root["seed"]) c.seed = scalar<std::uint64_t>(root["seed"], "seed");
    if (auto s = root["seeds"]) {
        if (s["sample"]) c.sample_seed = scalar<std::uint64_t>(s["sample"], "seeds.sample");
        if (s["folds"]) c.folds_seed = scalar<std::uint64_t>(s["folds"], "seeds.folds");
        if (s["bootstrap"]) c.bootstrap_seed = scalar<std::uint64_t>(s["bootstrap"], "seeds.bootstrap");
    }

    const auto datasets = root["datasets"];
    if (!datasets || !datasets.IsSequence() || datasets.size() == 0)
        throw ConfigError("config: 'datasets' must be a non-empty list");
    for (std::size_t i = 0; i < datasets.size(); ++i) {
        const auto d = datasets[i];
        const auto where = "datasets[" + std::to_string(i) + "]";
        DatasetConfig dc;
        dc.name = scalar<std::string>(d["name"], where + ".name");
        dc.path = scalar<std::string>(d["path"], where + ".path");
        try {
            dc.format = parse_format(scalar_or<std::string>(d, "format", "jsonl", where));
            dc.split = parse_split(scalar_or<std::string>(d, "split", "test", where));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(where + ": " + e.what());
        }
        if (d["sample"]) dc.sample = scalar<std::size_t>(d["sample"], where + ".sample");
        for (const auto& prev : c.datasets) {
            if (prev.name == dc.name) throw ConfigError("config: dataset '" + dc.name + "' declared twice");
        }
        c.datasets.push_back(std::move(dc));
    }

    const auto prompts = root["prompts"];
    c.pool = scalar_or<std::string>(prompts, "pool", "", "prompts");
    c.cache = scalar_or<std::string>(prompts, "cache", "", "prompts");
    if (c.pool.empty()) throw ConfigError("config: prompts.pool is required");
    if (c.cache.empty()) throw ConfigError("config: prompts.cache is required");

    if (auto b = root["backend"]) {
        c.backend.kind = scalar_or<std::string>(b, "kind", c.backend.kind, "backend");
        if (c.backend.kind != "replay" && c.backend.kind != "http")
            throw ConfigError("config: backend.kind must be replay or http");
        c.backend.http.base_url = scalar_or<std::string>(b, "base_url", c.backend.http.base_url, "backend");
        c.backend.http.endpoint = scalar_or<std::string>(b, "endpoint", c.backend.http.endpoint, "backend");
        c.backend.http.api_key_env = scalar_or<std::string>(b, "api_key_env", c.backend.http.api_key_env, "backend");
        c.backend.http.timeout_seconds = scalar_or<int>(b, "timeout_seconds", c.backend.http.timeout_seconds, "backend");
        c.backend.parallelism = scalar_or<std::size_t>(b, "parallelism", c.backend.parallelism, "backend");
        c.backend.transient_retries = scalar_or<int>(b, "transient_retries", c.backend.transient_retries, "backend");
    }

    if (auto f = root["features"]) {
        try {
            c.impute = parse_impute_policy(scalar_or<std::string>(f, "impute", "column_majority", "features"));
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    const auto ens = root["ensemble"];
    if (auto kinds = ens["kinds"]) {
        for (const auto& k : kinds) c.ensemblers.push_back(parse_ensemble_kind(scalar<std::string>(k, "ensemble.kinds")));
    } else {
        c.ensemblers.assign(std::begin(kAllEnsembleKinds), std::end(kAllEnsembleKinds));
    }
    c.folds = scalar_or<std::size_t>(ens, "folds", c.folds, "ensemble");
    if (c.folds < 2) throw ConfigError("config: ensemble.folds must be >= 2");
    if (auto grids = ens["grids"]) {
        for (const auto& kv : grids) {
            const auto kind = parse_ensemble_kind(kv.first.as<std::string>());
            Grid g;
            for (const auto& p : kv.second)
                g[p.first.as<std::string>()] = scalar<std::vector<double>>(p.second, "ensemble.grids");
            c.grids[kind] = std::move(g);
        }
    }
    if (auto fixed = ens["hyper"]) {
        for (const auto& kv : fixed) {
            const auto kind = parse_ensemble_kind(kv.first.as<std::string>());
            for (const auto& p : kv.second) c.fixed[kind][p.first.as<std::string>()] = scalar<double>(p.second, "ensemble.hyper");
        }
    }

    const auto cal = root["calibration"];
    if (auto kinds = cal["kinds"]) {
        for (const auto& k : kinds) c.calibrators.push_back(parse_calibrator_kind(scalar<std::string>(k, "calibration.kinds")));
    } else {
        c.calibrators.assign(std::begin(kAllCalibratorKinds), std::end(kAllCalibratorKinds));
    }
    c.ece_bins = scalar_or<std::size_t>(cal, "ece_bins", c.ece_bins, "calibration");
    if (c.ece_bins == 0) throw ConfigError("config: calibration.ece_bins must be > 0");

    if (auto sizes = root["selection"]["sizes"]) c.subset_sizes = scalar<std::vector<std::size_t>>(sizes, "selection.sizes");
    for (auto s : c.subset_sizes) {
        if (s == 0) throw ConfigError("config: selection sizes must be > 0");
    }

    const auto sig = root["significance"];
    c.resamples = scalar_or<std::size_t>(sig, "resamples", c.resamples, "significance");
    c.comparisons = scalar_or<std::size_t>(sig, "comparisons", c.comparisons, "significance");
    const auto sided = scalar_or<std::string>(sig, "sided", "one", "significance");
    if (sided != "one" && sided != "two") throw ConfigError("config: significance.sided must be one or two");
    c.sided = sided == "one" ? Sidedness::OneSided : Sidedness::TwoSided;

    if (auto t = root["threshbench"]) {
        if (t["scores"]) c.score_tables = fs::path(scalar<std::string>(t["scores"], "threshbench.scores"));
        if (t["ranges"]) c.score_ranges = fs::path(scalar<std::string>(t["ranges"], "threshbench.ranges"));
        try {
            c.pooling = parse_train_pooling(scalar_or<std::string>(t, "pooling", "pooled", "threshbench"));
        } catch (const ConfigError&) {
            throw;
        } catch (const Error& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }

    require_file(c, c.pool, "prompt pool");
    if (check_datasets) {
        for (const auto& d : c.datasets) require_file(c, d.path, "dataset '" + d.name + "'");
    }
    if (c.score_tables) require_file(c, *c.score_tables, "score table");
    if (c.score_ranges) require_file(c, *c.score_ranges, "score ranges");
    return c;
}

Seeds resolve_seeds(const RunConfig& c, std::optional<std::uint64_t> override_seed) {
    Seeds s;
    if (override_seed) {
        s.master = *override_seed;
    } else if (c.seed) {
        s.master = *c.seed;
    } else {
        const auto meta = c.resolve(c.output_dir) / "run_metadata.json";
        std::ifstream in(meta);
        bool found = false;
        if (in) {
            try {
                const auto j = nlohmann::json::parse(in);
                s.master = j.at("seeds").at("master").get<std::uint64_t>();
                found = true;
            } catch (const nlohmann::json::exception&) {
            }
        }
        if (!found) {
            std::random_device rd;
            s.master = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
        }
    }
    // With an explicit override every stage follows it.
    const bool file_stages = !override_seed;
    s.sample = file_stages && c.sample_seed ? *c.sample_seed : derive_seed(s.master, 1);
    s.folds = file_stages && c.folds_seed ? *c.folds_seed : derive_seed(s.master, 2);
    s.bootstrap = file_stages && c.bootstrap_seed ? *c.bootstrap_seed : derive_seed(s.master, 3);
    return s;
}

nlohmann::json canonical_json(const RunConfig& c, const Seeds& seeds) {
    nlohmann::json j;
    j["seeds"] = {{"master", seeds.master}, {"sample", seeds.sample}, {"folds", seeds.folds}, {"bootstrap", seeds.bootstrap}};
    j["datasets"] = nlohmann::json::array();
    for (const auto& d : c.datasets) {
        nlohmann::json dj{{"name", d.name},
                          {"path", d.path.generic_string()},
                          {"format", d.format == DataFormat::Csv ? "csv" : "jsonl"},
                          {"split", std::string(to_string(d.split))}};
        if (d.sample) dj["sample"] = *d.sample;
        j["datasets"].push_back(dj);
    }
    j["prompts"] = {{"pool", c.pool.generic_string()}, {"cache", c.cache.generic_string()}};
    j["backend"] = {{"kind", c.backend.kind},
                    {"base_url", c.backend.http.base_url},
                    {"endpoint", c.backend.http.endpoint},
                    {"transient_retries", c.backend.transient_retries}};
    j["features"] = {{"impute", c.impute == ImputePolicy::AbstainAsInconsistent ? "inconsistent" : "column_majority"}};
    nlohmann::json kinds = nlohmann::json::array(), grids = nlohmann::json::object(), fixed = nlohmann::json::object();
    for (auto k : c.ensemblers) kinds.push_back(std::string(to_string(k)));
    for (const auto& [k, g] : c.grids) grids[std::string(to_string(k))] = g;
    for (const auto& [k, h] : c.fixed) fixed[std::string(to_string(k))] = h;
    j["ensemble"] = {{"kinds", kinds}, {"grids", grids}, {"hyper", fixed}, {"folds", c.folds}};
    nlohmann::json cals = nlohmann::json::array();
    for (auto k : c.calibrators) cals.push_back(std::string(to_string(k)));
    j["calibration"] = {{"kinds", cals}, {"ece_bins", c.ece_bins}};
    j["selection"] = {{"sizes", c.subset_sizes}};
    j["significance"] = {{"resamples", c.resamples}, {"comparisons", c.comparisons}, {"sided", sided_name(c.sided)}};
    if (c.score_tables || c.score_ranges) {
        j["threshbench"] = {{"scores", c.score_tables ? c.score_tables->generic_string() : ""},
                            {"ranges", c.score_ranges ? c.score_ranges->generic_string() : ""},
                            {"pooling", c.pooling == TrainPooling::Pooled ? "pooled" : "averaged"}};
    }
    return j;
}

std::string config_hash(const RunConfig& c, const Seeds& seeds) { return sha256_hex(canonical_json(c, seeds).dump()); }

}  // namespace factens::cli
