#pragma once

// Run configuration: one YAML file drives every subcommand. Paths are
// resolved against the config file's directory.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "factens/calibrate.hpp"
#include "factens/corpus.hpp"
#include "factens/ensemble.hpp"
#include "factens/featurize.hpp"
#include "factens/llm.hpp"
#include "factens/metrics.hpp"
#include "factens/threshbench.hpp"

namespace factens::cli {

struct DatasetConfig {
    std::string name;
    std::filesystem::path path;  // as written
    DataFormat format = DataFormat::JsonLines;
    Split split = Split::Test;
    std::optional<std::size_t> sample;  // balanced sample size
};

struct BackendSettings {
    std::string kind = "replay";  // replay | http
    HttpBackendConfig http;
    std::size_t parallelism = 4;
    int transient_retries = 2;
};

struct Seeds {
    std::uint64_t master = 0;
    std::uint64_t sample = 0;
    std::uint64_t folds = 0;
    std::uint64_t bootstrap = 0;
};

struct RunConfig {
    std::filesystem::path base_dir;  // directory of the config file

    std::vector<DatasetConfig> datasets;
    std::filesystem::path pool;
    std::filesystem::path cache;
    std::filesystem::path output_dir;
    BackendSettings backend;

    ImputePolicy impute = ImputePolicy::AbstainAsColumnMajority;
    std::vector<EnsembleKind> ensemblers;
    std::map<EnsembleKind, Grid> grids;   // replaces the default grid
    std::map<EnsembleKind, Hyper> fixed;  // merged into every grid point
    std::size_t folds = 5;

    std::vector<CalibratorKind> calibrators;
    std::size_t ece_bins = kDefaultEceBins;
    std::vector<std::size_t> subset_sizes;

    std::size_t resamples = 10000;
    std::size_t comparisons = 1;
    Sidedness sided = Sidedness::OneSided;

    std::optional<std::filesystem::path> score_tables;
    std::optional<std::filesystem::path> score_ranges;
    TrainPooling pooling = TrainPooling::Pooled;

    // Seeds named in the file; unset ones are resolved at run time.
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> sample_seed, folds_seed, bootstrap_seed;

    std::filesystem::path resolve(const std::filesystem::path& p) const;
    const DatasetConfig& dataset(const std::string& name) const;  // ConfigError when absent
};

// Throws ConfigError on malformed content or a referenced input that does
// not exist. Datasets are checked only when `check_datasets` is set.
RunConfig load_config(const std::filesystem::path& path, bool check_datasets = true);

// Master seed: override, else the file, else run_metadata.json in the output
// directory, else freshly generated. Stage seeds not named in the file derive
// from the master.
Seeds resolve_seeds(const RunConfig& c, std::optional<std::uint64_t> override_seed);

// Typed, key-sorted form of the effective configuration including seeds.
// Parallelism and the output directory are excluded; neither changes the
// content of any output.
nlohmann::json canonical_json(const RunConfig& c, const Seeds& seeds);
std::string config_hash(const RunConfig& c, const Seeds& seeds);

}  // namespace factens::cli
