#pragma once

// Subcommands. Each returns a process exit code: 0 success, 1 partial
// (failures logged), 2 configuration error.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "factens/calibrate.hpp"
#include "factens/cli/config.hpp"
#include "factens/cli/provenance.hpp"
#include "factens/cli/taint.hpp"
#include "factens/select.hpp"

namespace factens::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitPartial = 1;
inline constexpr int kExitConfig = 2;

struct CommandOptions {
    std::filesystem::path config;
    std::optional<std::string> held_out;
    std::optional<std::uint64_t> seed;
    bool replay_only = false;
    std::optional<std::size_t> jobs;
    std::optional<std::filesystem::path> output_dir;  // overrides the config
    std::optional<std::string> a, b;  // significance
};

struct Context {
    RunConfig config;
    Seeds seeds;
    Provenance prov;
    std::filesystem::path out_dir;  // resolved output directory
    CommandOptions options;
    std::ostream* out = nullptr;

    std::size_t jobs() const;
};

Context make_context(const CommandOptions& options, std::ostream& out);

int cmd_ingest(Context& ctx);
int cmd_run_prompts(Context& ctx);
int cmd_select_prompts(Context& ctx);
int cmd_evaluate(Context& ctx);
int cmd_calibrate(Context& ctx);
int cmd_threshbench(Context& ctx);
int cmd_significance(Context& ctx);
int cmd_report(Context& ctx);

// One evaluated row of the leave-one-dataset-out grid.
struct RowResult {
    std::string name;  // "<kind>@<size>" or "Baseline"
    std::string kind;
    std::size_t size = 0;
    std::vector<std::string> prompt_ids;
    Hyper hyper;
    double cv_balanced_accuracy = 0;
    std::vector<double> raw;  // test-set probabilities
    std::map<CalibratorKind, Calibrator> calibrators;
    std::map<CalibratorKind, std::vector<double>> calibrated;
    std::optional<EnsembleModel> model;
    std::optional<std::string> error;
};

struct HeldOutResult {
    std::string held_out;
    std::size_t n_train = 0;
    std::vector<std::string> test_ids;
    std::vector<std::string> prompt_ids;
    std::vector<std::vector<std::int8_t>> prompt_verdicts;  // per prompt, test rows
    std::map<std::size_t, SelectionResult> selections;
    std::vector<RowResult> rows;
    TaintGuard guard;
};

// Fits every configured (ensembler, size) on the pooled non-held-out
// datasets, calibrates on out-of-fold train predictions, and predicts the
// held-out rows. Held-out labels are not read.
HeldOutResult fit_held_out(Context& ctx, const std::string& held_out);

// Held-out gold labels, read only for final scoring.
std::vector<int> held_out_gold(const Context& ctx, const std::string& held_out);

// Aligned plain-text table; first column left-aligned, the rest right.
std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows);

// Parses argv and dispatches. Diagnostics go to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace factens::cli
