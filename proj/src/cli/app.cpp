#include <CLI11.hpp>

#include <iostream>

#include "factens/cli/commands.hpp"
#include "factens/error.hpp"

namespace factens::cli {

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Binary-verdict ensembling, calibration and evaluation for LLM factual-consistency prompts"};
    app.require_subcommand(1);
    app.fallthrough();

    CommandOptions opt;
    std::string config;
    std::string held_out;
    std::uint64_t seed = 0;
    std::size_t jobs = 0;
    std::string a, b;
    app.add_option("--config", config, "run configuration (YAML)")->required();
    auto* held_opt = app.add_option("--held-out", held_out, "dataset held out for testing");
    auto* seed_opt = app.add_option("--seed", seed, "master seed; overrides the config");
    app.add_flag("--replay-only", opt.replay_only, "serve LLM responses from the cache only");
    std::string output_dir;
    auto* out_opt = app.add_option("--output-dir", output_dir, "write outputs here instead of the config's output_dir");
    auto* jobs_opt = app.add_option("--jobs", jobs, "parallelism for prompts, grid search and bootstrap")
                         ->check(CLI::PositiveNumber);

    const std::vector<std::pair<std::string, std::string>> commands{
        {"ingest", "normalize and sample the configured datasets"},
        {"run-prompts", "query the prompt pool and write feature matrices"},
        {"select-prompts", "choose prompt subsets by mRMR and RFE"},
        {"evaluate", "leave-one-dataset-out ensembling, calibration and scoring"},
        {"calibrate", "fit and export calibrators, report ECE"},
        {"threshbench", "threshold-strategy study for continuous scorers"},
        {"significance", "paired bootstrap between two prediction columns"},
        {"report", "aggregate evaluate outputs into summary tables"},
    };
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, help] : commands) subs[name] = app.add_subcommand(name, help);
    auto* sig = subs["significance"];
    auto* a_opt = sig->add_option("--a", a, "first column of predictions.csv (default: best ensembler)");
    auto* b_opt = sig->add_option("--b", b, "second column (default: best single prompt)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitConfig;
    }
    opt.config = config;
    if (*held_opt) opt.held_out = held_out;
    if (*seed_opt) opt.seed = seed;
    if (*jobs_opt) opt.jobs = jobs;
    if (*out_opt) opt.output_dir = output_dir;
    if (*a_opt) opt.a = a;
    if (*b_opt) opt.b = b;

    std::string which;
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) which = name;
    }

    try {
        auto ctx = make_context(opt, out);
        if (which == "ingest") return cmd_ingest(ctx);
        if (which == "run-prompts") return cmd_run_prompts(ctx);
        if (which == "select-prompts") return cmd_select_prompts(ctx);
        if (which == "evaluate") return cmd_evaluate(ctx);
        if (which == "calibrate") return cmd_calibrate(ctx);
        if (which == "threshbench") return cmd_threshbench(ctx);
        if (which == "significance") return cmd_significance(ctx);
        if (which == "report") return cmd_report(ctx);
        err << "error: unknown subcommand\n";
        return kExitConfig;
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        err << e.what() << '\n';
        return kExitConfig;
    } catch (const UnknownDataset& e) {
        err << e.what() << '\n';
        return kExitConfig;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitPartial;
    }
}

}  // namespace factens::cli
