#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <iterator>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factens/cli/commands.hpp"
#include "factens/cli/config.hpp"
#include "factens/cli/taint.hpp"
#include "factens/error.hpp"

using namespace factens;
using namespace factens::cli;
namespace fs = std::filesystem;

namespace {

const fs::path kSynthetic = fs::path(FACTENS_SOURCE_DIR) / "data" / "synthetic";

fs::path fresh_dir(const std::string& name) {
    auto d = fs::temp_directory_path() / ("factens_cli_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

void put(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream(p, std::ios::binary) << text;
}

struct ConfigText {
    std::string halueval = (kSynthetic / "halueval.jsonl").string();
    std::string cache = (kSynthetic / "cache.jsonl").string();
    std::string seed = "seed: 7\n";
    std::string ensemblers = "[MajorityVote, DawidSkene, LogisticRegression]";
    std::string extra;

    std::string str() const {
        const auto s = [](const fs::path& p) { return p.string(); };
        std::ostringstream o;
        o << "output_dir: out\n" << seed << "datasets:\n"
          << "  - {name: AggreFactXsumFtsota, path: " << s(kSynthetic / "aggrefact.csv") << ", format: csv}\n"
          << "  - {name: HaluEvalSumm, path: " << halueval << ", format: jsonl}\n"
          << "  - {name: TofuEvalMediaSum, path: " << s(kSynthetic / "tofueval_mediasum.jsonl") << ", format: jsonl}\n"
          << "prompts:\n  pool: " << s(fs::path(FACTENS_SOURCE_DIR) / "prompts" / "pool.yaml") << "\n"
          << "  cache: " << cache << "\n"
          << "backend: {kind: replay, parallelism: 2}\n"
          << "features: {impute: column_majority}\n"
          << "ensemble:\n  kinds: " << ensemblers << "\n  folds: 3\n"
          << "calibration: {kinds: [Platt, Isotonic], ece_bins: 8}\n"
          << "selection: {sizes: [3, 9]}\n"
          << "significance: {resamples: 500, comparisons: 2, sided: one}\n"
          << "threshbench:\n  scores: " << s(kSynthetic / "scores.csv") << "\n  ranges: "
          << s(kSynthetic / "ranges.yaml") << "\n  pooling: pooled\n"
          << extra;
        return o.str();
    }
};

int invoke(std::vector<std::string> args, std::string* err_text = nullptr) {
    args.insert(args.begin(), "factens");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int rc = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    if (err_text) *err_text = err.str();
    return rc;
}

// ingest + run-prompts into `dir`/out.
fs::path prepare(const std::string& name, const ConfigText& cfg = {}) {
    const auto dir = fresh_dir(name);
    put(dir / "config.yaml", cfg.str());
    const auto c = (dir / "config.yaml").string();
    REQUIRE(invoke({"ingest", "--config", c}) == kExitOk);
    REQUIRE(invoke({"run-prompts", "--config", c}) == kExitOk);
    return dir;
}

std::string first_line(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    return line;
}

std::map<std::string, std::string> tree(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
    }
    return files;
}

}  // namespace

TEST_CASE("render_table aligns columns") {
    const auto t = render_table({"name", "x"}, {{"a", "1.0"}, {"longer", "22.5"}});
    CHECK(t == "name       x\n"
               "------------\n"
               "a        1.0\n"
               "longer  22.5\n");
}

TEST_CASE("taint guard rejects held-out keys") {
    const std::vector<std::string> held{qualified_id("HaluEvalSumm", "h1"), qualified_id("HaluEvalSumm", "h2")};
    TaintGuard g("HaluEvalSumm", held);
    const std::vector<std::string> clean{"AggreFactXsumFtsota:a1", "TofuEvalMediaSum:h1"};
    g.check("fit", clean);
    g.check("fit", clean);
    const std::vector<std::string> dirty{"AggreFactXsumFtsota:a1", "HaluEvalSumm:h2"};
    CHECK_THROWS_AS(g.check("calibrate", dirty), TaintViolation);
    REQUIRE(g.log().size() == 1);
    CHECK(g.log()[0] == std::pair<std::string, std::size_t>{"fit", 4});
    const auto j = g.to_json();
    CHECK(j.at("held_out_keys") == 2);
    CHECK(j.at("stages").at(0).at("held_out_rows_seen") == 0);
}

TEST_CASE("configuration errors exit 2 and name the problem") {
    const auto dir = fresh_dir("config_errors");
    std::string err;

    CHECK(invoke({"ingest", "--config", (dir / "absent.yaml").string()}, &err) == kExitConfig);
    CHECK(err.find("absent.yaml") != std::string::npos);

    ConfigText missing;
    missing.halueval = (dir / "nope.jsonl").string();
    put(dir / "missing.yaml", missing.str());
    CHECK(invoke({"ingest", "--config", (dir / "missing.yaml").string()}, &err) == kExitConfig);
    CHECK(err.find("nope.jsonl") != std::string::npos);

    ConfigText bad_kind;
    bad_kind.ensemblers = "[MajorityVote, RandomForest]";
    put(dir / "bad.yaml", bad_kind.str());
    CHECK(invoke({"ingest", "--config", (dir / "bad.yaml").string()}, &err) == kExitConfig);
    CHECK(err.find("RandomForest") != std::string::npos);

    put(dir / "ok.yaml", ConfigText{}.str());
    CHECK(invoke({"evaluate", "--config", (dir / "ok.yaml").string(), "--held-out", "NoSuchSet"}, &err) == kExitConfig);
    CHECK(invoke({"evaluate"}, &err) == kExitConfig);
    CHECK(invoke({"frobnicate", "--config", (dir / "ok.yaml").string()}, &err) == kExitConfig);
}

TEST_CASE("config hash tracks content and seeds only") {
    const auto dir = fresh_dir("hash");
    put(dir / "a.yaml", ConfigText{}.str());
    ConfigText other;
    other.ensemblers = "[MajorityVote]";
    put(dir / "b.yaml", other.str());

    const auto a = load_config(dir / "a.yaml");
    const auto b = load_config(dir / "b.yaml");
    const auto seeds = resolve_seeds(a, std::nullopt);
    CHECK(seeds.master == 7);
    CHECK(config_hash(a, seeds) == config_hash(load_config(dir / "a.yaml"), seeds));
    CHECK(config_hash(a, seeds) != config_hash(b, seeds));
    CHECK(config_hash(a, seeds) != config_hash(a, resolve_seeds(a, 8)));

    auto c = a;
    c.output_dir = "elsewhere";
    c.backend.parallelism = 16;
    CHECK(config_hash(a, seeds) == config_hash(c, seeds));
}

TEST_CASE("unseeded runs record their seeds and reuse them") {
    ConfigText cfg;
    cfg.seed = "";
    const auto dir = fresh_dir("seed_writeback");
    put(dir / "config.yaml", cfg.str());
    const auto c = (dir / "config.yaml").string();
    REQUIRE(invoke({"ingest", "--config", c}) == kExitOk);
    const auto meta = nlohmann::json::parse(slurp(dir / "out" / "run_metadata.json"));
    const auto master = meta.at("seeds").at("master").get<std::uint64_t>();
    const auto hash = meta.at("config_hash").get<std::string>();

    REQUIRE(invoke({"ingest", "--config", c}) == kExitOk);
    const auto again = nlohmann::json::parse(slurp(dir / "out" / "run_metadata.json"));
    CHECK(again.at("seeds").at("master").get<std::uint64_t>() == master);
    CHECK(again.at("config_hash") == hash);
}

TEST_CASE("pipeline outputs carry provenance and a 0.5 baseline") {
    const auto dir = prepare("pipeline");
    const auto c = (dir / "config.yaml").string();
    const auto out = dir / "out";
    REQUIRE(invoke({"evaluate", "--config", c, "--held-out", "HaluEvalSumm"}) == kExitOk);

    const auto meta = nlohmann::json::parse(slurp(out / "run_metadata.json"));
    const auto line = "# config_hash=" + meta.at("config_hash").get<std::string>() + " seeds=master:7,";
    for (const auto& f : {out / "features" / "HaluEvalSumm.csv", out / "evaluate" / "HaluEvalSumm" / "predictions.csv",
                          out / "evaluate" / "HaluEvalSumm" / "tables.txt"}) {
        INFO(f.string());
        CHECK(first_line(f).rfind(line, 0) == 0);
    }

    const auto report = nlohmann::json::parse(slurp(out / "evaluate" / "HaluEvalSumm" / "report.json"));
    CHECK(report.at("provenance").at("config_hash") == meta.at("config_hash"));
    CHECK(report.at("n_test") == 200);
    const auto& rows = report.at("rows");
    CHECK(rows.at(0).at("name") == "Baseline");
    CHECK(rows.at(0).at("raw").at("balanced_accuracy").get<double>() == 0.5);
    // 3 kinds x sizes {3, 9}, plus the baseline
    CHECK(rows.size() == 7);
    for (const auto& r : rows) {
        INFO(r.at("name").get<std::string>());
        CHECK_FALSE(r.contains("error"));
    }

    const auto taint = nlohmann::json::parse(slurp(out / "evaluate" / "HaluEvalSumm" / "taint.json"));
    CHECK(taint.at("held_out_keys") == 200);
    std::set<std::string> stages;
    for (const auto& s : taint.at("stages")) {
        stages.insert(s.at("stage").get<std::string>());
        CHECK(s.at("held_out_rows_seen") == 0);
        CHECK(s.at("rows_checked").get<std::size_t>() > 0);
    }
    CHECK(stages == std::set<std::string>{"baseline", "select", "grid_search", "fit", "calibrate"});
}

TEST_CASE("held-out labels do not influence predictions") {
    const auto dir = fresh_dir("flip_src");
    std::ifstream in(kSynthetic / "halueval.jsonl");
    std::ostringstream flipped;
    for (std::string line; std::getline(in, line);) {
        auto j = nlohmann::json::parse(line);
        j["label"] = 1 - j.at("label").get<int>();
        flipped << j.dump() << '\n';
    }
    put(dir / "halueval_flipped.jsonl", flipped.str());

    ConfigText cfg;
    const auto plain = prepare("flip_a", cfg);
    cfg.halueval = (dir / "halueval_flipped.jsonl").string();
    const auto flip = prepare("flip_b", cfg);

    std::ostringstream sink;
    auto ca = make_context({.config = plain / "config.yaml"}, sink);
    auto cb = make_context({.config = flip / "config.yaml"}, sink);
    const auto ra = fit_held_out(ca, "HaluEvalSumm");
    const auto rb = fit_held_out(cb, "HaluEvalSumm");
    CHECK(ra.test_ids == rb.test_ids);
    REQUIRE(ra.rows.size() == rb.rows.size());
    for (std::size_t i = 0; i < ra.rows.size(); ++i) {
        INFO(ra.rows[i].name);
        CHECK(ra.rows[i].prompt_ids == rb.rows[i].prompt_ids);
        CHECK(ra.rows[i].raw == rb.rows[i].raw);
        CHECK(ra.rows[i].calibrated == rb.rows[i].calibrated);
    }
    const auto ga = held_out_gold(ca, "HaluEvalSumm");
    const auto gb = held_out_gold(cb, "HaluEvalSumm");
    REQUIRE(ga.size() == gb.size());
    for (std::size_t i = 0; i < ga.size(); ++i) CHECK(ga[i] == 1 - gb[i]);
}

TEST_CASE("run-prompts reports missing cache entries as a partial run") {
    const auto dir = fresh_dir("partial");
    // keep only the first 100 cache lines
    std::ifstream in(kSynthetic / "cache.jsonl");
    std::ostringstream head;
    std::string line;
    for (int i = 0; i < 100 && std::getline(in, line); ++i) head << line << '\n';
    put(dir / "cache.jsonl", head.str());
    ConfigText cfg;
    cfg.cache = (dir / "cache.jsonl").string();
    put(dir / "config.yaml", cfg.str());
    const auto c = (dir / "config.yaml").string();
    REQUIRE(invoke({"ingest", "--config", c}) == kExitOk);
    CHECK(invoke({"run-prompts", "--config", c}) == kExitPartial);
    const auto failures = slurp(dir / "out" / "features" / "HaluEvalSumm.failures.csv");
    CHECK(failures.find("replay miss") != std::string::npos);
    const auto summary = nlohmann::json::parse(slurp(dir / "out" / "features" / "summary.json"));
    CHECK(summary.at("provenance").at("seeds").at("master") == 7);
}

TEST_CASE("threshbench and significance outputs") {
    const auto dir = prepare("bench");
    const auto c = (dir / "config.yaml").string();
    REQUIRE(invoke({"threshbench", "--config", c}) == kExitOk);
    const auto deltas = slurp(dir / "out" / "threshbench" / "deltas.csv");
    CHECK(deltas.rfind("# config_hash=", 0) == 0);
    CHECK(deltas.find("\nmodel,dataset,strategy,threshold,balanced_accuracy,delta\n") != std::string::npos);
    // 3 models x 4 datasets in the score file x 3 strategies
    CHECK(std::count(deltas.begin(), deltas.end(), '\n') == 2 + 36);

    CHECK(invoke({"significance", "--config", c}) == kExitConfig);
    CHECK(invoke({"significance", "--config", c, "--held-out", "HaluEvalSumm"}) == kExitConfig);
    REQUIRE(invoke({"evaluate", "--config", c, "--held-out", "HaluEvalSumm"}) == kExitOk);
    REQUIRE(invoke({"significance", "--config", c, "--held-out", "HaluEvalSumm", "--a", "MajorityVote@9", "--b",
                 "prompt:cot_steps_4"}) == kExitOk);
    const auto sig = nlohmann::json::parse(
        slurp(dir / "out" / "significance" / "HaluEvalSumm__MajorityVote@9__vs__prompt_cot_steps_4.json"));
    const double p = sig.at("p_value");
    CHECK(p >= 0.0);
    CHECK(p <= 1.0);
    CHECK(sig.at("p_value_bonferroni").get<double>() == std::min(1.0, 2 * p));
    CHECK(sig.at("resamples") == 500);
    CHECK(invoke({"significance", "--config", c, "--held-out", "HaluEvalSumm", "--a", "NoSuchRow"}) != kExitOk);
}

TEST_CASE("runs are byte-identical across reruns and thread counts") {
    const auto dir = fresh_dir("determinism");
    put(dir / "config.yaml", ConfigText{}.str());
    const auto c = (dir / "config.yaml").string();
    const std::vector<std::string> commands{"ingest",    "run-prompts", "select-prompts", "evaluate",
                                            "calibrate", "threshbench", "report"};
    auto run = [&](const std::string& name, const std::string& jobs) {
        const auto out = dir / name;
        for (const auto& cmd : commands) {
            INFO(cmd);
            REQUIRE(invoke({cmd, "--config", c, "--output-dir", out.string(), "--jobs", jobs}) == kExitOk);
        }
        REQUIRE(invoke({"significance", "--config", c, "--output-dir", out.string(), "--jobs", jobs, "--held-out",
                     "TofuEvalMediaSum"}) == kExitOk);
        return tree(out);
    };
    const auto a = run("a", "1");
    const auto b = run("b", "1");
    const auto c8 = run("c", "8");
    CHECK(a.size() > 30);
    CHECK(a == b);
    CHECK(a == c8);
    CHECK(a.count("report/report.txt") == 1);
}
