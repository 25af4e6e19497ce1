#include "factens/cli/commands.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "factens/csv.hpp"
#include "factens/error.hpp"
#include "factens/featurize.hpp"
#include "factens/format.hpp"
#include "factens/llm.hpp"
#include "factens/metrics.hpp"
#include "factens/prompts.hpp"
#include "factens/threshbench.hpp"

namespace factens::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path data_path(const Context& ctx, const std::string& name) { return ctx.out_dir / "data" / (name + ".jsonl"); }
fs::path matrix_path(const Context& ctx, const std::string& name) { return ctx.out_dir / "features" / (name + ".csv"); }
fs::path eval_dir(const Context& ctx, const std::string& held_out) { return ctx.out_dir / "evaluate" / held_out; }

std::vector<std::string> held_out_list(const Context& ctx) {
    if (ctx.options.held_out) {
        ctx.config.dataset(*ctx.options.held_out);
        return {*ctx.options.held_out};
    }
    std::vector<std::string> all;
    for (const auto& d : ctx.config.datasets) all.push_back(d.name);
    return all;
}

std::vector<LabeledExample> load_ingested(const Context& ctx, const DatasetConfig& d) {
    const auto path = data_path(ctx, d.name);
    if (!fs::exists(path)) throw ConfigError("no ingested data for '" + d.name + "' (" + path.string() + "); run ingest first");
    return load_dataset(path, DataFormat::JsonLines, DatasetId::parse(d.name), d.split);
}

FeatureMatrix load_matrix(const Context& ctx, const std::string& name) {
    const auto path = matrix_path(ctx, name);
    if (!fs::exists(path)) throw ConfigError("no feature matrix for '" + name + "' (" + path.string() + "); run run-prompts first");
    return read_matrix_csv(path);
}

// Same values with example ids qualified by dataset.
FeatureMatrix qualify(const FeatureMatrix& m, const std::string& dataset) {
    std::vector<std::string> ids;
    ids.reserve(m.rows());
    for (const auto& id : m.example_ids()) ids.push_back(qualified_id(dataset, id));
    return {std::move(ids), m.prompt_ids(), m.values(), m.labels()};
}

std::string pct(double x, int digits = 2) { return fmt_fixed(100.0 * x, digits); }

json report_json(const EvalReport& r) { return to_json(r); }

void write_reliability(const fs::path& path, const EceResult& r, const Provenance& prov) {
    fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError(path.string(), "cannot write");
    out << "# " << prov.line() << '\n';
    csv::write_record(out, {"bin_lo", "bin_hi", "split", "count", "conf", "acc"});
    for (const auto& row : reliability_rows(r)) csv::write_record(out, row);
}

Grid effective_grid(const RunConfig& c, EnsembleKind kind) {
    auto it = c.grids.find(kind);
    Grid g = it != c.grids.end() ? it->second : default_grid(kind);
    if (auto f = c.fixed.find(kind); f != c.fixed.end()) {
        for (const auto& [key, value] : f->second) g[key] = {value};
    }
    return g;
}

std::vector<std::size_t> sizes_for(const RunConfig& c, std::size_t k) {
    std::vector<std::size_t> sizes;
    for (auto s : c.subset_sizes) sizes.push_back(std::min(s, k));
    if (sizes.empty()) sizes.push_back(k);
    std::sort(sizes.begin(), sizes.end());
    sizes.erase(std::unique(sizes.begin(), sizes.end()), sizes.end());
    return sizes;
}

std::string row_name(EnsembleKind kind, std::size_t size) { return std::string(to_string(kind)) + "@" + std::to_string(size); }

std::vector<int> verdict_labels(std::span<const std::int8_t> v) {
    std::vector<int> out;
    out.reserve(v.size());
    for (auto x : v) out.push_back(x == 1 ? 1 : 0);  // Abstain scores as inconsistent
    return out;
}

}  // namespace

std::size_t Context::jobs() const { return options.jobs.value_or(config.backend.parallelism); }

Context make_context(const CommandOptions& options, std::ostream& out) {
    Context ctx;
    ctx.options = options;
    ctx.config = load_config(options.config);
    if (options.output_dir) ctx.config.output_dir = fs::absolute(*options.output_dir);
    ctx.out_dir = ctx.config.resolve(ctx.config.output_dir);
    ctx.seeds = resolve_seeds(ctx.config, options.seed);
    ctx.prov.config_hash = config_hash(ctx.config, ctx.seeds);
    ctx.prov.seeds = ctx.seeds;
    ctx.out = &out;
    update_run_metadata(ctx.out_dir, ctx.prov);
    return ctx;
}

std::string render_table(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> width(header.size(), 0);
    auto widen = [&](const std::vector<std::string>& r) {
        for (std::size_t c = 0; c < r.size() && c < width.size(); ++c) width[c] = std::max(width[c], r[c].size());
    };
    widen(header);
    for (const auto& r : rows) widen(r);
    auto line = [&](const std::vector<std::string>& r) {
        std::string s;
        for (std::size_t c = 0; c < width.size(); ++c) {
            const std::string cell = c < r.size() ? r[c] : "";
            const std::string pad(width[c] - cell.size(), ' ');
            if (c) s += "  ";
            s += c == 0 ? cell + pad : pad + cell;
        }
        while (!s.empty() && s.back() == ' ') s.pop_back();
        return s + '\n';
    };
    std::string out = line(header);
    std::size_t total = 0;
    for (auto w : width) total += w;
    out += std::string(total + 2 * (width.size() - 1), '-') + '\n';
    for (const auto& r : rows) out += line(r);
    return out;
}

int cmd_ingest(Context& ctx) {
    json stats = json::array();
    std::vector<std::vector<std::string>> table;
    fs::create_directories(ctx.out_dir / "data");
    for (const auto& d : ctx.config.datasets) {
        auto rows = load_dataset(ctx.config.resolve(d.path), d.format, DatasetId::parse(d.name), d.split);
        const std::size_t loaded = rows.size();
        if (d.sample) rows = balanced_sample(rows, *d.sample, ctx.seeds.sample);
        const auto pos = static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const auto& e) { return e.label == 1; }));
        write_jsonl(data_path(ctx, d.name), rows);
        stats.push_back({{"dataset", d.name},
                         {"path", d.path.generic_string()},
                         {"loaded", loaded},
                         {"rows", rows.size()},
                         {"positive", pos},
                         {"negative", rows.size() - pos},
                         {"sampled", d.sample.has_value()}});
        table.push_back({d.name, std::to_string(loaded), std::to_string(rows.size()), std::to_string(pos),
                         std::to_string(rows.size() - pos),
                         rows.empty() ? "nan" : fmt_fixed(static_cast<double>(pos) / static_cast<double>(rows.size()), 3)});
    }
    const auto text = render_table({"dataset", "loaded", "rows", "consistent", "inconsistent", "pos_rate"}, table);
    *ctx.out << text;
    write_json(ctx.out_dir / "ingest.json", {{"datasets", stats}}, ctx.prov);
    write_text(ctx.out_dir / "ingest.txt", text, ctx.prov);
    update_run_metadata(ctx.out_dir, ctx.prov, {{"datasets", stats}});
    return kExitOk;
}

int cmd_run_prompts(Context& ctx) {
    const auto pool = load_pool(ctx.config.resolve(ctx.config.pool));
    ResponseCache cache(ctx.config.resolve(ctx.config.cache));
    std::unique_ptr<LlmBackend> backend;
    if (ctx.options.replay_only || ctx.config.backend.kind == "replay") {
        backend = std::make_unique<ReplayBackend>();
    } else {
        backend = std::make_unique<HttpChatBackend>(ctx.config.backend.http);
    }
    PoolRunOptions opt;
    opt.parallelism = ctx.jobs();
    opt.retry.transient_retries = ctx.config.backend.transient_retries;

    bool partial = false;
    std::vector<std::vector<std::string>> table;
    json summary = json::array();
    fs::create_directories(ctx.out_dir / "features");
    for (const auto& d : ctx.config.datasets) {
        const auto examples = load_ingested(ctx, d);
        const auto r = run_pool(pool, examples, *backend, cache, opt);
        const auto m = build_matrix(r.verdicts, examples, pool);
        write_matrix_csv(matrix_path(ctx, d.name), m, ctx.prov.line());
        const auto abstains = static_cast<std::size_t>(std::count(m.values().begin(), m.values().end(), kAbstain));

        const auto fail_path = ctx.out_dir / "features" / (d.name + ".failures.csv");
        if (!r.failures.empty()) {
            partial = true;
            std::ofstream out(fail_path, std::ios::binary);
            out << "# " << ctx.prov.line() << '\n';
            csv::write_record(out, {"example_id", "prompt_id", "message"});
            for (const auto& f : r.failures) csv::write_record(out, {f.example_id, f.prompt_id, f.message});
        } else {
            fs::remove(fail_path);
        }
        summary.push_back({{"dataset", d.name}, {"rows", m.rows()}, {"prompts", m.cols()},
                           {"abstain_cells", abstains}, {"failures", r.failures.size()}});
        table.push_back({d.name, std::to_string(m.rows()), std::to_string(m.cols()), std::to_string(abstains),
                         std::to_string(r.failures.size()), std::to_string(r.backend_calls), std::to_string(r.cache_hits)});
    }
    *ctx.out << render_table({"dataset", "rows", "prompts", "abstain", "failed", "backend_calls", "cache_hits"}, table);
    if (cache.corrupt_lines()) *ctx.out << "cache: skipped " << cache.corrupt_lines() << " corrupt line(s)\n";
    write_json(ctx.out_dir / "features" / "summary.json", {{"datasets", summary}}, ctx.prov);
    return partial ? kExitPartial : kExitOk;
}

std::vector<int> held_out_gold(const Context& ctx, const std::string& held_out) {
    return load_matrix(ctx, held_out).require_labels();
}

HeldOutResult fit_held_out(Context& ctx, const std::string& held_out) {
    const auto& cfg = ctx.config;
    cfg.dataset(held_out);

    std::vector<FeatureMatrix> parts;
    for (const auto& d : cfg.datasets) {
        if (d.name != held_out) parts.push_back(qualify(load_matrix(ctx, d.name), d.name));
    }
    // Labels are dropped here; gold is read again only at scoring time.
    const auto test = qualify(load_matrix(ctx, held_out), held_out).without_labels();

    HeldOutResult res{held_out, 0, test.example_ids(), test.prompt_ids(), {}, {}, {}, TaintGuard(held_out, test.example_ids())};
    for (std::size_t j = 0; j < test.cols(); ++j) {
        std::vector<std::int8_t> col(test.rows());
        for (std::size_t i = 0; i < test.rows(); ++i) col[i] = test.at(i, j);
        res.prompt_verdicts.push_back(std::move(col));
    }

    const auto train_raw = vstack(parts);
    if (train_raw.rows() == 0) throw MissingTrainRows(held_out);
    res.n_train = train_raw.rows();
    if (train_raw.prompt_ids() != test.prompt_ids()) throw ColumnMismatch("held-out matrix columns differ from training columns");
    const auto train_dense = impute(train_raw, cfg.impute);
    const auto& labels = train_raw.require_labels();
    const auto fold_of = stratified_folds(labels, cfg.folds, ctx.seeds.folds);
    const std::size_t threads = ctx.jobs();

    // Baseline: constant training prior.
    {
        RowResult b;
        b.name = "Baseline";
        b.kind = "Baseline";
        b.size = 0;
        res.guard.check("baseline", train_raw.example_ids());
        const double prior = static_cast<double>(std::accumulate(labels.begin(), labels.end(), 0)) /
                             static_cast<double>(labels.size());
        b.raw.assign(test.rows(), prior);
        res.rows.push_back(std::move(b));
    }

    const auto k = train_raw.cols();
    std::map<std::size_t, std::vector<std::string>> subset;
    for (auto size : sizes_for(cfg, k)) {
        if (size >= k) {
            subset[size] = train_raw.prompt_ids();
            continue;
        }
        res.guard.check("select", train_dense.example_ids());
        BestSubsetOptions opt;
        opt.folds = cfg.folds;
        opt.seed = ctx.seeds.folds;
        auto sel = best_subset(train_dense, size, opt);
        subset[size] = sel.prompt_ids;
        res.selections[size] = std::move(sel);
    }

    for (auto kind : cfg.ensemblers) {
        for (const auto& [size, ids] : subset) {
            RowResult row;
            row.name = row_name(kind, size);
            row.kind = std::string(to_string(kind));
            row.size = size;
            row.prompt_ids = ids;
            try {
                const auto train = select_columns(needs_dense(kind) ? train_dense : train_raw, ids);
                const auto grid = effective_grid(cfg, kind);
                res.guard.check("grid_search", train.example_ids());
                if (grid.empty()) {
                    row.hyper = {};
                    row.cv_balanced_accuracy = cross_val_balanced_accuracy(kind, row.hyper, train, fold_of, cfg.folds, threads);
                } else {
                    const auto gs = grid_search(kind, grid, train, cfg.folds, ctx.seeds.folds, threads);
                    row.hyper = gs.best;
                    row.cv_balanced_accuracy = gs.best_score;
                }
                res.guard.check("fit", train.example_ids());
                row.model = fit(kind, row.hyper, train);
                row.raw = predict_proba(*row.model, select_columns(test, ids));

                res.guard.check("calibrate", train.example_ids());
                const auto oof = cross_val_predict(kind, row.hyper, train, fold_of, cfg.folds, threads);
                for (auto ck : cfg.calibrators) {
                    auto c = fit_calibrator(ck, oof, labels);
                    row.calibrated[ck] = apply_all(c, row.raw);
                    row.calibrators.emplace(ck, std::move(c));
                }
            } catch (const Error& e) {
                row.error = e.what();
            }
            res.rows.push_back(std::move(row));
        }
    }
    return res;
}

int cmd_select_prompts(Context& ctx) {
    bool partial = false;
    for (const auto& held : held_out_list(ctx)) {
        std::vector<FeatureMatrix> parts;
        for (const auto& d : ctx.config.datasets) {
            if (d.name != held) parts.push_back(qualify(load_matrix(ctx, d.name), d.name));
        }
        const auto train_raw = vstack(parts);
        if (train_raw.rows() == 0) throw MissingTrainRows(held);
        const auto test_ids = qualify(load_matrix(ctx, held), held).example_ids();
        TaintGuard guard(held, test_ids);
        const auto train = impute(train_raw, ctx.config.impute);
        guard.check("select", train.example_ids());

        BestSubsetOptions opt;
        opt.folds = ctx.config.folds;
        opt.seed = ctx.seeds.folds;
        json results = json::array();
        std::vector<std::vector<std::string>> table;
        for (auto size : sizes_for(ctx.config, train.cols())) {
            try {
                const auto a = mrmr_select(train, size);
                const auto b = rfe_select(train, size, opt.rfe_base);
                const auto best = best_subset(train, size, opt);
                const double sa = subset_score(train, a.prompt_ids, opt), sb = subset_score(train, b.prompt_ids, opt);
                results.push_back({{"size", size},
                                   {"mrmr", {{"prompt_ids", a.prompt_ids}, {"cv_balanced_accuracy", sa}}},
                                   {"rfe", {{"prompt_ids", b.prompt_ids}, {"cv_balanced_accuracy", sb}}},
                                   {"chosen", to_json(best)}});
                auto join = [](const std::vector<std::string>& v) {
                    std::string s;
                    for (const auto& x : v) s += (s.empty() ? "" : ",") + x;
                    return s;
                };
                table.push_back({std::to_string(size), pct(sa), pct(sb), std::string(to_string(best.method)), join(best.prompt_ids)});
            } catch (const Error& e) {
                partial = true;
                results.push_back({{"size", size}, {"error", e.what()}});
                table.push_back({std::to_string(size), "-", "-", "error", e.what()});
            }
        }
        const auto text = "held out: " + held + "\n" +
                          render_table({"size", "mRMR_cv_ba", "RFE_cv_ba", "chosen", "prompts"}, table);
        *ctx.out << text;
        write_json(ctx.out_dir / "selection" / (held + ".json"),
                   {{"held_out", held}, {"sizes", results}, {"taint", guard.to_json()}}, ctx.prov);
        write_text(ctx.out_dir / "selection" / (held + ".txt"), text, ctx.prov);
    }
    return partial ? kExitPartial : kExitOk;
}

int cmd_evaluate(Context& ctx) {
    bool partial = false;
    for (const auto& held : held_out_list(ctx)) {
        auto res = fit_held_out(ctx, held);
        const auto gold = held_out_gold(ctx, held);
        const auto dir = eval_dir(ctx, held);

        json rows = json::array();
        std::vector<std::vector<std::string>> t_ens, t_cal;
        std::vector<std::string> cal_header{"ensembler", "raw_ece"};
        for (auto ck : ctx.config.calibrators) cal_header.push_back(std::string(to_string(ck)));

        for (const auto& row : res.rows) {
            json rj{{"name", row.name}, {"kind", row.kind}, {"size", row.size}, {"prompt_ids", row.prompt_ids},
                    {"hyper", row.hyper}, {"cv_balanced_accuracy", row.cv_balanced_accuracy}};
            if (row.error) {
                partial = true;
                rj["error"] = *row.error;
                rows.push_back(rj);
                t_ens.push_back({row.name, std::to_string(row.size), "error", "", "", "", ""});
                continue;
            }
            const auto rep = evaluate_predictions(row.raw, gold, ctx.config.ece_bins);
            rj["raw"] = report_json(rep);
            write_reliability(dir / "reliability" / (row.name + ".csv"), rep.reliability, ctx.prov);
            std::vector<std::string> cal_cells{row.name, pct(rep.ece)};
            json cj = json::object();
            for (auto ck : ctx.config.calibrators) {
                auto it = row.calibrated.find(ck);
                if (it == row.calibrated.end()) {
                    cal_cells.push_back("-");
                    continue;
                }
                const auto crep = evaluate_predictions(it->second, gold, ctx.config.ece_bins);
                cj[std::string(to_string(ck))] = report_json(crep);
                cal_cells.push_back(pct(crep.ece));
                write_reliability(dir / "reliability" / (row.name + "_" + std::string(to_string(ck)) + ".csv"),
                                  crep.reliability, ctx.prov);
            }
            rj["calibrated"] = cj;
            rows.push_back(rj);
            t_ens.push_back({row.name, std::to_string(row.size), pct(rep.balanced_accuracy),
                             pct(rep.ci95_balanced_accuracy), rep.precision_defined ? pct(rep.precision) : "nan",
                             pct(rep.recall), pct(rep.ece)});
            if (!row.calibrated.empty()) t_cal.push_back(std::move(cal_cells));
        }

        json prompts = json::array();
        std::vector<std::vector<std::string>> t_prompt;
        for (std::size_t j = 0; j < res.prompt_ids.size(); ++j) {
            const auto pred = verdict_labels(res.prompt_verdicts[j]);
            const double ba = balanced_accuracy(pred, gold);
            const double ci = binomial_ci95(ba, gold.size());
            const auto abst = std::count(res.prompt_verdicts[j].begin(), res.prompt_verdicts[j].end(), kAbstain);
            prompts.push_back({{"prompt_id", res.prompt_ids[j]}, {"balanced_accuracy", ba}, {"ci95", ci}, {"abstain", abst}});
            t_prompt.push_back({res.prompt_ids[j], pct(ba), pct(ci), std::to_string(abst)});
        }

        json selections = json::object();
        for (const auto& [size, sel] : res.selections) selections[std::to_string(size)] = to_json(sel);

        write_json(dir / "report.json",
                   {{"held_out", held}, {"n_train", res.n_train}, {"n_test", gold.size()}, {"rows", rows},
                    {"prompts", prompts}, {"selections", selections}},
                   ctx.prov);
        write_json(dir / "taint.json", res.guard.to_json(), ctx.prov);

        // Per-example predictions: raw, calibrated, and individual prompt verdicts.
        {
            std::vector<std::string> header{"example_id", "label"};
            std::vector<const std::vector<double>*> cols;
            for (const auto& row : res.rows) {
                if (row.error) continue;
                header.push_back(row.name);
                cols.push_back(&row.raw);
                for (const auto& [ck, v] : row.calibrated) {
                    header.push_back(row.name + "/" + std::string(to_string(ck)));
                    cols.push_back(&v);
                }
            }
            for (const auto& p : res.prompt_ids) header.push_back("prompt:" + p);
            fs::create_directories(dir);
            std::ofstream out(dir / "predictions.csv", std::ios::binary);
            out << "# " << ctx.prov.line() << '\n';
            csv::write_record(out, header);
            for (std::size_t i = 0; i < res.test_ids.size(); ++i) {
                csv::Record rec{res.test_ids[i], std::to_string(gold[i])};
                for (const auto* c : cols) rec.push_back(fmt_num((*c)[i]));
                for (const auto& v : res.prompt_verdicts) rec.push_back(v[i] == kAbstain ? "" : std::to_string(v[i]));
                csv::write_record(out, rec);
            }
        }

        std::string text = "held out: " + held + " (train " + std::to_string(res.n_train) + ", test " +
                           std::to_string(gold.size()) + ")\n\n";
        text += render_table({"ensembler", "size", "bal_acc", "ci95", "precision", "recall", "ece"}, t_ens);
        if (!t_cal.empty()) text += "\n" + render_table(cal_header, t_cal);
        text += "\n" + render_table({"prompt", "bal_acc", "ci95", "abstain"}, t_prompt);
        *ctx.out << text << '\n';
        write_text(dir / "tables.txt", text, ctx.prov);
    }
    return partial ? kExitPartial : kExitOk;
}

int cmd_calibrate(Context& ctx) {
    bool partial = false;
    for (const auto& held : held_out_list(ctx)) {
        auto res = fit_held_out(ctx, held);
        const auto gold = held_out_gold(ctx, held);
        const auto dir = ctx.out_dir / "calibrate" / held;
        std::vector<std::string> header{"ensembler", "raw_ece"};
        for (auto ck : ctx.config.calibrators) header.push_back(std::string(to_string(ck)));
        std::vector<std::vector<std::string>> table;
        for (const auto& row : res.rows) {
            if (row.error) {
                partial = true;
                continue;
            }
            if (!row.model) continue;
            json doc{{"ensembler", row.name}, {"model", to_json(*row.model)}, {"calibrators", json::object()}};
            std::vector<std::string> cells{row.name, pct(expected_calibration_error(row.raw, gold, ctx.config.ece_bins).ece)};
            for (auto ck : ctx.config.calibrators) {
                const auto& c = row.calibrators.at(ck);
                doc["calibrators"][std::string(to_string(ck))] = to_json(c);
                cells.push_back(pct(expected_calibration_error(row.calibrated.at(ck), gold, ctx.config.ece_bins).ece));
            }
            write_json(dir / (row.name + ".json"), doc, ctx.prov);
            table.push_back(std::move(cells));
        }
        const auto text = "held out: " + held + " (ECE x100, M=" + std::to_string(ctx.config.ece_bins) + ")\n" +
                          render_table(header, table);
        *ctx.out << text << '\n';
        write_text(dir / "ece.txt", text, ctx.prov);
    }
    return partial ? kExitPartial : kExitOk;
}

int cmd_threshbench(Context& ctx) {
    if (!ctx.config.score_tables || !ctx.config.score_ranges)
        throw ConfigError("threshbench needs threshbench.scores and threshbench.ranges in the config");
    const auto tables = load_score_tables(ctx.config.resolve(*ctx.config.score_tables),
                                          ctx.config.resolve(*ctx.config.score_ranges));
    const auto records = run_threshbench(tables, ctx.config.pooling);
    const auto dir = ctx.out_dir / "threshbench";
    fs::create_directories(dir);
    write_delta_csv(dir / "deltas.csv", records, ctx.prov.line());

    json arr = json::array();
    std::vector<std::vector<std::string>> table;
    for (const auto& r : records) {
        arr.push_back({{"model", r.model},
                       {"dataset", r.dataset},
                       {"on_test", {{"threshold", r.on_test.threshold}, {"balanced_accuracy", r.on_test.balanced_accuracy}}},
                       {"at_center", {{"threshold", r.at_center.threshold}, {"balanced_accuracy", r.at_center.balanced_accuracy}}},
                       {"on_train", {{"threshold", r.on_train.threshold}, {"balanced_accuracy", r.on_train.balanced_accuracy}}},
                       {"delta_center", r.delta_center},
                       {"delta_train", r.delta_train}});
        table.push_back({r.model, r.dataset, pct(r.on_test.balanced_accuracy), pct(r.at_center.balanced_accuracy),
                         pct(r.on_train.balanced_accuracy), pct(r.delta_center), pct(r.delta_train)});
    }
    write_json(dir / "deltas.json", {{"pooling", ctx.config.pooling == TrainPooling::Pooled ? "pooled" : "averaged"}, {"records", arr}}, ctx.prov);
    const auto text = render_table({"model", "dataset", "on_test", "at_center", "on_train", "d_center", "d_train"}, table);
    *ctx.out << text;
    write_text(dir / "deltas.txt", text, ctx.prov);
    return kExitOk;
}

int cmd_significance(Context& ctx) {
    if (!ctx.options.held_out) throw ConfigError("significance needs --held-out");
    const auto held = *ctx.options.held_out;
    ctx.config.dataset(held);
    const auto dir = eval_dir(ctx, held);
    const auto path = dir / "predictions.csv";
    if (!fs::exists(path)) throw ConfigError("no predictions for '" + held + "' (" + path.string() + "); run evaluate first");
    const auto t = csv::read_table(path);
    const int c_label = t.column("label");

    // Defaults: best ensembler row against the best individual prompt.
    auto pick_default = [&](bool prompt) -> std::string {
        std::ifstream in(dir / "report.json");
        const auto rep = json::parse(in);
        std::string best;
        double best_ba = -1;
        if (prompt) {
            for (const auto& p : rep.at("prompts")) {
                if (p.at("balanced_accuracy").get<double>() > best_ba) {
                    best_ba = p.at("balanced_accuracy").get<double>();
                    best = "prompt:" + p.at("prompt_id").get<std::string>();
                }
            }
        } else {
            for (const auto& r : rep.at("rows")) {
                if (!r.contains("raw") || r.at("kind") == "Baseline") continue;
                if (r.at("raw").at("balanced_accuracy").get<double>() > best_ba) {
                    best_ba = r.at("raw").at("balanced_accuracy").get<double>();
                    best = r.at("name").get<std::string>();
                }
            }
        }
        if (best.empty()) throw ConfigError("significance: no default comparison available");
        return best;
    };
    const auto name_a = ctx.options.a ? *ctx.options.a : pick_default(false);
    const auto name_b = ctx.options.b ? *ctx.options.b : pick_default(true);
    const int ca = t.column(name_a), cb = t.column(name_b);
    if (ca < 0) throw ConfigError("significance: no column '" + name_a + "' in " + path.string());
    if (cb < 0) throw ConfigError("significance: no column '" + name_b + "' in " + path.string());

    std::vector<int> pa, pb, gold;
    auto as_label = [](const std::string& cell) {
        if (cell.empty()) return 0;
        return std::stod(cell) >= 0.5 ? 1 : 0;
    };
    for (const auto& r : t.rows) {
        gold.push_back(r[c_label] == "1");
        pa.push_back(as_label(r[ca]));
        pb.push_back(as_label(r[cb]));
    }
    BootstrapOptions opt;
    opt.resamples = ctx.config.resamples;
    opt.seed = ctx.seeds.bootstrap;
    opt.comparisons = ctx.config.comparisons;
    opt.sided = ctx.config.sided;
    opt.threads = ctx.jobs();
    const auto r = bootstrap_compare(pa, pb, gold, opt);

    auto file_part = [](std::string s) {
        for (auto& ch : s) {
            if (ch == '/' || ch == ':') ch = '_';
        }
        return s;
    };
    json doc = to_json(r);
    doc["held_out"] = held;
    doc["a"] = name_a;
    doc["b"] = name_b;
    doc["balanced_accuracy_a"] = balanced_accuracy(pa, gold);
    doc["balanced_accuracy_b"] = balanced_accuracy(pb, gold);
    write_json(ctx.out_dir / "significance" / (held + "__" + file_part(name_a) + "__vs__" + file_part(name_b) + ".json"),
               doc, ctx.prov);
    *ctx.out << render_table({"held_out", "a", "b", "delta", "p", "p_bonferroni", "resamples"},
                             {{held, name_a, name_b, pct(r.delta_observed), fmt_fixed(r.p_value, 4),
                               fmt_fixed(r.p_value_bonferroni, 4), std::to_string(r.resamples)}});
    return kExitOk;
}

int cmd_report(Context& ctx) {
    std::vector<std::string> datasets;
    std::map<std::string, json> reports;
    for (const auto& d : ctx.config.datasets) {
        const auto path = eval_dir(ctx, d.name) / "report.json";
        if (!fs::exists(path)) continue;
        std::ifstream in(path);
        reports[d.name] = json::parse(in);
        datasets.push_back(d.name);
    }
    if (datasets.empty()) throw ConfigError("report: no evaluate outputs under " + (ctx.out_dir / "evaluate").string());

    std::vector<std::string> row_order;
    std::map<std::string, std::map<std::string, json>> by_row;
    for (const auto& ds : datasets) {
        for (const auto& r : reports[ds].at("rows")) {
            const auto name = r.at("name").get<std::string>();
            if (!by_row.count(name)) row_order.push_back(name);
            by_row[name][ds] = r;
        }
    }

    // Balanced accuracy with CI, x100.
    std::vector<std::string> header{"ensembler"};
    header.insert(header.end(), datasets.begin(), datasets.end());
    std::vector<std::vector<std::string>> t_ba, t_ece;
    json summary = json::object();
    for (const auto& name : row_order) {
        std::vector<std::string> cells{name};
        for (const auto& ds : datasets) {
            auto it = by_row[name].find(ds);
            if (it == by_row[name].end() || !it->second.contains("raw")) {
                cells.push_back("-");
                continue;
            }
            const auto& raw = it->second.at("raw");
            cells.push_back(pct(raw.at("balanced_accuracy").get<double>(), 1) + " ± " +
                            pct(raw.at("ci95").at("balanced_accuracy").get<double>(), 1));
            summary[name][ds] = {{"balanced_accuracy", raw.at("balanced_accuracy")}, {"ece", raw.at("ece")}};
        }
        t_ba.push_back(std::move(cells));
    }

    // ECE before and after each calibrator, x100.
    std::vector<std::string> ece_header{"ensembler", "calibration"};
    ece_header.insert(ece_header.end(), datasets.begin(), datasets.end());
    for (const auto& name : row_order) {
        std::vector<std::string> variants{"raw"};
        for (auto ck : ctx.config.calibrators) variants.push_back(std::string(to_string(ck)));
        for (const auto& v : variants) {
            std::vector<std::string> cells{name, v};
            bool any = false;
            for (const auto& ds : datasets) {
                auto it = by_row[name].find(ds);
                const json* rep = nullptr;
                if (it != by_row[name].end()) {
                    if (v == "raw" && it->second.contains("raw")) rep = &it->second.at("raw");
                    if (v != "raw" && it->second.contains("calibrated") && it->second.at("calibrated").contains(v))
                        rep = &it->second.at("calibrated").at(v);
                }
                cells.push_back(rep ? pct(rep->at("ece").get<double>()) : "-");
                any = any || rep;
            }
            if (any) t_ece.push_back(std::move(cells));
        }
    }

    // Best individual prompt against the best ensembler.
    std::vector<std::vector<std::string>> t_gain;
    json gains = json::array();
    for (const auto& ds : datasets) {
        std::string bp, be;
        double bpa = -1, bea = -1;
        for (const auto& p : reports[ds].at("prompts")) {
            if (p.at("balanced_accuracy").get<double>() > bpa) {
                bpa = p.at("balanced_accuracy").get<double>();
                bp = p.at("prompt_id").get<std::string>();
            }
        }
        for (const auto& r : reports[ds].at("rows")) {
            if (!r.contains("raw") || r.at("kind") == "Baseline") continue;
            if (r.at("raw").at("balanced_accuracy").get<double>() > bea) {
                bea = r.at("raw").at("balanced_accuracy").get<double>();
                be = r.at("name").get<std::string>();
            }
        }
        if (be.empty() || bp.empty()) continue;
        gains.push_back({{"dataset", ds}, {"best_prompt", bp}, {"best_prompt_ba", bpa}, {"best_ensembler", be},
                         {"best_ensembler_ba", bea}, {"gain", bea - bpa}});
        t_gain.push_back({ds, bp, pct(bpa, 1), be, pct(bea, 1), (bea >= bpa ? "+" : "") + pct(bea - bpa, 1)});
    }

    std::string text = "Balanced accuracy (x100, 95% CI)\n" + render_table(header, t_ba);
    text += "\nExpected calibration error (x100, M=" + std::to_string(ctx.config.ece_bins) + ")\n" +
            render_table(ece_header, t_ece);
    text += "\nBest prompt vs best ensembler\n" +
            render_table({"dataset", "prompt", "prompt_ba", "ensembler", "ensembler_ba", "gain"}, t_gain);
    *ctx.out << text;
    write_text(ctx.out_dir / "report" / "report.txt", text, ctx.prov);
    write_json(ctx.out_dir / "report" / "report.json", {{"datasets", datasets}, {"rows", summary}, {"gains", gains}}, ctx.prov);
    return kExitOk;
}

}  // namespace factens::cli
