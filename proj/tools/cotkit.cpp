// cotkit - pipeline driver for reasoning-length analysis and head editing
//
// subcommands: extract-directions, steer-sweep, rank-heads, edit, eval,
//              report, make-planted
// exit codes:  0 success, 1 domain error, 2 usage error

#include "cotkit/attribution.hpp"
#include "cotkit/corpus.hpp"
#include "cotkit/directions.hpp"
#include "cotkit/edit.hpp"
#include "cotkit/eval.hpp"
#include "cotkit/forward.hpp"
#include "cotkit/model.hpp"
#include "cotkit/planted.hpp"
#include "cotkit/steering.hpp"
#include "cotkit/tokenizer.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::vector<float> parse_float_list(const std::string & csv) {
    std::vector<float> out;
    std::stringstream  ss(csv);
    std::string        item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        out.push_back(std::stof(item));
    }
    return out;
}

std::vector<long long> parse_int_list(const std::string & csv) {
    std::vector<long long> out;
    std::stringstream      ss(csv);
    std::string            item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        out.push_back(std::stoll(item));
    }
    return out;
}

std::set<int> parse_layer_mask(const std::string & spec, int n_layers) {
    if (spec == "all") {
        return cotkit::SteeringSpec::all_layers(n_layers);
    }
    std::set<int>     out;
    std::stringstream ss(spec);
    std::string       item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) {
            continue;
        }
        out.insert(std::stoi(item));
    }
    return out;
}

void parse_kinds(const std::string & kinds, cotkit::SteeringSpec & spec) {
    if (kinds == "attn") {
        spec.use_attn = true;
        spec.use_mlp  = false;
    } else if (kinds == "mlp") {
        spec.use_attn = false;
        spec.use_mlp  = true;
    } else if (kinds == "attn+mlp" || kinds == "both") {
        spec.use_attn = true;
        spec.use_mlp  = true;
    } else {
        throw cotkit::error("unknown kinds '" + kinds + "', expected attn, mlp or attn+mlp");
    }
}

cotkit::GenConfig make_gen_config(int max_new, double temperature, uint64_t seed) {
    cotkit::GenConfig cfg;
    cfg.max_new_tokens = max_new;
    if (temperature > 0.0) {
        cfg.mode        = cotkit::DecodeMode::temperature;
        cfg.temperature = float(temperature);
    } else {
        cfg.mode = cotkit::DecodeMode::greedy;
    }
    cfg.seed = seed;
    cfg.stop_tokens.insert(cotkit::tok::EOS);
    return cfg;
}

struct SteerFlags {
    std::string dirs_path;
    double      alpha = 0.0;
    std::string kinds  = "attn";
    std::string layers = "all";
    bool        generated_only = false;
};

void add_steer_flags(CLI::App * cmd, SteerFlags & flags, bool require_dirs) {
    auto * opt = cmd->add_option("--dirs", flags.dirs_path, "directions file");
    if (require_dirs) {
        opt->required();
    }
    cmd->add_option("--alpha", flags.alpha, "steering strength");
    cmd->add_option("--kinds", flags.kinds, "attn, mlp or attn+mlp")->capture_default_str();
    cmd->add_option("--layers", flags.layers, "'all' or comma-separated layer list")
        ->capture_default_str();
    cmd->add_flag("--generated-only", flags.generated_only,
                  "steer generated positions only, not the prompt");
}

void write_corpus_jsonl(const std::vector<cotkit::ResponseRecord> & records,
                        const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw cotkit::error("cannot write " + path);
    }
    for (const cotkit::ResponseRecord & r : records) {
        json j;
        j["id"]          = r.id;
        j["problem"]     = r.problem;
        j["response"]    = r.response;
        j["gold_answer"] = r.gold_answer;
        f << j.dump() << "\n";
    }
}

int cmd_extract_directions(const std::string & model_dir, const std::string & corpus_path,
                           int long_min, int short_max, const std::string & out,
                           const std::string & partition_report, int jobs) {
    const cotkit::Model model = cotkit::load_checkpoint(model_dir);
    const std::vector<cotkit::ResponseRecord> records = cotkit::load_corpus(corpus_path);
    const cotkit::CorpusPartition part = cotkit::partition_by_length(records, long_min, short_max);
    if (!partition_report.empty()) {
        cotkit::write_partition_report(part, partition_report);
    }
    if (part.long_set.empty() || part.short_set.empty()) {
        throw cotkit::error("partition left an empty side: " + std::to_string(part.long_set.size()) +
                            " long / " + std::to_string(part.short_set.size()) + " short");
    }
    using cotkit::RepKind;
    const auto long_attn  = cotkit::mean_cot_representation(model, part.long_set, RepKind::attn, jobs);
    const auto short_attn = cotkit::mean_cot_representation(model, part.short_set, RepKind::attn, jobs);
    const auto long_mlp   = cotkit::mean_cot_representation(model, part.long_set, RepKind::mlp, jobs);
    const auto short_mlp  = cotkit::mean_cot_representation(model, part.short_set, RepKind::mlp, jobs);

    cotkit::DirectionSet dirs     = cotkit::extract_directions(long_attn, short_attn, long_mlp, short_mlp);
    dirs.provenance.long_min      = long_min;
    dirs.provenance.short_max     = short_max;
    cotkit::save_directions(dirs, out);

    int degenerate = 0;
    for (int l = 0; l < dirs.n_layers; ++l) {
        degenerate += dirs.attn_degenerate[l] || dirs.mlp_degenerate[l] ? 1 : 0;
    }
    std::printf("directions: %d layers x %d dims from %d long / %d short responses (%d degenerate) -> %s\n",
                dirs.n_layers, dirs.hidden_dim, dirs.provenance.n_long, dirs.provenance.n_short,
                degenerate, out.c_str());
    return 0;
}

int cmd_steer_sweep(const std::string & model_dir, const std::string & problems_path,
                    const SteerFlags & steer, const std::string & alphas_csv, int budget,
                    int max_new, int runs, double temperature, uint64_t seed,
                    const std::string & out, const std::string & format, int jobs) {
    const cotkit::Model model = cotkit::load_checkpoint(model_dir);
    const std::vector<cotkit::ResponseRecord> problems = cotkit::load_problems(problems_path);
    const cotkit::DirectionSet dirs = cotkit::load_directions(steer.dirs_path);

    cotkit::SteeringSpec spec;
    parse_kinds(steer.kinds, spec);
    spec.layer_mask     = parse_layer_mask(steer.layers, dirs.n_layers);
    spec.generated_only = steer.generated_only;

    cotkit::RunConfig run_cfg;
    run_cfg.budget = budget;
    run_cfg.n_runs = runs;
    run_cfg.seed   = seed;

    const cotkit::GenConfig gen_cfg =
        make_gen_config(max_new > 0 ? max_new : budget + 256, temperature, seed);

    const cotkit::SweepReport report = cotkit::sweep_alpha(
        model, problems, parse_float_list(alphas_csv), spec, dirs, run_cfg, gen_cfg, jobs);

    if (format == "json") {
        std::ofstream f(out, std::ios::trunc);
        if (!f) {
            throw cotkit::error("cannot write " + out);
        }
        f << cotkit::sweep_json(report);
    } else {
        cotkit::write_sweep_csv(report, out);
    }
    std::printf("sweep: %zu alphas x %zu problems -> %s\n", report.rows.size(), problems.size(),
                out.c_str());
    return 0;
}

int cmd_rank_heads(const std::string & model_dir, const std::string & corpus_path,
                   const std::string & dirs_path, int long_min, int short_max, double fraction,
                   const std::string & plan_out, const std::string & heatmap,
                   const std::string & partition_report, int jobs) {
    const cotkit::Model model = cotkit::load_checkpoint(model_dir);
    const std::vector<cotkit::ResponseRecord> records = cotkit::load_corpus(corpus_path);
    const cotkit::DirectionSet dirs = cotkit::load_directions(dirs_path);

    const cotkit::CorpusPartition part = cotkit::partition_by_length(records, long_min, short_max);
    if (!partition_report.empty()) {
        cotkit::write_partition_report(part, partition_report);
    }
    if (part.short_set.empty()) {
        throw cotkit::error("no short responses to attribute over");
    }

    const cotkit::HeadMeanContribution contrib =
        cotkit::average_head_contribution(model, part.short_set, jobs);
    const cotkit::HeadScoreTable table = cotkit::short_alignment_scores(contrib, dirs);
    if (!heatmap.empty()) {
        cotkit::export_heatmap(table, heatmap);
    }
    const cotkit::EditPlan plan = cotkit::select_top_heads(table, fraction);
    cotkit::save_edit_plan(plan, plan_out);
    std::printf("rank-heads: %zu of %d heads selected (fraction %.4f) -> %s\n",
                plan.entries.size(), table.n_layers * table.n_heads, fraction, plan_out.c_str());
    return 0;
}

int cmd_edit(const std::string & model_dir, const std::string & plan_path,
             const std::string & dirs_path, const std::string & out_dir,
             const std::string & report_path, const std::string & timestamp) {
    const cotkit::Model        model = cotkit::load_checkpoint(model_dir);
    const cotkit::EditPlan     plan  = cotkit::load_edit_plan(plan_path);
    const cotkit::DirectionSet dirs  = cotkit::load_directions(dirs_path);

    const auto [edited, report] = cotkit::apply_edit_plan(model, plan, dirs, timestamp);
    cotkit::save_checkpoint(edited, out_dir);

    if (!report_path.empty()) {
        json j;
        j["edited_param_count"] = report.edited_param_count;
        j["total_param_count"]  = report.total_param_count;
        j["fraction_edited"]    = report.fraction_edited;
        j["plan_hash"]          = report.plan_hash;
        j["directions_hash"]    = report.directions_hash;
        json heads              = json::array();
        for (const cotkit::EditedHeadReport & h : report.edited_heads) {
            heads.push_back(
                {{"layer", h.layer}, {"head", h.head}, {"frobenius_delta", h.frobenius_delta}});
        }
        j["edited_heads"] = heads;
        std::ofstream f(report_path, std::ios::trunc);
        if (!f) {
            throw cotkit::error("cannot write " + report_path);
        }
        f << j.dump(2) << "\n";
    }
    std::printf("edit: %zu heads, %zu of %zu params (%.6f%%) -> %s\n", report.edited_heads.size(),
                report.edited_param_count, report.total_param_count,
                100.0 * report.fraction_edited, out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string & model_dir, const std::string & problems_path, int budget,
             int max_new, int runs, double temperature, uint64_t seed,
             const std::string & wait_mode, int wait_threshold, int wait_repeat,
             const SteerFlags & steer, const std::string & out, const std::string & curve_path,
             const std::string & percentiles_path, const std::string & thresholds_csv, int jobs) {
    const cotkit::Model model = cotkit::load_checkpoint(model_dir);
    const std::vector<cotkit::ResponseRecord> problems = cotkit::load_problems(problems_path);

    cotkit::RunConfig run_cfg;
    run_cfg.budget = budget;
    run_cfg.n_runs = runs;
    run_cfg.seed   = seed;
    if (wait_mode == "append") {
        run_cfg.wait_mode           = cotkit::WaitMode::append_below;
        run_cfg.wait_threshold      = wait_threshold;
        run_cfg.wait_max_injections = wait_repeat;
    } else if (wait_mode != "off") {
        throw cotkit::error("unknown wait mode '" + wait_mode + "', expected off or append");
    }

    const cotkit::GenConfig gen_cfg =
        make_gen_config(max_new > 0 ? max_new : budget + 256, temperature, seed);

    cotkit::SteeringHook hook;
    cotkit::ResidualHook rh;
    const cotkit::ResidualHook * hook_ptr = nullptr;
    if (!steer.dirs_path.empty()) {
        const cotkit::DirectionSet dirs = cotkit::load_directions(steer.dirs_path);
        cotkit::SteeringSpec       spec;
        spec.alpha = float(steer.alpha);
        parse_kinds(steer.kinds, spec);
        spec.layer_mask     = parse_layer_mask(steer.layers, dirs.n_layers);
        spec.generated_only = steer.generated_only;
        hook                = cotkit::make_steering_hook(spec, dirs);
        rh                  = hook.residual_hook();
        hook_ptr            = &rh;
    }

    const std::vector<cotkit::EvalRecord> records =
        cotkit::run_eval(model, problems, run_cfg, gen_cfg, hook_ptr, jobs);
    cotkit::write_eval_records(records, out);

    if (!curve_path.empty()) {
        const std::vector<long long> thresholds =
            thresholds_csv.empty()
                ? std::vector<long long>{100, 200, 500, 1000, 2000, 4000, 8000, 16384}
                : parse_int_list(thresholds_csv);
        cotkit::write_curve_csv(cotkit::cumulative_accuracy_curve(records, thresholds), curve_path);
    }
    if (!percentiles_path.empty()) {
        cotkit::write_percentile_csv(cotkit::shortest_percentile_stats(records), percentiles_path);
    }

    int correct = 0;
    for (const cotkit::EvalRecord & r : records) {
        correct += r.correct ? 1 : 0;
    }
    std::printf("eval: %zu records, accuracy %.4f -> %s\n", records.size(),
                records.empty() ? 0.0 : double(correct) / double(records.size()), out.c_str());
    return 0;
}

int cmd_report(const std::vector<std::string> & inputs, const std::string & out_dir,
               const std::string & percents_csv, const std::string & thresholds_csv) {
    std::vector<cotkit::LabeledRuns> sets;
    for (const std::string & spec : inputs) {
        const size_t eq = spec.find('=');
        if (eq == std::string::npos) {
            throw cotkit::error("input '" + spec + "' is not label=path");
        }
        cotkit::LabeledRuns set;
        set.label = spec.substr(0, eq);
        const std::vector<cotkit::EvalRecord> records =
            cotkit::load_eval_records(spec.substr(eq + 1));
        std::map<int, std::vector<cotkit::EvalRecord>> by_run;
        for (const cotkit::EvalRecord & r : records) {
            by_run[r.run].push_back(r);
        }
        for (auto & [run, recs] : by_run) {
            set.runs.push_back(std::move(recs));
        }
        sets.push_back(std::move(set));
    }

    cotkit::SummaryOptions options;
    options.out_dir = out_dir;
    if (!percents_csv.empty()) {
        options.percents.clear();
        for (long long p : parse_int_list(percents_csv)) {
            options.percents.push_back(int(p));
        }
    }
    if (!thresholds_csv.empty()) {
        options.curve_thresholds = parse_int_list(thresholds_csv);
    }

    const cotkit::EvalSummary summary = cotkit::summarize(sets, options);
    for (const cotkit::SummaryRow & row : summary.rows) {
        std::printf("%-16s acc %s   len %.1f ± %.1f   (n=%d x %d runs)\n", row.label.c_str(),
                    row.acc_fmt.c_str(), row.len_mean, row.len_sd, row.n_records / row.n_runs,
                    row.n_runs);
    }
    std::printf("report -> %s\n", summary.summary_json_file.c_str());
    return 0;
}

int cmd_make_planted(const std::string & out_dir, uint64_t seed, int n_layers, int n_heads,
                     int dim, int max_seq, int layer_star, int head_star,
                     const std::string & corpus_out, int n_long, int n_short) {
    cotkit::PlantedDims dims;
    dims.n_layers    = n_layers;
    dims.n_heads     = n_heads;
    dims.hidden_dim  = dim;
    dims.max_seq_len = max_seq;

    const std::vector<float> u = cotkit::random_unit_centered(seed, dim);
    const cotkit::Model model = cotkit::build_planted_model(seed, u, {layer_star, head_star}, dims);
    cotkit::save_checkpoint(model, out_dir);

    cotkit::PlantedGroundTruth gt;
    gt.u     = u;
    gt.layer = layer_star;
    gt.head  = head_star;
    cotkit::save_ground_truth(gt, (fs::path(out_dir) / "planted.json").string());

    cotkit::PlantedCorpusSpec corpus_spec;
    corpus_spec.n_long  = n_long;
    corpus_spec.n_short = n_short;
    const std::string corpus_path =
        corpus_out.empty() ? (fs::path(out_dir) / "corpus.jsonl").string() : corpus_out;
    write_corpus_jsonl(cotkit::make_planted_corpus(seed + 1, corpus_spec), corpus_path);

    std::printf("planted: L=%d H=%d d=%d head (%d,%d) -> %s (corpus %s)\n", n_layers, n_heads, dim,
                layer_star, head_star, out_dir.c_str(), corpus_path.c_str());
    return 0;
}

} // namespace

int main(int argc, char ** argv) {
    CLI::App app{"reasoning-length directions, steering, head attribution and weight edits "
                 "for small transformer checkpoints"};
    app.require_subcommand(1);

    // extract-directions
    auto * ext = app.add_subcommand("extract-directions",
                                    "partition a corpus by CoT length and extract per-layer directions");
    std::string ext_model, ext_corpus, ext_out, ext_report;
    int         ext_long_min = 1000, ext_short_max = 100, ext_jobs = 1;
    ext->add_option("--model", ext_model, "checkpoint directory")->required();
    ext->add_option("--corpus", ext_corpus, "response corpus JSONL")->required();
    ext->add_option("--long-min", ext_long_min, "long set needs CoT length > this")
        ->capture_default_str();
    ext->add_option("--short-max", ext_short_max, "short set needs CoT length < this")
        ->capture_default_str();
    ext->add_option("--out", ext_out, "directions file to write")->required();
    ext->add_option("--partition-report", ext_report, "write partition report JSON here");
    ext->add_option("--jobs", ext_jobs, "worker threads")->capture_default_str();

    // steer-sweep
    auto * swp = app.add_subcommand("steer-sweep", "evaluate steering across an alpha grid");
    std::string swp_model, swp_problems, swp_out, swp_format = "csv";
    std::string swp_alphas = "-0.08,-0.06,-0.04,-0.02,0,0.02,0.04,0.06,0.08";
    SteerFlags  swp_steer;
    int         swp_budget = 8192, swp_max_new = 0, swp_runs = 1, swp_jobs = 1;
    double      swp_temperature = 0.0;
    uint64_t    swp_seed        = 0;
    swp->add_option("--model", swp_model, "checkpoint directory")->required();
    swp->add_option("--problems", swp_problems, "problems JSONL")->required();
    add_steer_flags(swp, swp_steer, /*require_dirs=*/true);
    swp->add_option("--alphas", swp_alphas, "comma-separated alpha grid")->capture_default_str();
    swp->add_option("--budget", swp_budget, "think-token budget")->capture_default_str();
    swp->add_option("--max-new", swp_max_new, "total new-token cap (default budget+256)");
    swp->add_option("--runs", swp_runs, "sampling runs per problem")->capture_default_str();
    swp->add_option("--temperature", swp_temperature, "0 = greedy")->capture_default_str();
    swp->add_option("--seed", swp_seed, "RNG seed")->capture_default_str();
    swp->add_option("--out", swp_out, "sweep report file")->required();
    swp->add_option("--format", swp_format, "csv or json")->capture_default_str();
    swp->add_option("--jobs", swp_jobs, "worker threads")->capture_default_str();

    // rank-heads
    auto * rank = app.add_subcommand("rank-heads",
                                     "score heads against the short-reasoning direction and pick the top fraction");
    std::string rank_model, rank_corpus, rank_dirs, rank_plan, rank_heatmap, rank_report;
    int         rank_long_min = 1000, rank_short_max = 100, rank_jobs = 1;
    double      rank_fraction = 0.04;
    rank->add_option("--model", rank_model, "checkpoint directory")->required();
    rank->add_option("--corpus", rank_corpus, "response corpus JSONL")->required();
    rank->add_option("--dirs", rank_dirs, "directions file")->required();
    rank->add_option("--long-min", rank_long_min, "long threshold")->capture_default_str();
    rank->add_option("--short-max", rank_short_max, "short threshold")->capture_default_str();
    rank->add_option("--fraction", rank_fraction, "fraction of heads to select")
        ->capture_default_str();
    rank->add_option("--plan-out", rank_plan, "edit plan JSON to write")->required();
    rank->add_option("--heatmap", rank_heatmap, "write layer,head,score CSV here");
    rank->add_option("--partition-report", rank_report, "write partition report JSON here");
    rank->add_option("--jobs", rank_jobs, "worker threads")->capture_default_str();

    // edit
    auto * edt = app.add_subcommand("edit", "project the short-reasoning direction out of planned heads");
    std::string edt_model, edt_plan, edt_dirs, edt_out, edt_report;
    std::string edt_timestamp = "1970-01-01T00:00:00Z";
    edt->add_option("--model", edt_model, "checkpoint directory")->required();
    edt->add_option("--plan", edt_plan, "edit plan JSON")->required();
    edt->add_option("--dirs", edt_dirs, "directions file")->required();
    edt->add_option("--out", edt_out, "output checkpoint directory")->required();
    edt->add_option("--report", edt_report, "write edit report JSON here");
    edt->add_option("--timestamp", edt_timestamp, "lineage timestamp (fixed default keeps runs reproducible)")
        ->capture_default_str();

    // eval
    auto * evl = app.add_subcommand("eval", "generate answers and score them");
    std::string evl_model, evl_problems, evl_out, evl_curve, evl_pct, evl_thresholds;
    std::string evl_wait_mode = "off";
    SteerFlags  evl_steer;
    int    evl_budget = 8192, evl_max_new = 0, evl_runs = 1, evl_wait_threshold = 500;
    int    evl_wait_repeat = 1, evl_jobs = 1;
    double evl_temperature = 0.0;
    uint64_t evl_seed      = 0;
    evl->add_option("--model", evl_model, "checkpoint directory")->required();
    evl->add_option("--problems", evl_problems, "problems JSONL")->required();
    evl->add_option("--budget", evl_budget, "think-token budget")->capture_default_str();
    evl->add_option("--max-new", evl_max_new, "total new-token cap (default budget+256)");
    evl->add_option("--runs", evl_runs, "sampling runs (greedy collapses to 1)")
        ->capture_default_str();
    evl->add_option("--temperature", evl_temperature, "0 = greedy")->capture_default_str();
    evl->add_option("--seed", evl_seed, "RNG seed; run r samples with seed+r")
        ->capture_default_str();
    evl->add_option("--wait-mode", evl_wait_mode, "off or append")->capture_default_str();
    evl->add_option("--wait-threshold", evl_wait_threshold,
                    "inject Wait when the span closes under this many tokens")
        ->capture_default_str();
    evl->add_option("--wait-repeat", evl_wait_repeat, "max Wait injections per response")
        ->capture_default_str();
    add_steer_flags(evl, evl_steer, /*require_dirs=*/false);
    evl->add_option("--out", evl_out, "results JSONL")->required();
    evl->add_option("--curve", evl_curve, "write cumulative-accuracy curve CSV here");
    evl->add_option("--percentiles", evl_pct, "write shortest-percentile CSV here");
    evl->add_option("--thresholds", evl_thresholds, "comma-separated curve thresholds");
    evl->add_option("--jobs", evl_jobs, "worker threads")->capture_default_str();

    // report
    auto * rpt = app.add_subcommand("report", "aggregate results files into summary tables");
    std::vector<std::string> rpt_inputs;
    std::string              rpt_out_dir, rpt_percents, rpt_thresholds;
    rpt->add_option("--input", rpt_inputs, "label=results.jsonl (repeatable; first is baseline)")
        ->required();
    rpt->add_option("--out-dir", rpt_out_dir, "directory for summary artifacts")->required();
    rpt->add_option("--percents", rpt_percents, "comma-separated shortest percentiles");
    rpt->add_option("--thresholds", rpt_thresholds, "comma-separated curve thresholds");

    // make-planted
    auto * mkp = app.add_subcommand("make-planted",
                                    "write a planted-fixture checkpoint, ground truth and corpus");
    std::string mkp_out, mkp_corpus;
    uint64_t    mkp_seed = 0;
    int mkp_layers = 4, mkp_heads = 4, mkp_dim = 32, mkp_max_seq = 256;
    int mkp_layer_star = 2, mkp_head_star = 1, mkp_n_long = 64, mkp_n_short = 64;
    mkp->add_option("--out", mkp_out, "output checkpoint directory")->required();
    mkp->add_option("--seed", mkp_seed, "RNG seed")->capture_default_str();
    mkp->add_option("--layers", mkp_layers, "n_layers")->capture_default_str();
    mkp->add_option("--heads", mkp_heads, "n_heads")->capture_default_str();
    mkp->add_option("--dim", mkp_dim, "hidden_dim")->capture_default_str();
    mkp->add_option("--max-seq", mkp_max_seq, "max_seq_len")->capture_default_str();
    mkp->add_option("--layer-star", mkp_layer_star, "planted layer")->capture_default_str();
    mkp->add_option("--head-star", mkp_head_star, "planted head")->capture_default_str();
    mkp->add_option("--corpus-out", mkp_corpus, "corpus JSONL path (default <out>/corpus.jsonl)");
    mkp->add_option("--n-long", mkp_n_long, "long responses")->capture_default_str();
    mkp->add_option("--n-short", mkp_n_short, "short responses")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError & e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(ext)) {
            return cmd_extract_directions(ext_model, ext_corpus, ext_long_min, ext_short_max,
                                          ext_out, ext_report, ext_jobs);
        }
        if (app.got_subcommand(swp)) {
            return cmd_steer_sweep(swp_model, swp_problems, swp_steer, swp_alphas, swp_budget,
                                   swp_max_new, swp_runs, swp_temperature, swp_seed, swp_out,
                                   swp_format, swp_jobs);
        }
        if (app.got_subcommand(rank)) {
            return cmd_rank_heads(rank_model, rank_corpus, rank_dirs, rank_long_min,
                                  rank_short_max, rank_fraction, rank_plan, rank_heatmap,
                                  rank_report, rank_jobs);
        }
        if (app.got_subcommand(edt)) {
            return cmd_edit(edt_model, edt_plan, edt_dirs, edt_out, edt_report, edt_timestamp);
        }
        if (app.got_subcommand(evl)) {
            return cmd_eval(evl_model, evl_problems, evl_budget, evl_max_new, evl_runs,
                            evl_temperature, evl_seed, evl_wait_mode, evl_wait_threshold,
                            evl_wait_repeat, evl_steer, evl_out, evl_curve, evl_pct,
                            evl_thresholds, evl_jobs);
        }
        if (app.got_subcommand(rpt)) {
            return cmd_report(rpt_inputs, rpt_out_dir, rpt_percents, rpt_thresholds);
        }
        if (app.got_subcommand(mkp)) {
            return cmd_make_planted(mkp_out, mkp_seed, mkp_layers, mkp_heads, mkp_dim, mkp_max_seq,
                                    mkp_layer_star, mkp_head_star, mkp_corpus, mkp_n_long,
                                    mkp_n_short);
        }
    } catch (const std::exception & e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;
}
