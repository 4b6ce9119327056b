#pragma once

#include "cotkit/corpus.hpp"
#include "cotkit/forward.hpp"

#include <map>
#include <string>
#include <vector>

namespace cotkit {

struct BehaviorMetrics {
    int  n_equations    = 0;
    bool boxed_in_think = false;
};

struct EvalRecord {
    std::string id;
    int         run              = 0;
    int         reasoning_length = 0;     // tokens strictly inside the think span
    bool        correct          = false;
    bool        truncated        = false; // think budget or context limit hit
    std::string generated_text;           // decoded generated tokens, prompt excluded
    BehaviorMetrics behavior;
    bool        failed = false;           // per-problem failure, recorded not fatal
    std::string error_note;
};

enum class WaitMode { off, append_below };

struct RunConfig {
    int      budget = 8192;   // think-token budget; </think> is force-inserted on exhaustion
    int      n_runs = 1;
    WaitMode wait_mode           = WaitMode::off;
    int      wait_threshold      = 500;  // inject when the think span closes below this
    int      wait_max_injections = 1;
    uint64_t seed                = 0;    // run r samples with seed + r
};

// One record per problem per run. The prompt is [BOS] + encode(problem) +
// <think>; reasoning tokens are everything generated before the first
// </think>. Deterministic under greedy decoding (n_runs collapses to 1).
std::vector<EvalRecord> run_eval(const Model & model, const std::vector<ResponseRecord> & problems,
                                 const RunConfig & run_cfg, const GenConfig & gen_cfg,
                                 const ResidualHook * hook = nullptr, int jobs = 1);

// Last \boxed{...} group after the think span, else the last number or A-E
// option token; whitespace, leading zeros and trivial LaTeX wrappers are
// normalized on both sides before comparing.
bool answer_match(const std::string & generated_text, const std::string & gold_answer);

struct CurveRow {
    long long threshold = 0;
    int       n         = 0;
    double    accuracy  = 0.0;  // meaningless when n == 0
    bool      has_accuracy = false;
};

// accuracy over records with reasoning_length <= threshold (or < with
// strict_below); thresholds must arrive sorted ascending
std::vector<CurveRow> cumulative_accuracy_curve(const std::vector<EvalRecord> & records,
                                                const std::vector<long long> & thresholds,
                                                bool strict_below = false);

struct PercentileRow {
    int    percent     = 0;
    int    n           = 0;
    double accuracy    = 0.0;
    double mean_length = 0.0;
};

// ceil(p/100 * N) records with the smallest reasoning_length, ties broken by
// id ascending
std::vector<PercentileRow> shortest_percentile_stats(const std::vector<EvalRecord> & records,
                                                     const std::vector<int> & percents = {5, 10, 20});

// recomputed from generated_text; counts closed $...$, $$...$$, \[...\] and
// \begin{equation}...\end{equation} groups inside the think span
BehaviorMetrics behavior_metrics(const EvalRecord & record);

//
// aggregation
//

struct LabeledRuns {
    std::string label;
    std::vector<std::vector<EvalRecord>> runs;
};

struct SummaryRow {
    std::string label;
    int         n_runs    = 0;
    int         n_records = 0;
    double      acc_mean = 0.0, acc_sd = 0.0;   // fractions over per-run accuracies
    double      len_mean = 0.0, len_sd = 0.0;   // over per-run mean reasoning lengths
    double      delta_acc = 0.0, delta_len = 0.0;  // vs the first label
    std::string acc_fmt;                        // "90.80 ± 0.36" percent rendering
};

struct SummaryOptions {
    std::vector<int>       percents{5, 10, 20};
    std::vector<long long> curve_thresholds;  // empty -> default grid
    std::string            out_dir;           // when set, CSV/JSON artifacts are written
};

struct EvalSummary {
    std::vector<SummaryRow> rows;
    std::map<std::string, PercentileRow>            overall;      // label -> p=100 row
    std::map<std::string, std::vector<CurveRow>>    curves;       // pooled across runs
    std::map<std::string, std::vector<PercentileRow>> percentiles;  // averaged across runs
    std::map<std::string, std::string> curve_files;
    std::map<std::string, std::string> percentile_files;
    std::string summary_json_file;
    std::string summary_csv_file;
};

EvalSummary summarize(const std::vector<LabeledRuns> & sets, const SummaryOptions & options);

//
// artifact io
//

void write_eval_records(const std::vector<EvalRecord> & records, const std::string & path);
std::vector<EvalRecord> load_eval_records(const std::string & path);
void write_curve_csv(const std::vector<CurveRow> & rows, const std::string & path);
void write_percentile_csv(const std::vector<PercentileRow> & rows, const std::string & path);

} // namespace cotkit
