#include "cotkit/eval.hpp"

#include "cotkit/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

using json = nlohmann::json;

namespace cotkit {

namespace {

// generation loop for one problem: think phase with budget / wait handling,
// then answer phase until EOS
EvalRecord eval_one(const Model & model, const ResponseRecord & problem, const RunConfig & run_cfg,
                    const GenConfig & gen_cfg, const ResidualHook * hook, int run_index) {
    EvalRecord rec;
    rec.id  = problem.id;
    rec.run = run_index;

    std::vector<int> prompt;
    prompt.push_back(tok::BOS);
    const std::vector<int> p = encode(problem.problem);
    prompt.insert(prompt.end(), p.begin(), p.end());
    prompt.push_back(tok::THINK_OPEN);

    if (int(prompt.size()) + 1 > model.config.max_seq_len) {
        throw error("run_eval: prompt for \"" + problem.id + "\" leaves no room to generate");
    }

    GenConfig cfg = gen_cfg;
    cfg.seed      = run_cfg.seed + uint64_t(run_index);
    Rng rng(cfg.seed);

    DecodeSession session(model, hook);
    session.feed(prompt, /*prompt=*/true);

    std::vector<int> generated;
    int  think_len   = 0;
    int  injections  = 0;
    bool think_open  = true;
    bool out_of_room = false;

    auto room_left = [&] { return session.length() < model.config.max_seq_len; };
    auto emit      = [&](int token, bool from_prompt_side = false) {
        generated.push_back(token);
        session.feed_one(token, from_prompt_side);
    };

    while (int(generated.size()) < cfg.max_new_tokens) {
        const int next = sample_token(session.last_logits(), cfg, rng);

        if (think_open) {
            if (next == tok::THINK_CLOSE) {
                const bool premature = run_cfg.wait_mode == WaitMode::append_below &&
                                       injections < run_cfg.wait_max_injections &&
                                       think_len < run_cfg.wait_threshold;
                if (premature) {
                    if (model.config.vocab_size <= tok::WAIT) {
                        throw error("run_eval: wait mode needs vocab_size > " +
                                    std::to_string(tok::WAIT));
                    }
                    if (!room_left()) {
                        rec.truncated = true;
                        out_of_room   = true;
                        break;
                    }
                    emit(tok::WAIT);
                    ++think_len;
                    ++injections;
                    continue;
                }
                generated.push_back(next);
                think_open = false;
                if (room_left()) {
                    session.feed_one(next, false);
                } else {
                    out_of_room = true;
                    break;
                }
                continue;
            }
            if (!room_left()) {
                rec.truncated = true;
                out_of_room   = true;
                break;
            }
            emit(next);
            ++think_len;
            if (think_len >= run_cfg.budget) {
                // budget exhausted: force the span closed and go answer
                rec.truncated = true;
                generated.push_back(tok::THINK_CLOSE);
                think_open = false;
                if (room_left()) {
                    session.feed_one(tok::THINK_CLOSE, false);
                } else {
                    out_of_room = true;
                    break;
                }
            }
            continue;
        }

        // answer phase
        generated.push_back(next);
        if (next == tok::EOS || cfg.stop_tokens.count(next)) {
            break;
        }
        if (!room_left()) {
            out_of_room = true;
            break;
        }
        session.feed_one(next, false);
    }
    if (think_open && !out_of_room && int(generated.size()) >= cfg.max_new_tokens) {
        rec.truncated = true;  // ran out of new-token allowance mid-think
    }

    rec.reasoning_length = think_len;
    rec.generated_text   = decode(generated);
    rec.correct          = answer_match(rec.generated_text, problem.gold_answer);
    rec.behavior         = behavior_metrics(rec);
    return rec;
}

} // namespace

std::vector<EvalRecord> run_eval(const Model & model, const std::vector<ResponseRecord> & problems,
                                 const RunConfig & run_cfg, const GenConfig & gen_cfg,
                                 const ResidualHook * hook, int jobs) {
    if (run_cfg.budget <= 0) {
        throw error("run_eval: budget must be positive");
    }
    if (run_cfg.n_runs < 1) {
        throw error("run_eval: n_runs must be >= 1");
    }
    int n_runs = run_cfg.n_runs;
    if (gen_cfg.mode == DecodeMode::greedy && n_runs > 1) {
        std::fprintf(stderr,
                     "run_eval: greedy decoding is deterministic, collapsing %d runs to 1\n",
                     n_runs);
        n_runs = 1;
    }

    const int               n = int(problems.size());
    std::vector<EvalRecord> records(size_t(n) * n_runs);
    parallel_for(jobs, n * n_runs, [&](int idx) {
        const int run  = idx / n;
        const int prob = idx % n;
        try {
            records[idx] = eval_one(model, problems[prob], run_cfg, gen_cfg, hook, run);
        } catch (const std::exception & e) {
            EvalRecord rec;
            rec.id         = problems[prob].id;
            rec.run        = run;
            rec.failed     = true;
            rec.error_note = e.what();
            records[idx]   = rec;
        }
    });
    return records;
}

//
// answer matching
//

namespace {

std::string collapse_whitespace(const std::string & s) {
    std::string out;
    bool        in_ws = false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
            in_ws = true;
            continue;
        }
        if (in_ws && !out.empty()) {
            out += ' ';
        }
        in_ws = false;
        out += c;
    }
    return out;
}

bool strip_prefix_suffix(std::string & s, const std::string & pre, const std::string & suf) {
    if (s.size() >= pre.size() + suf.size() && s.compare(0, pre.size(), pre) == 0 &&
        s.compare(s.size() - suf.size(), suf.size(), suf) == 0) {
        s = s.substr(pre.size(), s.size() - pre.size() - suf.size());
        return true;
    }
    return false;
}

void erase_all(std::string & s, const std::string & what) {
    size_t pos;
    while ((pos = s.find(what)) != std::string::npos) {
        s.erase(pos, what.size());
    }
}

std::string strip_leading_zeros(const std::string & s) {
    size_t i    = 0;
    std::string sign;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) {
        sign = s[i] == '-' ? "-" : "";
        ++i;
    }
    size_t j = i;
    while (j + 1 < s.size() && s[j] == '0' && s[j + 1] >= '0' && s[j + 1] <= '9') {
        ++j;
    }
    // only rewrite when everything from i on is numeric-looking
    for (size_t k = i; k < s.size(); ++k) {
        const char c = s[k];
        if (!((c >= '0' && c <= '9') || c == '.' || c == '/')) {
            return s;
        }
    }
    return sign + s.substr(j);
}

std::string normalize_answer(std::string s) {
    s = collapse_whitespace(s);
    bool changed = true;
    while (changed && !s.empty()) {
        changed = false;
        changed |= strip_prefix_suffix(s, "$$", "$$");
        changed |= strip_prefix_suffix(s, "$", "$");
        changed |= strip_prefix_suffix(s, "\\(", "\\)");
        changed |= strip_prefix_suffix(s, "\\[", "\\]");
        changed |= strip_prefix_suffix(s, "\\text{", "}");
        changed |= strip_prefix_suffix(s, "\\mathrm{", "}");
        changed |= strip_prefix_suffix(s, "{", "}");
        if (changed) {
            s = collapse_whitespace(s);
        }
    }
    erase_all(s, "\\left");
    erase_all(s, "\\right");
    erase_all(s, "\\!");
    s = collapse_whitespace(s);
    s = strip_leading_zeros(s);
    return s;
}

// last balanced \boxed{...} group in text, empty when none closes
std::string last_boxed_group(const std::string & text) {
    std::string result;
    size_t      pos = 0;
    while ((pos = text.find("\\boxed{", pos)) != std::string::npos) {
        const size_t open = pos + 7;
        int          depth = 1;
        size_t       i     = open;
        for (; i < text.size(); ++i) {
            if (text[i] == '{') {
                ++depth;
            } else if (text[i] == '}') {
                --depth;
                if (depth == 0) {
                    break;
                }
            }
        }
        if (depth == 0) {
            result = text.substr(open, i - open);
            pos    = i + 1;
        } else {
            break;  // unbalanced, no later group can close either
        }
    }
    return result;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

// last token that parses as a number (sign, decimals, simple fractions) or a
// standalone A-E option letter
std::string last_answer_token(const std::string & text) {
    std::string best;
    size_t      i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (is_digit(c) || ((c == '-' || c == '+') && i + 1 < text.size() && is_digit(text[i + 1]))) {
            size_t j = i;
            if (text[j] == '-' || text[j] == '+') {
                ++j;
            }
            while (j < text.size() && is_digit(text[j])) {
                ++j;
            }
            if (j < text.size() && text[j] == '.' && j + 1 < text.size() && is_digit(text[j + 1])) {
                ++j;
                while (j < text.size() && is_digit(text[j])) {
                    ++j;
                }
            }
            if (j < text.size() && text[j] == '/' && j + 1 < text.size() && is_digit(text[j + 1])) {
                ++j;
                while (j < text.size() && is_digit(text[j])) {
                    ++j;
                }
            }
            best = text.substr(i, j - i);
            i    = j;
            continue;
        }
        if (c >= 'A' && c <= 'E') {
            const bool left_ok  = i == 0 || !std::isalnum(static_cast<unsigned char>(text[i - 1]));
            const bool right_ok = i + 1 >= text.size() ||
                                  !std::isalnum(static_cast<unsigned char>(text[i + 1]));
            if (left_ok && right_ok) {
                best = std::string(1, c);
            }
        }
        ++i;
    }
    return best;
}

} // namespace

bool answer_match(const std::string & generated_text, const std::string & gold_answer) {
    const size_t close = generated_text.find("</think>");
    if (close == std::string::npos) {
        return false;  // reasoning never closed, no answer region
    }
    const std::string region = generated_text.substr(close + 8);

    std::string candidate = last_boxed_group(region);
    if (candidate.empty()) {
        candidate = last_answer_token(region);
    }
    if (candidate.empty()) {
        return false;
    }
    const std::string a = normalize_answer(candidate);
    const std::string b = normalize_answer(gold_answer);
    if (a == b) {
        return true;
    }
    // numeric equality covers 42 vs 42.0 style differences
    try {
        size_t       ia = 0, ib = 0;
        const double da = std::stod(a, &ia);
        const double db = std::stod(b, &ib);
        if (ia == a.size() && ib == b.size()) {
            return da == db;
        }
    } catch (...) {
    }
    return false;
}

//
// curves and tables
//

std::vector<CurveRow> cumulative_accuracy_curve(const std::vector<EvalRecord> & records,
                                                const std::vector<long long> & thresholds,
                                                bool strict_below) {
    for (size_t i = 1; i < thresholds.size(); ++i) {
        if (thresholds[i] < thresholds[i - 1]) {
            throw error("cumulative_accuracy_curve: thresholds must be sorted ascending");
        }
    }
    std::vector<CurveRow> rows;
    rows.reserve(thresholds.size());
    for (long long tau : thresholds) {
        CurveRow row;
        row.threshold = tau;
        int correct   = 0;
        for (const EvalRecord & r : records) {
            const bool in = strict_below ? (r.reasoning_length < tau) : (r.reasoning_length <= tau);
            if (in) {
                ++row.n;
                correct += r.correct ? 1 : 0;
            }
        }
        if (row.n > 0) {
            row.accuracy     = double(correct) / double(row.n);
            row.has_accuracy = true;
        }
        rows.push_back(row);
    }
    return rows;
}

std::vector<PercentileRow> shortest_percentile_stats(const std::vector<EvalRecord> & records,
                                                     const std::vector<int> & percents) {
    if (records.empty()) {
        throw error("shortest_percentile_stats: no records");
    }
    std::vector<const EvalRecord *> sorted;
    sorted.reserve(records.size());
    for (const EvalRecord & r : records) {
        sorted.push_back(&r);
    }
    std::sort(sorted.begin(), sorted.end(), [](const EvalRecord * a, const EvalRecord * b) {
        if (a->reasoning_length != b->reasoning_length) {
            return a->reasoning_length < b->reasoning_length;
        }
        if (a->id != b->id) {
            return a->id < b->id;
        }
        return a->run < b->run;
    });

    const int                  N = int(records.size());
    std::vector<PercentileRow> rows;
    for (int p : percents) {
        if (p <= 0 || p > 100) {
            throw error("shortest_percentile_stats: percent out of (0,100]");
        }
        PercentileRow row;
        row.percent = p;
        row.n       = (p * N + 99) / 100;  // ceil
        int    correct = 0;
        double len_sum = 0.0;
        for (int i = 0; i < row.n; ++i) {
            correct += sorted[i]->correct ? 1 : 0;
            len_sum += sorted[i]->reasoning_length;
        }
        row.accuracy    = double(correct) / double(row.n);
        row.mean_length = len_sum / double(row.n);
        rows.push_back(row);
    }
    return rows;
}

//
// behavior metrics
//

BehaviorMetrics behavior_metrics(const EvalRecord & record) {
    const std::string & text  = record.generated_text;
    const size_t        close = text.find("</think>");
    const std::string   think = close == std::string::npos ? text : text.substr(0, close);

    BehaviorMetrics m;
    m.boxed_in_think = think.find("\\boxed{") != std::string::npos;

    size_t i = 0;
    auto   closed_group = [&](const std::string & open, const std::string & shut) -> bool {
        if (think.compare(i, open.size(), open) != 0) {
            return false;
        }
        const size_t end = think.find(shut, i + open.size());
        if (end == std::string::npos) {
            i += open.size();  // unclosed opener never counts
            return true;
        }
        ++m.n_equations;
        i = end + shut.size();
        return true;
    };
    while (i < think.size()) {
        if (closed_group("\\begin{equation}", "\\end{equation}")) {
            continue;
        }
        if (closed_group("\\[", "\\]")) {
            continue;
        }
        if (closed_group("$$", "$$")) {
            continue;
        }
        if (closed_group("$", "$")) {
            continue;
        }
        ++i;
    }
    return m;
}

//
// aggregation
//

namespace {

double mean_of(const std::vector<double> & xs) {
    double s = 0.0;
    for (double x : xs) {
        s += x;
    }
    return xs.empty() ? 0.0 : s / double(xs.size());
}

// population sd; a single run reports 0
double sd_of(const std::vector<double> & xs) {
    if (xs.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(xs);
    double       s = 0.0;
    for (double x : xs) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / double(xs.size()));
}

double run_accuracy(const std::vector<EvalRecord> & run) {
    if (run.empty()) {
        return 0.0;
    }
    int c = 0;
    for (const EvalRecord & r : run) {
        c += r.correct ? 1 : 0;
    }
    return double(c) / double(run.size());
}

double run_mean_length(const std::vector<EvalRecord> & run) {
    if (run.empty()) {
        return 0.0;
    }
    double s = 0.0;
    for (const EvalRecord & r : run) {
        s += r.reasoning_length;
    }
    return s / double(run.size());
}

std::string format_pct_pm(double mean_frac, double sd_frac) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.2f ± %.2f", 100.0 * mean_frac, 100.0 * sd_frac);
    return buf;
}

std::vector<long long> default_thresholds() {
    return {100, 200, 500, 1000, 2000, 4000, 8000, 16384};
}

} // namespace

EvalSummary summarize(const std::vector<LabeledRuns> & sets, const SummaryOptions & options) {
    if (sets.empty()) {
        throw error("summarize: need at least one labeled set");
    }
    namespace fs = std::filesystem;
    EvalSummary out;
    const std::vector<long long> thresholds =
        options.curve_thresholds.empty() ? default_thresholds() : options.curve_thresholds;

    const bool emit = !options.out_dir.empty();
    if (emit) {
        std::error_code ec;
        fs::create_directories(options.out_dir, ec);
    }

    for (size_t si = 0; si < sets.size(); ++si) {
        const LabeledRuns & set = sets[si];
        if (set.runs.empty()) {
            throw error("summarize: label \"" + set.label + "\" has no runs");
        }
        SummaryRow row;
        row.label  = set.label;
        row.n_runs = int(set.runs.size());

        std::vector<double>     accs, lens;
        std::vector<EvalRecord> pooled;
        for (const auto & run : set.runs) {
            accs.push_back(run_accuracy(run));
            lens.push_back(run_mean_length(run));
            row.n_records += int(run.size());
            pooled.insert(pooled.end(), run.begin(), run.end());
        }
        row.acc_mean = mean_of(accs);
        row.acc_sd   = sd_of(accs);
        row.len_mean = mean_of(lens);
        row.len_sd   = sd_of(lens);
        row.acc_fmt  = format_pct_pm(row.acc_mean, row.acc_sd);

        // percentile table: per-run stats averaged pointwise
        std::vector<int> percents = options.percents;
        if (std::find(percents.begin(), percents.end(), 100) == percents.end()) {
            percents.push_back(100);
        }
        std::vector<PercentileRow> avg;
        for (size_t ri = 0; ri < set.runs.size(); ++ri) {
            const std::vector<PercentileRow> t = shortest_percentile_stats(set.runs[ri], percents);
            if (ri == 0) {
                avg = t;
            } else {
                for (size_t k = 0; k < t.size(); ++k) {
                    avg[k].accuracy += t[k].accuracy;
                    avg[k].mean_length += t[k].mean_length;
                }
            }
        }
        for (PercentileRow & r : avg) {
            r.accuracy /= double(set.runs.size());
            r.mean_length /= double(set.runs.size());
        }
        out.percentiles[set.label] = avg;
        out.overall[set.label]     = avg.back();  // the p=100 row

        out.curves[set.label] = cumulative_accuracy_curve(pooled, thresholds);

        out.rows.push_back(row);

        if (emit) {
            const std::string curve_path = (fs::path(options.out_dir) / (set.label + ".curve.csv")).string();
            const std::string pct_path =
                (fs::path(options.out_dir) / (set.label + ".percentiles.csv")).string();
            write_curve_csv(out.curves[set.label], curve_path);
            write_percentile_csv(avg, pct_path);
            out.curve_files[set.label]      = curve_path;
            out.percentile_files[set.label] = pct_path;
        }
    }

    for (size_t si = 1; si < out.rows.size(); ++si) {
        out.rows[si].delta_acc = out.rows[si].acc_mean - out.rows[0].acc_mean;
        out.rows[si].delta_len = out.rows[si].len_mean - out.rows[0].len_mean;
    }

    if (emit) {
        json j;
        json rows = json::array();
        for (const SummaryRow & r : out.rows) {
            rows.push_back({
                {"label", r.label},
                {"n_runs", r.n_runs},
                {"n_records", r.n_records},
                {"accuracy_mean", r.acc_mean},
                {"accuracy_sd", r.acc_sd},
                {"accuracy_pct", r.acc_fmt},
                {"mean_reasoning_length", r.len_mean},
                {"sd_reasoning_length", r.len_sd},
                {"delta_accuracy_vs_first", r.delta_acc},
                {"delta_length_vs_first", r.delta_len},
            });
        }
        j["labels"] = rows;
        json files  = json::object();
        for (const auto & [label, path] : out.curve_files) {
            files[label] = {{"curve", path}, {"percentiles", out.percentile_files.at(label)}};
        }
        j["files"] = files;

        out.summary_json_file = (fs::path(options.out_dir) / "summary.json").string();
        std::ofstream jf(out.summary_json_file, std::ios::trunc);
        if (!jf) {
            throw error("summarize: cannot write " + out.summary_json_file);
        }
        jf << j.dump(2) << "\n";

        out.summary_csv_file = (fs::path(options.out_dir) / "summary.csv").string();
        std::ofstream cf(out.summary_csv_file, std::ios::trunc);
        if (!cf) {
            throw error("summarize: cannot write " + out.summary_csv_file);
        }
        cf << "label,n_runs,n_records,accuracy_mean,accuracy_sd,accuracy_pct,mean_len,sd_len,"
              "delta_accuracy,delta_length\n";
        for (const SummaryRow & r : out.rows) {
            cf << r.label << ',' << r.n_runs << ',' << r.n_records << ',' << fmt_float(r.acc_mean)
               << ',' << fmt_float(r.acc_sd) << ',' << '"' << r.acc_fmt << '"' << ','
               << fmt_float(r.len_mean) << ',' << fmt_float(r.len_sd) << ','
               << fmt_float(r.delta_acc) << ',' << fmt_float(r.delta_len) << '\n';
        }
    }
    return out;
}

//
// artifact io
//

void write_eval_records(const std::vector<EvalRecord> & records, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("write_eval_records: cannot write " + path);
    }
    for (const EvalRecord & r : records) {
        json j;
        j["id"]               = r.id;
        j["run"]              = r.run;
        j["reasoning_length"] = r.reasoning_length;
        j["correct"]          = r.correct;
        j["truncated"]        = r.truncated;
        j["generated_text"]   = r.generated_text;
        j["behavior"] = {{"n_equations", r.behavior.n_equations},
                         {"boxed_in_think", r.behavior.boxed_in_think}};
        j["failed"]     = r.failed;
        j["error_note"] = r.error_note;
        f << j.dump() << "\n";
    }
}

std::vector<EvalRecord> load_eval_records(const std::string & path) {
    std::ifstream f(path);
    if (!f) {
        throw error("load_eval_records: cannot open " + path);
    }
    std::vector<EvalRecord> out;
    std::string             line;
    int                     lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception & e) {
            throw error("load_eval_records: line " + std::to_string(lineno) + ": " + e.what());
        }
        EvalRecord r;
        r.id               = j.at("id").get<std::string>();
        r.run              = j.value("run", 0);
        r.reasoning_length = j.at("reasoning_length").get<int>();
        r.correct          = j.at("correct").get<bool>();
        r.truncated        = j.value("truncated", false);
        r.generated_text   = j.value("generated_text", std::string());
        if (j.contains("behavior")) {
            r.behavior.n_equations    = j["behavior"].value("n_equations", 0);
            r.behavior.boxed_in_think = j["behavior"].value("boxed_in_think", false);
        }
        r.failed     = j.value("failed", false);
        r.error_note = j.value("error_note", std::string());
        out.push_back(std::move(r));
    }
    return out;
}

void write_curve_csv(const std::vector<CurveRow> & rows, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("write_curve_csv: cannot write " + path);
    }
    f << "threshold,n,accuracy\n";
    for (const CurveRow & r : rows) {
        f << r.threshold << ',' << r.n << ',';
        if (r.has_accuracy) {
            f << fmt_float(r.accuracy);
        }
        f << '\n';
    }
}

void write_percentile_csv(const std::vector<PercentileRow> & rows, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("write_percentile_csv: cannot write " + path);
    }
    f << "percent,n,accuracy,mean_length\n";
    for (const PercentileRow & r : rows) {
        f << r.percent << ',' << r.n << ',' << fmt_float(r.accuracy) << ','
          << fmt_float(r.mean_length) << '\n';
    }
}

} // namespace cotkit
