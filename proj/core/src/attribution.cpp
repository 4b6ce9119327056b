#include "cotkit/attribution.hpp"

#include "cotkit/forward.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

using json = nlohmann::ordered_json;

namespace cotkit {

HeadMeanContribution average_head_contribution(const Model & model,
                                               const std::vector<std::pair<ResponseRecord, CotSpan>> & short_set,
                                               int jobs) {
    if (short_set.empty()) {
        throw error("average_head_contribution: empty dataset");
    }
    const int L = model.config.n_layers;
    const int H = model.config.n_heads;
    const int d = model.config.hidden_dim;

    const TapSpec taps = TapSpec::all_heads(model.config);

    std::vector<std::vector<std::vector<std::vector<float>>>> inner(short_set.size());
    std::vector<char> usable(short_set.size(), 0);

    parallel_for(jobs, int(short_set.size()), [&](int idx) {
        const auto & [rec, span] = short_set[idx];
        if (span.length() <= 0) {
            return;
        }
        const std::vector<int> seq = encode_example(rec.problem, rec.response);
        if (span.token_end > int(seq.size())) {
            throw error("average_head_contribution: record \"" + rec.id +
                        "\" span exceeds encoded sequence");
        }
        const ForwardTrace trace = forward(model, seq, taps);
        std::vector<std::vector<std::vector<float>>> means(
            L, std::vector<std::vector<float>>(H, std::vector<float>(d, 0.0f)));
        const float inv = 1.0f / float(span.length());
        for (int l = 0; l < L; ++l) {
            for (int h = 0; h < H; ++h) {
                const Mat &          rows = trace.head_contrib.at({l, h});
                std::vector<float> & m    = means[l][h];
                for (int t = span.token_start; t < span.token_end; ++t) {
                    const float * r = rows.row(t);
                    for (int i = 0; i < d; ++i) {
                        m[i] += r[i];
                    }
                }
                for (int i = 0; i < d; ++i) {
                    m[i] *= inv;
                }
            }
        }
        inner[idx]  = std::move(means);
        usable[idx] = 1;
    });

    HeadMeanContribution out;
    out.n_layers   = L;
    out.n_heads    = H;
    out.hidden_dim = d;
    out.mean.assign(L, std::vector<std::vector<float>>(H, std::vector<float>(d, 0.0f)));
    out.model_fingerprint   = model.fingerprint;
    out.base_fingerprint    = model.base_fingerprint();
    out.dataset_fingerprint = dataset_fingerprint(short_set);

    int n_used = 0;
    for (size_t idx = 0; idx < short_set.size(); ++idx) {
        if (!usable[idx]) {
            ++out.n_skipped;
            continue;
        }
        ++n_used;
        for (int l = 0; l < L; ++l) {
            for (int h = 0; h < H; ++h) {
                for (int i = 0; i < d; ++i) {
                    out.mean[l][h][i] += inner[idx][l][h][i];
                }
            }
        }
    }
    if (n_used == 0) {
        throw error("average_head_contribution: every span in the dataset is empty");
    }
    const float inv = 1.0f / float(n_used);
    for (int l = 0; l < L; ++l) {
        for (int h = 0; h < H; ++h) {
            for (int i = 0; i < d; ++i) {
                out.mean[l][h][i] *= inv;
            }
        }
    }
    out.n_responses = n_used;
    return out;
}

HeadScoreTable short_alignment_scores(const HeadMeanContribution & contrib,
                                      const DirectionSet & dirs) {
    const std::string & want = dirs.provenance.model_fingerprint;
    if (contrib.model_fingerprint != want && contrib.base_fingerprint != want) {
        throw error("short_alignment_scores: contribution/direction model fingerprints differ");
    }
    if (contrib.n_layers != dirs.n_layers || contrib.hidden_dim != dirs.hidden_dim) {
        throw error("short_alignment_scores: shape mismatch against directions");
    }
    HeadScoreTable table;
    table.n_layers = contrib.n_layers;
    table.n_heads  = contrib.n_heads;
    table.scores.assign(contrib.n_layers, std::vector<float>(contrib.n_heads, 0.0f));
    table.available.assign(contrib.n_layers, true);
    table.model_fingerprint      = contrib.model_fingerprint;
    table.directions_fingerprint = directions_hash(dirs);

    const int d = contrib.hidden_dim;
    for (int l = 0; l < contrib.n_layers; ++l) {
        if (dirs.attn_degenerate[l]) {
            table.available[l] = false;
            continue;
        }
        const std::vector<float> & unit = dirs.v_attn_unit[l];
        for (int h = 0; h < contrib.n_heads; ++h) {
            // projection onto the short-reasoning direction, i.e. -unit
            float acc = 0.0f;
            for (int i = 0; i < d; ++i) {
                acc += contrib.mean[l][h][i] * -unit[i];
            }
            table.scores[l][h] = acc;
        }
    }
    return table;
}

EditPlan select_top_heads(const HeadScoreTable & table, double fraction) {
    if (!(fraction > 0.0) || fraction > 1.0) {
        throw error("select_top_heads: fraction must be in (0, 1]");
    }
    bool any_available = false;
    for (bool a : table.available) {
        any_available = any_available || a;
    }
    if (!any_available) {
        throw error("select_top_heads: every layer has a degenerate direction");
    }

    const int total = table.n_layers * table.n_heads;
    int       k     = int(std::floor(fraction * double(total) + 0.5));  // round half up
    k               = std::max(k, 1);

    std::vector<EditPlanEntry> all;
    for (int l = 0; l < table.n_layers; ++l) {
        if (!table.available[l]) {
            continue;
        }
        for (int h = 0; h < table.n_heads; ++h) {
            all.push_back({l, h, table.scores[l][h]});
        }
    }
    if (int(all.size()) < k) {
        throw error("select_top_heads: only " + std::to_string(all.size()) +
                    " heads eligible, need " + std::to_string(k));
    }
    std::sort(all.begin(), all.end(), [](const EditPlanEntry & a, const EditPlanEntry & b) {
        if (a.score != b.score) {
            return a.score > b.score;
        }
        if (a.layer != b.layer) {
            return a.layer < b.layer;
        }
        return a.head < b.head;
    });
    all.resize(k);

    EditPlan plan;
    plan.entries            = std::move(all);
    plan.fraction_requested = fraction;
    plan.selection_rule     = "round_half_up(fraction*L*H) min 1; ties by (layer,head) ascending";
    plan.model_fingerprint      = table.model_fingerprint;
    plan.directions_fingerprint = table.directions_fingerprint;
    return plan;
}

void export_heatmap(const HeadScoreTable & table, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("export_heatmap: cannot write " + path);
    }
    f << "layer,head,score\n";
    bool  any = false;
    float lo = 0.0f, hi = 0.0f;
    for (int l = 0; l < table.n_layers; ++l) {
        for (int h = 0; h < table.n_heads; ++h) {
            f << l << ',' << h << ',';
            if (table.available[l]) {
                const float s = table.scores[l][h];
                f << fmt_float(s);
                if (!any || s < lo) {
                    lo = s;
                }
                if (!any || s > hi) {
                    hi = s;
                }
                any = true;
            }
            f << '\n';
        }
    }
    f.close();
    if (!f) {
        throw error("export_heatmap: short write to " + path);
    }

    json meta;
    meta["min"]      = lo;
    meta["max"]      = hi;
    meta["n_layers"] = table.n_layers;
    meta["n_heads"]  = table.n_heads;
    json degenerate  = json::array();
    for (int l = 0; l < table.n_layers; ++l) {
        if (!table.available[l]) {
            degenerate.push_back(l);
        }
    }
    meta["degenerate_layers"] = degenerate;
    std::ofstream mf(path + ".meta.json", std::ios::trunc);
    if (!mf) {
        throw error("export_heatmap: cannot write " + path + ".meta.json");
    }
    mf << meta.dump(2) << "\n";
}

std::string save_edit_plan_json(const EditPlan & plan) {
    json j;
    j["model_fingerprint"]      = plan.model_fingerprint;
    j["directions_fingerprint"] = plan.directions_fingerprint;
    j["fraction"]               = plan.fraction_requested;
    j["selection_rule"]         = plan.selection_rule;
    json entries                = json::array();
    for (const EditPlanEntry & e : plan.entries) {
        entries.push_back({{"layer", e.layer}, {"head", e.head}, {"score", e.score}});
    }
    j["entries"] = entries;
    return j.dump(2) + "\n";
}

void save_edit_plan(const EditPlan & plan, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("save_edit_plan: cannot write " + path);
    }
    f << save_edit_plan_json(plan);
}

EditPlan load_edit_plan(const std::string & path) {
    std::ifstream f(path);
    if (!f) {
        throw error("load_edit_plan: cannot open " + path);
    }
    json j;
    try {
        j = json::parse(f);
    } catch (const std::exception & e) {
        throw error("load_edit_plan: parse failure: " + std::string(e.what()));
    }
    EditPlan plan;
    plan.model_fingerprint      = j.at("model_fingerprint").get<std::string>();
    plan.directions_fingerprint = j.at("directions_fingerprint").get<std::string>();
    plan.fraction_requested     = j.at("fraction").get<double>();
    plan.selection_rule         = j.value("selection_rule", std::string());
    for (const json & e : j.at("entries")) {
        plan.entries.push_back(
            {e.at("layer").get<int>(), e.at("head").get<int>(), e.at("score").get<float>()});
    }
    return plan;
}

} // namespace cotkit
