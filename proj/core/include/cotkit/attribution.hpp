#pragma once

#include "cotkit/corpus.hpp"
#include "cotkit/directions.hpp"
#include "cotkit/model.hpp"

#include <string>
#include <vector>

namespace cotkit {

// Two-stage mean of per-head contributions over a dataset's CoT spans:
// inner mean over each response's span positions, outer mean over responses.
struct HeadMeanContribution {
    int n_layers   = 0;
    int n_heads    = 0;
    int hidden_dim = 0;
    std::vector<std::vector<std::vector<float>>> mean;  // [layer][head] -> d floats
    int         n_responses = 0;
    int         n_skipped   = 0;
    std::string model_fingerprint;
    std::string base_fingerprint;  // unedited ancestor, for re-attribution after edits
    std::string dataset_fingerprint;
};

HeadMeanContribution average_head_contribution(const Model & model,
                                               const std::vector<std::pair<ResponseRecord, CotSpan>> & short_set,
                                               int jobs = 1);

// score[l][h] = <mean contribution, -unit attn direction at l>; higher means
// the head pushes harder toward short reasoning
struct HeadScoreTable {
    int n_layers = 0;
    int n_heads  = 0;
    std::vector<std::vector<float>> scores;     // [layer][head]
    std::vector<bool>               available;  // per layer; false where direction degenerate
    std::string model_fingerprint;
    std::string directions_fingerprint;
};

HeadScoreTable short_alignment_scores(const HeadMeanContribution & contrib,
                                      const DirectionSet & dirs);

struct EditPlanEntry {
    int   layer = 0;
    int   head  = 0;
    float score = 0.0f;
};

struct EditPlan {
    std::vector<EditPlanEntry> entries;  // sorted by score descending
    double      fraction_requested = 0.0;
    std::string selection_rule;
    std::string model_fingerprint;
    std::string directions_fingerprint;
};

// k = round-half-up(fraction * L * H), floor 1; ties broken by
// (layer, head) ascending; heads in degenerate layers are not eligible
EditPlan select_top_heads(const HeadScoreTable & table, double fraction = 0.04);

// CSV "layer,head,score" over every head plus a companion
// <path>.meta.json carrying min/max for plotting
void export_heatmap(const HeadScoreTable & table, const std::string & path);

std::string save_edit_plan_json(const EditPlan & plan);
void        save_edit_plan(const EditPlan & plan, const std::string & path);
EditPlan    load_edit_plan(const std::string & path);

} // namespace cotkit
