#pragma once

#include "cotkit/corpus.hpp"
#include "cotkit/model.hpp"

#include <string>
#include <vector>

namespace cotkit {

enum class RepKind { attn, mlp };
enum class Group { long_cot, short_cot };

// Two-stage mean of residual states over a dataset: inner mean over each
// response's CoT token positions, outer mean over responses, both in f32 and
// in dataset order. Every response weighs the same regardless of CoT length.
struct MeanRepresentation {
    RepKind kind  = RepKind::attn;
    Group   group = Group::long_cot;
    int     n_layers   = 0;
    int     hidden_dim = 0;
    std::vector<std::vector<float>> per_layer;  // n_layers vectors of hidden_dim
    int         n_responses = 0;
    int         n_skipped   = 0;  // empty spans contribute nothing
    std::string model_fingerprint;
    std::string dataset_fingerprint;
};

MeanRepresentation mean_cot_representation(const Model & model,
                                           const std::vector<std::pair<ResponseRecord, CotSpan>> & dataset,
                                           RepKind kind, int jobs = 1);

struct DirectionProvenance {
    std::string model_fingerprint;
    std::string long_corpus_fingerprint;
    std::string short_corpus_fingerprint;
    int         long_min  = 0;
    int         short_max = 0;
    int         n_long    = 0;
    int         n_short   = 0;
};

struct DirectionSet {
    int n_layers   = 0;
    int hidden_dim = 0;
    std::vector<std::vector<float>> v_attn;      // raw difference vectors
    std::vector<std::vector<float>> v_mlp;
    std::vector<std::vector<float>> v_attn_unit; // zero-filled where degenerate
    std::vector<std::vector<float>> v_mlp_unit;
    std::vector<bool> attn_degenerate;           // ||v|| < 1e-8
    std::vector<bool> mlp_degenerate;
    DirectionProvenance provenance;

    const std::vector<float> & unit(RepKind kind, int layer) const;
    bool degenerate(RepKind kind, int layer) const {
        return kind == RepKind::attn ? attn_degenerate[layer] : mlp_degenerate[layer];
    }
};

DirectionSet extract_directions(const MeanRepresentation & long_attn,
                                const MeanRepresentation & short_attn,
                                const MeanRepresentation & long_mlp,
                                const MeanRepresentation & short_mlp);

// single JSON header line, then 2*n_layers little-endian f32 vectors
// (attn block in layer order, then mlp block)
void         save_directions(const DirectionSet & dirs, const std::string & path);
DirectionSet load_directions(const std::string & path);

// hash of the serialized form, used to tie edit plans to their directions
std::string directions_hash(const DirectionSet & dirs);

} // namespace cotkit
