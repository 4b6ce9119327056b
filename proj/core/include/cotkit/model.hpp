#pragma once

#include "cotkit/common.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cotkit {

struct ModelConfig {
    int   n_layers    = 0;
    int   n_heads     = 0;
    int   hidden_dim  = 0;
    int   head_dim    = 0;
    int   vocab_size  = 0;
    int   max_seq_len = 0;
    float ln_epsilon  = 1e-5f;

    void validate() const;
    bool operator==(const ModelConfig &) const = default;
};

struct LayerNormParams {
    std::vector<float> scale;
    std::vector<float> bias;
};

// Head h of wq/wk/wv lives in columns [h*head_dim, (h+1)*head_dim);
// head h of wo lives in rows [h*head_dim, (h+1)*head_dim).
struct LayerWeights {
    LayerNormParams ln1;
    Mat             wq, wk, wv, wo;   // all hidden_dim x hidden_dim
    LayerNormParams ln2;
    Mat             mlp_w_in;         // hidden_dim x 4*hidden_dim
    std::vector<float> mlp_b_in;      // 4*hidden_dim
    Mat             mlp_w_out;        // 4*hidden_dim x hidden_dim
    std::vector<float> mlp_b_out;     // hidden_dim
};

struct EditLineage {
    std::string base_fingerprint;
    std::string plan_hash;
    std::string directions_hash;
    std::string timestamp;
};

struct Model {
    ModelConfig config;

    Mat tok_embedding;   // vocab_size x hidden_dim
    Mat pos_embedding;   // max_seq_len x hidden_dim
    std::vector<LayerWeights> layers;
    LayerNormParams final_ln;
    Mat unembed;         // hidden_dim x vocab_size

    std::string fingerprint;              // hash of config + materialized f32 tensors
    std::optional<EditLineage> lineage;   // present only on edited models
    bool loaded_from_f16 = false;

    // fingerprint of the unedited ancestor (own fingerprint when unedited)
    const std::string & base_fingerprint() const {
        return lineage ? lineage->base_fingerprint : fingerprint;
    }
    bool compatible_with(const std::string & fp) const {
        return fp == fingerprint || fp == base_fingerprint();
    }

    size_t total_params() const;
    void   refresh_fingerprint();
};

// Checkpoint directory layout: <dir>/model.json manifest plus <dir>/model.bin,
// a single little-endian blob addressed by per-tensor byte offsets.
Model load_checkpoint(const std::string & dir);
void  save_checkpoint(const Model & model, const std::string & dir);

// all tensors drawn from seeded gaussians; used by tests and benchmarks
Model build_random_model(uint64_t seed, const ModelConfig & config);

} // namespace cotkit
