#pragma once

#include "cotkit/model.hpp"

#include <functional>
#include <map>
#include <set>
#include <span>
#include <utility>

namespace cotkit {

enum class ResidualKind { attn, mlp };

// Additive intervention applied in place to residual rows at tap points.
// Must be a pure function of (layer, kind, row); the engine calls it once per
// position per tap, prompt positions included unless prompt_positions is off.
struct ResidualHook {
    std::function<void(int layer, ResidualKind kind, std::span<float> row)> apply;
    bool        prompt_positions  = true;
    std::string model_fingerprint;  // checked against the model when non-empty
};

struct TapSpec {
    std::set<int>                 want_r_attn;
    std::set<int>                 want_r_mlp;
    std::set<std::pair<int, int>> want_head_contrib;

    bool empty() const {
        return want_r_attn.empty() && want_r_mlp.empty() && want_head_contrib.empty();
    }
    static TapSpec all_layers(const ModelConfig & c, bool attn, bool mlp);
    static TapSpec all_heads(const ModelConfig & c);
    void validate(const ModelConfig & c) const;
};

struct ForwardTrace {
    Mat                                logits;       // T x vocab
    std::map<int, Mat>                 r_attn;       // layer -> T x d (post-hook)
    std::map<int, Mat>                 r_mlp;        // layer -> T x d (post-hook)
    std::map<std::pair<int, int>, Mat> head_contrib; // (layer, head) -> T x d
};

ForwardTrace forward(const Model & model, const std::vector<int> & tokens,
                     const TapSpec & taps, const ResidualHook * hook = nullptr);

//
// incremental decoding with per-layer KV caches; bit-equivalent to feeding
// the whole sequence through forward() in one shot
//

class DecodeSession {
  public:
    explicit DecodeSession(const Model & model, const ResidualHook * hook = nullptr,
                           const TapSpec * taps = nullptr);

    // appends tokens and runs them through the model; prompt=true marks
    // positions the hook should skip under generated-only steering
    void feed(std::span<const int> tokens, bool prompt);
    void feed_one(int token, bool prompt) { feed(std::span<const int>(&token, 1), prompt); }

    int length() const { return n_pos_; }
    const std::vector<float> & last_logits() const;
    const std::vector<int> &   tokens() const { return tokens_; }
    const Model &              model() const { return model_; }

    // trace rows accumulated so far (only taps requested at construction)
    const ForwardTrace & trace() const { return trace_; }

  private:
    void step(int token, bool prompt);

    const Model &        model_;
    const ResidualHook * hook_ = nullptr;
    TapSpec              taps_;
    bool                 want_trace_ = false;

    int              n_pos_ = 0;
    std::vector<int> tokens_;
    std::vector<Mat> k_cache_;  // per layer, max_seq_len x d (head-fused)
    std::vector<Mat> v_cache_;
    std::vector<float> last_logits_;
    ForwardTrace       trace_;

    // scratch buffers reused across steps
    std::vector<float> x_, normed_, q_, attn_out_, head_row_, a_h_, mlp_hidden_, mlp_out_, probs_;
};

//
// generation
//

enum class DecodeMode { greedy, temperature };

struct GenConfig {
    int        max_new_tokens = 64;
    DecodeMode mode           = DecodeMode::greedy;
    float      temperature    = 1.0f;
    uint64_t   seed           = 0;
    std::set<int> stop_tokens;  // generation halts after emitting one of these
};

enum class StopReason { stop_token, budget, context };

struct StepInfo {
    int   token;
    float logit;      // logit of the emitted token
    float max_logit;  // max over the vocabulary at that step
};

struct GeneratedSequence {
    std::vector<int>      tokens;  // generated tokens only (prompt excluded)
    std::vector<StepInfo> steps;
    StopReason            stop = StopReason::budget;
};

// Samples the next token from a logit row: greedy takes the argmax (lowest id
// wins ties); temperature divides by t and samples the softmax with the given
// RNG, scanning the CDF in token-id order.
int sample_token(const std::vector<float> & logits, const GenConfig & cfg, Rng & rng);

GeneratedSequence generate(const Model & model, const std::vector<int> & prompt,
                           const GenConfig & cfg, const ResidualHook * hook = nullptr);

} // namespace cotkit
