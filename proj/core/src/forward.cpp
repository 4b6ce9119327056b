#include "cotkit/forward.hpp"

#include "cotkit/tokenizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cotkit {

TapSpec TapSpec::all_layers(const ModelConfig & c, bool attn, bool mlp) {
    TapSpec t;
    for (int l = 0; l < c.n_layers; ++l) {
        if (attn) {
            t.want_r_attn.insert(l);
        }
        if (mlp) {
            t.want_r_mlp.insert(l);
        }
    }
    return t;
}

TapSpec TapSpec::all_heads(const ModelConfig & c) {
    TapSpec t;
    for (int l = 0; l < c.n_layers; ++l) {
        for (int h = 0; h < c.n_heads; ++h) {
            t.want_head_contrib.insert({l, h});
        }
    }
    return t;
}

void TapSpec::validate(const ModelConfig & c) const {
    for (int l : want_r_attn) {
        if (l < 0 || l >= c.n_layers) {
            throw error("taps: r_attn layer " + std::to_string(l) + " out of range");
        }
    }
    for (int l : want_r_mlp) {
        if (l < 0 || l >= c.n_layers) {
            throw error("taps: r_mlp layer " + std::to_string(l) + " out of range");
        }
    }
    for (auto [l, h] : want_head_contrib) {
        if (l < 0 || l >= c.n_layers || h < 0 || h >= c.n_heads) {
            throw error("taps: head (" + std::to_string(l) + "," + std::to_string(h) +
                        ") out of range");
        }
    }
}

namespace {

// mean and variance over i ascending, then (x - mu)/sqrt(var + eps)*scale + bias
void layer_norm(const float * x, int d, const LayerNormParams & p, float eps, float * out) {
    float mean = 0.0f;
    for (int i = 0; i < d; ++i) {
        mean += x[i];
    }
    mean /= float(d);
    float var = 0.0f;
    for (int i = 0; i < d; ++i) {
        const float c = x[i] - mean;
        var += c * c;
    }
    var /= float(d);
    const float inv = 1.0f / std::sqrt(var + eps);
    for (int i = 0; i < d; ++i) {
        out[i] = (x[i] - mean) * inv * p.scale[i] + p.bias[i];
    }
}

inline float gelu(float x) {
    // tanh approximation
    const float c = 0.7978845608028654f;  // sqrt(2/pi)
    return 0.5f * x * (1.0f + std::tanh(c * (x + 0.044715f * x * x * x)));
}

} // namespace

DecodeSession::DecodeSession(const Model & model, const ResidualHook * hook, const TapSpec * taps)
    : model_(model), hook_(hook) {
    if (taps) {
        taps->validate(model.config);
        taps_       = *taps;
        want_trace_ = true;
    }
    if (hook_ && !hook_->model_fingerprint.empty() &&
        !model_.compatible_with(hook_->model_fingerprint)) {
        throw error("hook: model fingerprint mismatch (hook built for " +
                    hook_->model_fingerprint + ")");
    }
    const int d = model.config.hidden_dim;
    k_cache_.assign(model.config.n_layers, Mat(model.config.max_seq_len, d));
    v_cache_.assign(model.config.n_layers, Mat(model.config.max_seq_len, d));
    x_.resize(d);
    normed_.resize(d);
    q_.resize(d);
    attn_out_.resize(d);
    head_row_.resize(d);
    a_h_.resize(model.config.head_dim);
    mlp_hidden_.resize(4 * d);
    mlp_out_.resize(d);
    probs_.resize(model.config.max_seq_len);
    if (want_trace_) {
        for (int l : taps_.want_r_attn) {
            trace_.r_attn.emplace(l, Mat(0, d));
        }
        for (int l : taps_.want_r_mlp) {
            trace_.r_mlp.emplace(l, Mat(0, d));
        }
        for (auto lh : taps_.want_head_contrib) {
            trace_.head_contrib.emplace(lh, Mat(0, d));
        }
        trace_.logits = Mat(0, model.config.vocab_size);
    }
}

const std::vector<float> & DecodeSession::last_logits() const {
    if (n_pos_ == 0) {
        throw error("decode: no positions fed yet");
    }
    return last_logits_;
}

void DecodeSession::feed(std::span<const int> tokens, bool prompt) {
    for (int t : tokens) {
        step(t, prompt);
    }
}

namespace {

void append_row(Mat & m, const float * row, int d) {
    m.cols = d;
    m.rows += 1;
    m.v.insert(m.v.end(), row, row + d);
}

} // namespace

void DecodeSession::step(int token, bool prompt) {
    const ModelConfig & c = model_.config;
    const int d  = c.hidden_dim;
    const int dh = c.head_dim;

    if (token < 0 || token >= c.vocab_size) {
        throw error("decode: token id " + std::to_string(token) + " outside vocab of " +
                    std::to_string(c.vocab_size));
    }
    if (n_pos_ >= c.max_seq_len) {
        throw error("decode: sequence longer than max_seq_len " + std::to_string(c.max_seq_len));
    }
    const int  t         = n_pos_;
    const bool hook_live = hook_ && hook_->apply && (!prompt || hook_->prompt_positions);

    const float * te = model_.tok_embedding.row(token);
    const float * pe = model_.pos_embedding.row(t);
    for (int i = 0; i < d; ++i) {
        x_[i] = te[i] + pe[i];
    }

    for (int l = 0; l < c.n_layers; ++l) {
        const LayerWeights & lw = model_.layers[l];

        layer_norm(x_.data(), d, lw.ln1, c.ln_epsilon, normed_.data());

        vecmat(normed_.data(), lw.wq, q_.data());
        float * krow = k_cache_[l].row(t);
        float * vrow = v_cache_[l].row(t);
        vecmat(normed_.data(), lw.wk, krow);
        vecmat(normed_.data(), lw.wv, vrow);

        std::fill(attn_out_.begin(), attn_out_.end(), 0.0f);
        const float inv_sqrt_dh = 1.0f / std::sqrt(float(dh));
        for (int h = 0; h < c.n_heads; ++h) {
            const int off = h * dh;

            // causal attention over positions 0..t, all reductions ascending
            float maxs = -std::numeric_limits<float>::infinity();
            for (int s = 0; s <= t; ++s) {
                const float * ks    = k_cache_[l].row(s) + off;
                float         score = 0.0f;
                for (int i = 0; i < dh; ++i) {
                    score += q_[off + i] * ks[i];
                }
                score *= inv_sqrt_dh;
                probs_[s] = score;
                maxs      = std::max(maxs, score);
            }
            float z = 0.0f;
            for (int s = 0; s <= t; ++s) {
                probs_[s] = std::exp(probs_[s] - maxs);
                z += probs_[s];
            }
            const float invz = 1.0f / z;

            // head output in its dh-subspace
            std::fill(a_h_.begin(), a_h_.end(), 0.0f);
            for (int s = 0; s <= t; ++s) {
                const float   p  = probs_[s] * invz;
                const float * vs = v_cache_[l].row(s) + off;
                for (int i = 0; i < dh; ++i) {
                    a_h_[i] += p * vs[i];
                }
            }

            // contribution = a_h times rows [off, off+dh) of wo
            std::fill(head_row_.begin(), head_row_.end(), 0.0f);
            for (int i = 0; i < dh; ++i) {
                const float   ai = a_h_[i];
                const float * wr = lw.wo.row(off + i);
                for (int j = 0; j < d; ++j) {
                    head_row_[j] += ai * wr[j];
                }
            }
            if (want_trace_) {
                auto it = trace_.head_contrib.find({l, h});
                if (it != trace_.head_contrib.end()) {
                    append_row(it->second, head_row_.data(), d);
                }
            }
            for (int j = 0; j < d; ++j) {
                attn_out_[j] += head_row_[j];
            }
        }

        for (int i = 0; i < d; ++i) {
            x_[i] += attn_out_[i];
        }
        if (hook_live) {
            hook_->apply(l, ResidualKind::attn, std::span<float>(x_.data(), d));
        }
        if (want_trace_) {
            auto it = trace_.r_attn.find(l);
            if (it != trace_.r_attn.end()) {
                append_row(it->second, x_.data(), d);
            }
        }

        layer_norm(x_.data(), d, lw.ln2, c.ln_epsilon, normed_.data());
        vecmat(normed_.data(), lw.mlp_w_in, mlp_hidden_.data());
        for (int i = 0; i < 4 * d; ++i) {
            mlp_hidden_[i] = gelu(mlp_hidden_[i] + lw.mlp_b_in[i]);
        }
        vecmat(mlp_hidden_.data(), lw.mlp_w_out, mlp_out_.data());
        for (int i = 0; i < d; ++i) {
            x_[i] += mlp_out_[i] + lw.mlp_b_out[i];
        }
        if (hook_live) {
            hook_->apply(l, ResidualKind::mlp, std::span<float>(x_.data(), d));
        }
        if (want_trace_) {
            auto it = trace_.r_mlp.find(l);
            if (it != trace_.r_mlp.end()) {
                append_row(it->second, x_.data(), d);
            }
        }
    }

    layer_norm(x_.data(), d, model_.final_ln, c.ln_epsilon, normed_.data());
    last_logits_.resize(c.vocab_size);
    vecmat(normed_.data(), model_.unembed, last_logits_.data());
    if (want_trace_) {
        append_row(trace_.logits, last_logits_.data(), c.vocab_size);
    }

    tokens_.push_back(token);
    ++n_pos_;
}

ForwardTrace forward(const Model & model, const std::vector<int> & tokens, const TapSpec & taps,
                     const ResidualHook * hook) {
    if (tokens.empty()) {
        throw error("forward: empty token sequence");
    }
    if (int(tokens.size()) > model.config.max_seq_len) {
        throw error("forward: sequence of " + std::to_string(tokens.size()) +
                    " tokens exceeds max_seq_len " + std::to_string(model.config.max_seq_len));
    }
    // logits for every position are part of the contract; a tracing session
    // records them unconditionally
    DecodeSession session(model, hook, &taps);
    session.feed(tokens, /*prompt=*/true);
    return session.trace();
}

int sample_token(const std::vector<float> & logits, const GenConfig & cfg, Rng & rng) {
    if (cfg.mode == DecodeMode::greedy) {
        int best = 0;
        for (int i = 1; i < int(logits.size()); ++i) {
            if (logits[i] > logits[best]) {
                best = i;
            }
        }
        return best;
    }
    if (!(cfg.temperature > 0.0f)) {
        throw error("generate: temperature must be positive");
    }
    double maxl = -std::numeric_limits<double>::infinity();
    for (float l : logits) {
        maxl = std::max(maxl, double(l) / cfg.temperature);
    }
    std::vector<double> p(logits.size());
    double              z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(double(logits[i]) / cfg.temperature - maxl);
        z += p[i];
    }
    const double u   = rng.uniform01() * z;
    double       cum = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        cum += p[i];
        if (u < cum) {
            return int(i);
        }
    }
    return int(logits.size()) - 1;
}

GeneratedSequence generate(const Model & model, const std::vector<int> & prompt,
                           const GenConfig & cfg, const ResidualHook * hook) {
    if (prompt.empty()) {
        throw error("generate: empty prompt");
    }
    if (cfg.max_new_tokens <= 0) {
        throw error("generate: max_new_tokens must be positive");
    }
    if (int(prompt.size()) + 1 > model.config.max_seq_len) {
        throw error("generate: prompt leaves no room for new tokens");
    }

    DecodeSession session(model, hook);
    session.feed(prompt, /*prompt=*/true);

    Rng rng(cfg.seed);
    GeneratedSequence out;
    out.stop = StopReason::budget;
    while (int(out.tokens.size()) < cfg.max_new_tokens) {
        const std::vector<float> & logits = session.last_logits();
        const int                  next   = sample_token(logits, cfg, rng);
        float maxl = logits[0];
        for (float l : logits) {
            maxl = std::max(maxl, l);
        }
        out.tokens.push_back(next);
        out.steps.push_back({next, logits[next], maxl});
        if (cfg.stop_tokens.count(next)) {
            out.stop = StopReason::stop_token;
            break;
        }
        if (session.length() >= model.config.max_seq_len) {
            out.stop = StopReason::context;
            break;
        }
        session.feed_one(next, /*prompt=*/false);
    }
    return out;
}

} // namespace cotkit
