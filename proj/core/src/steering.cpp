#include "cotkit/steering.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>

using json = nlohmann::json;

namespace cotkit {

std::set<int> SteeringSpec::all_layers(int n_layers) {
    std::set<int> s;
    for (int l = 0; l < n_layers; ++l) {
        s.insert(l);
    }
    return s;
}

SteeringHook make_steering_hook(const SteeringSpec & spec, const DirectionSet & dirs) {
    if (spec.layer_mask.empty()) {
        throw error("steering: layer mask is empty");
    }
    if (!spec.use_attn && !spec.use_mlp) {
        throw error("steering: no kinds selected");
    }
    if (!std::isfinite(spec.alpha)) {
        throw error("steering: alpha must be finite");
    }
    auto state            = std::make_shared<SteeringHook::State>();
    state->n_layers       = dirs.n_layers;
    state->hidden_dim     = dirs.hidden_dim;
    state->generated_only = spec.generated_only;
    state->model_fingerprint = dirs.provenance.model_fingerprint;
    state->inj_attn.resize(dirs.n_layers);
    state->inj_mlp.resize(dirs.n_layers);

    for (int l : spec.layer_mask) {
        if (l < 0 || l >= dirs.n_layers) {
            throw error("steering: layer " + std::to_string(l) + " out of range");
        }
        if (spec.use_attn) {
            if (dirs.attn_degenerate[l]) {
                throw error("steering: attn direction at layer " + std::to_string(l) +
                            " is degenerate");
            }
            std::vector<float> inj(dirs.hidden_dim);
            for (int i = 0; i < dirs.hidden_dim; ++i) {
                inj[i] = spec.alpha * dirs.v_attn[l][i];
            }
            state->inj_attn[l] = std::move(inj);
        }
        if (spec.use_mlp) {
            if (dirs.mlp_degenerate[l]) {
                throw error("steering: mlp direction at layer " + std::to_string(l) +
                            " is degenerate");
            }
            std::vector<float> inj(dirs.hidden_dim);
            for (int i = 0; i < dirs.hidden_dim; ++i) {
                inj[i] = spec.alpha * dirs.v_mlp[l][i];
            }
            state->inj_mlp[l] = std::move(inj);
        }
    }
    SteeringHook hook;
    hook.state_ = std::move(state);
    return hook;
}

const std::vector<float> * SteeringHook::injection(int layer, ResidualKind kind) const {
    const auto & block = kind == ResidualKind::attn ? state_->inj_attn : state_->inj_mlp;
    if (layer < 0 || layer >= int(block.size()) || block[layer].empty()) {
        return nullptr;
    }
    return &block[layer];
}

SteeringHook SteeringHook::stacked(const SteeringHook & a, const SteeringHook & b) {
    if (a.state_->n_layers != b.state_->n_layers ||
        a.state_->hidden_dim != b.state_->hidden_dim) {
        throw error("steering: stacked hooks built for different shapes");
    }
    if (!a.state_->model_fingerprint.empty() && !b.state_->model_fingerprint.empty() &&
        a.state_->model_fingerprint != b.state_->model_fingerprint) {
        throw error("steering: stacked hooks built against different models");
    }
    auto state            = std::make_shared<State>(*a.state_);
    state->generated_only = a.state_->generated_only && b.state_->generated_only;
    auto merge = [&](std::vector<std::vector<float>> & dst,
                     const std::vector<std::vector<float>> & src) {
        for (size_t l = 0; l < src.size(); ++l) {
            if (src[l].empty()) {
                continue;
            }
            if (dst[l].empty()) {
                dst[l] = src[l];
                continue;
            }
            for (size_t i = 0; i < src[l].size(); ++i) {
                dst[l][i] += src[l][i];
            }
        }
    };
    merge(state->inj_attn, b.state_->inj_attn);
    merge(state->inj_mlp, b.state_->inj_mlp);
    SteeringHook hook;
    hook.state_ = std::move(state);
    return hook;
}

ResidualHook SteeringHook::residual_hook() const {
    ResidualHook rh;
    rh.prompt_positions  = !state_->generated_only;
    rh.model_fingerprint = state_->model_fingerprint;
    auto state           = state_;  // keep the injection table alive inside the closure
    rh.apply = [state](int layer, ResidualKind kind, std::span<float> row) {
        const auto & block = kind == ResidualKind::attn ? state->inj_attn : state->inj_mlp;
        if (layer >= int(block.size()) || block[layer].empty()) {
            return;
        }
        const std::vector<float> & inj = block[layer];
        for (size_t i = 0; i < inj.size(); ++i) {
            if (inj[i] != 0.0f) {  // exact zeros leave residual bits alone
                row[i] += inj[i];
            }
        }
    };
    return rh;
}

namespace {

std::string kinds_string(const SteeringSpec & spec) {
    if (spec.use_attn && spec.use_mlp) {
        return "attn+mlp";
    }
    return spec.use_attn ? "attn" : "mlp";
}

std::string layers_string(const SteeringSpec & spec, int n_layers) {
    if (int(spec.layer_mask.size()) == n_layers) {
        return "all";
    }
    std::string s;
    for (int l : spec.layer_mask) {
        if (!s.empty()) {
            s += '-';
        }
        s += std::to_string(l);
    }
    return s;
}

} // namespace

SweepReport sweep_alpha(const Model & model, const std::vector<ResponseRecord> & problems,
                        std::vector<float> alphas, const SteeringSpec & spec_template,
                        const DirectionSet & dirs, const RunConfig & run_cfg,
                        const GenConfig & gen_cfg, int jobs) {
    if (problems.empty()) {
        throw error("sweep_alpha: no problems");
    }
    if (alphas.empty()) {
        throw error("sweep_alpha: no alphas");
    }
    for (float a : alphas) {
        if (!std::isfinite(a)) {
            throw error("sweep_alpha: alphas must be finite");
        }
    }
    std::sort(alphas.begin(), alphas.end());

    SweepReport report;
    for (float alpha : alphas) {
        SteeringSpec spec = spec_template;
        spec.alpha        = alpha;
        const SteeringHook hook = make_steering_hook(spec, dirs);
        const ResidualHook rh   = hook.residual_hook();

        const std::vector<EvalRecord> records =
            run_eval(model, problems, run_cfg, gen_cfg, &rh, jobs);

        SweepRow row;
        row.alpha  = alpha;
        row.kinds  = kinds_string(spec);
        row.layers = layers_string(spec, dirs.n_layers);
        row.n      = int(records.size());
        double len = 0.0;
        int    ok  = 0;
        for (const EvalRecord & r : records) {
            len += r.reasoning_length;
            ok += r.correct ? 1 : 0;
        }
        row.mean_cot_tokens = records.empty() ? 0.0 : len / double(records.size());
        row.accuracy        = records.empty() ? 0.0 : double(ok) / double(records.size());
        report.rows.push_back(row);
    }
    return report;
}

void write_sweep_csv(const SweepReport & report, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("write_sweep_csv: cannot write " + path);
    }
    f << "alpha,kind,layers,mean_cot_tokens,accuracy,n\n";
    for (const SweepRow & r : report.rows) {
        f << fmt_float(r.alpha) << ',' << r.kinds << ',' << r.layers << ','
          << fmt_float(r.mean_cot_tokens) << ',' << fmt_float(r.accuracy) << ',' << r.n << '\n';
    }
}

std::string sweep_json(const SweepReport & report) {
    json rows = json::array();
    for (const SweepRow & r : report.rows) {
        rows.push_back({{"alpha", r.alpha},
                        {"kind", r.kinds},
                        {"layers", r.layers},
                        {"mean_cot_tokens", r.mean_cot_tokens},
                        {"accuracy", r.accuracy},
                        {"n", r.n}});
    }
    return json{{"rows", rows}}.dump(2) + "\n";
}

} // namespace cotkit
