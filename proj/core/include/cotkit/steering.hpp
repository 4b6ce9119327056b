#pragma once

#include "cotkit/directions.hpp"
#include "cotkit/eval.hpp"
#include "cotkit/forward.hpp"

#include <memory>
#include <set>

namespace cotkit {

struct SteeringSpec {
    float         alpha = 0.0f;
    bool          use_attn = true;
    bool          use_mlp  = false;
    std::set<int> layer_mask;             // which layers get the shift
    bool          generated_only = false; // skip prompt positions

    static std::set<int> all_layers(int n_layers);
};

// r <- r + alpha * v[layer] at the selected taps. Stacked hooks merge their
// shift vectors before application, so alpha followed by -alpha cancels
// bit-exactly; zero components are skipped so an alpha of 0 leaves residual
// bits untouched.
class SteeringHook {
  public:
    ResidualHook residual_hook() const;

    const std::vector<float> * injection(int layer, ResidualKind kind) const;
    const std::string &        model_fingerprint() const { return state_->model_fingerprint; }

    static SteeringHook stacked(const SteeringHook & a, const SteeringHook & b);

    friend SteeringHook make_steering_hook(const SteeringSpec & spec, const DirectionSet & dirs);

  private:
    struct State {
        int  n_layers   = 0;
        int  hidden_dim = 0;
        bool generated_only = false;
        std::string model_fingerprint;
        // per layer; empty vector means no shift at that tap
        std::vector<std::vector<float>> inj_attn;
        std::vector<std::vector<float>> inj_mlp;
    };
    std::shared_ptr<const State> state_;
};

SteeringHook make_steering_hook(const SteeringSpec & spec, const DirectionSet & dirs);

//
// alpha sweep
//

struct SweepRow {
    float       alpha = 0.0f;
    std::string kinds;   // "attn", "mlp" or "attn+mlp"
    std::string layers;  // "all" or dash-joined layer list
    double      mean_cot_tokens = 0.0;
    double      accuracy        = 0.0;
    int         n               = 0;
};

struct SweepReport {
    std::vector<SweepRow> rows;  // sorted by alpha ascending
};

// One eval per alpha; failures surface as failed records inside run_eval,
// never as a sweep abort.
SweepReport sweep_alpha(const Model & model, const std::vector<ResponseRecord> & problems,
                        std::vector<float> alphas, const SteeringSpec & spec_template,
                        const DirectionSet & dirs, const RunConfig & run_cfg,
                        const GenConfig & gen_cfg, int jobs = 1);

// CSV: alpha,kind,layers,mean_cot_tokens,accuracy,n
void write_sweep_csv(const SweepReport & report, const std::string & path);
std::string sweep_json(const SweepReport & report);

} // namespace cotkit
