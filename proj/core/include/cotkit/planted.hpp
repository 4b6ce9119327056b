#pragma once

#include "cotkit/corpus.hpp"
#include "cotkit/model.hpp"

#include <string>
#include <vector>

namespace cotkit {

// Synthetic fixture with known ground truth: one designated head writes a
// large component along -u whenever the control byte '!' appears in context,
// and the CONTINUE byte '+' gets likelier as the residual moves along u. The
// whole pipeline can therefore be checked end to end against u and
// (layer, head) by construction.
//
// u must be a unit vector whose mean-centered part keeps norm >= 0.25:
// LayerNorm makes a constant direction invisible to the logit readout.

namespace planted {
constexpr int CONTINUE_TOKEN = '+';  // 43
constexpr int CONTROL_TOKEN  = '!';  // 33
constexpr int ANSWER_TOKEN   = '9';  // 57
} // namespace planted

struct PlantedDims {
    int n_layers    = 4;
    int n_heads     = 4;
    int hidden_dim  = 32;
    int max_seq_len = 256;
    int vocab_size  = 261;
};

Model build_planted_model(uint64_t seed, const std::vector<float> & u,
                          std::pair<int, int> planted_head, const PlantedDims & dims = {});

struct PlantedGroundTruth {
    std::vector<float> u;
    int layer = 0;
    int head  = 0;
    int continue_token = planted::CONTINUE_TOKEN;
    int control_token  = planted::CONTROL_TOKEN;
    int answer_token   = planted::ANSWER_TOKEN;
};

void               save_ground_truth(const PlantedGroundTruth & gt, const std::string & path);
PlantedGroundTruth load_ground_truth(const std::string & path);

// unit vector orthogonal to the all-ones direction, suitable as a planted u
std::vector<float> random_unit_centered(uint64_t seed, int dim);

struct PlantedCorpusSpec {
    int n_long  = 64;
    int n_short = 64;
    int long_span_min  = 30;  // CoT lengths drawn uniformly from these ranges
    int long_span_max  = 50;
    int short_span_min = 4;
    int short_span_max = 9;
};

// Long responses think in '+' bytes, short responses think in '!' bytes,
// both close with </think> and answer "9". Thresholds (long_min=20,
// short_max=12) split it cleanly.
std::vector<ResponseRecord> make_planted_corpus(uint64_t seed, const PlantedCorpusSpec & spec = {});

constexpr int planted_long_min  = 20;
constexpr int planted_short_max = 12;

// `count` unit rows orthogonal to every anchor row and to each other,
// computed in double; shared by the fixture builders and tests
std::vector<std::vector<double>> orthonormal_rows(Rng & rng, int dim, int count,
                                                  const std::vector<std::vector<double>> & anchors);

} // namespace cotkit
