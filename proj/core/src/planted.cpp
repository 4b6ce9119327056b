#include "cotkit/planted.hpp"

#include "cotkit/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

using json = nlohmann::json;

namespace cotkit {

std::vector<std::vector<double>> orthonormal_rows(Rng & rng, int dim, int count,
                                                  const std::vector<std::vector<double>> & anchors) {
    std::vector<std::vector<double>> against = anchors;
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < count; ++k) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 64) {
                throw error("orthonormal_rows: cannot find an orthogonal vector, dim too small");
            }
            std::vector<double> cand(dim);
            for (double & x : cand) {
                x = rng.normal();
            }
            for (const std::vector<double> & a : against) {
                double proj = 0.0;
                for (int i = 0; i < dim; ++i) {
                    proj += cand[i] * a[i];
                }
                for (int i = 0; i < dim; ++i) {
                    cand[i] -= proj * a[i];
                }
            }
            double nsq = 0.0;
            for (double x : cand) {
                nsq += x * x;
            }
            if (nsq < 1e-6) {
                continue;  // nearly in the span, redraw
            }
            const double inv = 1.0 / std::sqrt(nsq);
            for (double & x : cand) {
                x *= inv;
            }
            against.push_back(cand);
            rows.push_back(std::move(cand));
            break;
        }
    }
    return rows;
}

namespace {

// basis slots for the planted machine
struct PlantedBasis {
    std::vector<double> w;  // control flag read by the planted head
    std::vector<double> n;  // CONTINUE token identity
    std::vector<double> p;  // position ramp driving </think>
    std::vector<double> s;  // ballast keeping LayerNorm variance healthy
    std::vector<double> m;  // <think> kick starting the chain
    std::vector<double> z;  // </think> -> answer
    std::vector<double> y;  // answer -> EOS
    std::vector<double> u_centered;  // mean-free unit part of u
};

PlantedBasis make_basis(Rng & rng, const std::vector<float> & u, int d) {
    std::vector<double> ones(d, 1.0 / std::sqrt(double(d)));
    std::vector<double> ud(u.begin(), u.end());

    double mean_proj = 0.0;
    for (int i = 0; i < d; ++i) {
        mean_proj += ud[i] * ones[i];
    }
    std::vector<double> uc(d);
    double              nsq = 0.0;
    for (int i = 0; i < d; ++i) {
        uc[i] = ud[i] - mean_proj * ones[i];
        nsq += uc[i] * uc[i];
    }
    if (nsq < 0.25 * 0.25) {
        throw error("build_planted_model: u is too close to a constant vector; LayerNorm would "
                    "hide it from the readout");
    }
    const double inv = 1.0 / std::sqrt(nsq);
    for (double & x : uc) {
        x *= inv;
    }

    const std::vector<std::vector<double>> anchors  = {ones, uc};
    std::vector<std::vector<double>>       rows     = orthonormal_rows(rng, d, 7, anchors);
    PlantedBasis                           basis;
    basis.w          = rows[0];
    basis.n          = rows[1];
    basis.p          = rows[2];
    basis.s          = rows[3];
    basis.m          = rows[4];
    basis.z          = rows[5];
    basis.y          = rows[6];
    basis.u_centered = uc;
    return basis;
}

void add_scaled(float * dst, const std::vector<double> & v, double scale) {
    for (size_t i = 0; i < v.size(); ++i) {
        dst[i] = float(double(dst[i]) + scale * v[i]);
    }
}

// noise confined to the subspace orthogonal to every structured direction,
// so readout margins stay exact by construction
void fill_free_noise(Rng & rng, float * dst, int d, double sigma,
                     const std::vector<std::vector<double>> & structured) {
    std::vector<double> cand(d);
    for (double & x : cand) {
        x = rng.normal(0.0, sigma);
    }
    for (const std::vector<double> & a : structured) {
        double proj = 0.0;
        for (int i = 0; i < d; ++i) {
            proj += cand[i] * a[i];
        }
        for (int i = 0; i < d; ++i) {
            cand[i] -= proj * a[i];
        }
    }
    for (int i = 0; i < d; ++i) {
        dst[i] = float(cand[i]);
    }
}

// tuned gains; see the planted tests for the margins they produce
constexpr double k_head_gain      = 12.0;  // -g u write strength
constexpr double k_value_gain     = 3.0;   // control-flag readout
constexpr double k_flag_scale     = 0.8;   // '!' embedding along w
constexpr double k_cont_scale_n   = 0.8;   // '+' embedding along n
constexpr double k_cont_scale_u   = 0.5;   // '+' embedding along centered u
constexpr double k_ballast        = 1.0;
constexpr double k_chain_scale    = 1.5;   // <think>/</think>/'9' chain embeddings
constexpr double k_pos_scale      = 1.5;
constexpr double k_logit_continue = 2.0;
constexpr double k_logit_kick     = 3.0;
constexpr double k_logit_close    = 2.0;
constexpr double k_logit_chain    = 4.0;

} // namespace

Model build_planted_model(uint64_t seed, const std::vector<float> & u,
                          std::pair<int, int> planted_head, const PlantedDims & dims) {
    const int d = dims.hidden_dim;
    if (int(u.size()) != d) {
        throw error("build_planted_model: u has length " + std::to_string(u.size()) +
                    ", expected hidden_dim " + std::to_string(d));
    }
    const float un = norm2(u.data(), d);
    if (std::fabs(un - 1.0f) > 1e-6f) {
        throw error("build_planted_model: u is not unit length");
    }
    if (d < 16 || d % dims.n_heads != 0) {
        throw error("build_planted_model: hidden_dim must be >= 16 and divisible by n_heads");
    }
    const auto [pl, ph] = planted_head;
    if (pl < 0 || pl >= dims.n_layers || ph < 0 || ph >= dims.n_heads) {
        throw error("build_planted_model: planted head out of range");
    }
    if (dims.vocab_size < tok::FULL_VOCAB) {
        throw error("build_planted_model: vocab_size must cover the byte-level scheme");
    }

    Rng rng(seed);

    ModelConfig cfg;
    cfg.n_layers    = dims.n_layers;
    cfg.n_heads     = dims.n_heads;
    cfg.hidden_dim  = d;
    cfg.head_dim    = d / dims.n_heads;
    cfg.vocab_size  = dims.vocab_size;
    cfg.max_seq_len = dims.max_seq_len;
    cfg.ln_epsilon  = 1e-5f;
    cfg.validate();

    const PlantedBasis basis = make_basis(rng, u, d);
    const std::vector<double> ud(u.begin(), u.end());
    std::vector<std::vector<double>> structured = {
        basis.w, basis.n, basis.p, basis.s, basis.m, basis.z, basis.y, basis.u_centered,
        std::vector<double>(d, 1.0 / std::sqrt(double(d)))};

    Model m;
    m.config = cfg;
    // start from an all-zero skeleton
    m.tok_embedding = Mat(cfg.vocab_size, d);
    m.pos_embedding = Mat(cfg.max_seq_len, d);
    m.layers.resize(cfg.n_layers);
    const int dh = cfg.head_dim;
    for (LayerWeights & lw : m.layers) {
        lw.ln1.scale.assign(d, 1.0f);
        lw.ln1.bias.assign(d, 0.0f);
        lw.wq = Mat(d, d);
        lw.wk = Mat(d, d);
        lw.wv = Mat(d, d);
        lw.wo = Mat(d, d);
        lw.ln2.scale.assign(d, 1.0f);
        lw.ln2.bias.assign(d, 0.0f);
        lw.mlp_w_in = Mat(d, 4 * d);
        lw.mlp_b_in.assign(4 * d, 0.0f);
        lw.mlp_w_out = Mat(4 * d, d);  // zero: the MLP path is inert
        lw.mlp_b_out.assign(d, 0.0f);
    }
    m.final_ln.scale.assign(d, 1.0f);
    m.final_ln.bias.assign(d, 0.0f);
    m.unembed = Mat(d, cfg.vocab_size);

    // token embeddings: free-subspace noise + ballast, plus structured parts
    for (int v = 0; v < cfg.vocab_size; ++v) {
        fill_free_noise(rng, m.tok_embedding.row(v), d, 0.02, structured);
        add_scaled(m.tok_embedding.row(v), basis.s, k_ballast);
    }
    add_scaled(m.tok_embedding.row(planted::CONTROL_TOKEN), basis.w, k_flag_scale);
    add_scaled(m.tok_embedding.row(planted::CONTINUE_TOKEN), basis.n, k_cont_scale_n);
    add_scaled(m.tok_embedding.row(planted::CONTINUE_TOKEN), basis.u_centered, k_cont_scale_u);
    add_scaled(m.tok_embedding.row(tok::THINK_OPEN), basis.m, k_chain_scale);
    add_scaled(m.tok_embedding.row(tok::THINK_CLOSE), basis.z, k_chain_scale);
    add_scaled(m.tok_embedding.row(planted::ANSWER_TOKEN), basis.y, k_chain_scale);

    // position ramp along p
    for (int t = 0; t < cfg.max_seq_len; ++t) {
        const double ramp = k_pos_scale * double(t) / double(cfg.max_seq_len - 1);
        add_scaled(m.pos_embedding.row(t), basis.p, ramp);
    }

    // attention: texture on q/k everywhere; only the planted head carries
    // value/output weight, so every other head contributes exactly zero
    for (int l = 0; l < cfg.n_layers; ++l) {
        LayerWeights & lw = m.layers[l];
        for (size_t i = 0; i < lw.wq.v.size(); ++i) {
            lw.wq.v[i] = float(rng.normal(0.0, 0.05));
            lw.wk.v[i] = float(rng.normal(0.0, 0.05));
        }
        for (size_t i = 0; i < lw.mlp_w_in.v.size(); ++i) {
            lw.mlp_w_in.v[i] = float(rng.normal(0.0, 0.05));
        }
    }
    {
        LayerWeights & lw = m.layers[pl];
        // uniform attention for the planted head
        for (int i = 0; i < d; ++i) {
            for (int j = 0; j < dh; ++j) {
                lw.wq.at(i, ph * dh + j) = 0.0f;
                lw.wk.at(i, ph * dh + j) = 0.0f;
            }
        }
        // value column 0 reads the control flag
        for (int i = 0; i < d; ++i) {
            lw.wv.at(i, ph * dh + 0) = float(k_value_gain * basis.w[i]);
        }
        // output row 0 writes -g u
        for (int j = 0; j < d; ++j) {
            lw.wo.at(ph * dh + 0, j) = float(-k_head_gain * ud[j]);
        }
    }

    // logit readouts
    for (int i = 0; i < d; ++i) {
        m.unembed.at(i, planted::CONTINUE_TOKEN) =
            float(k_logit_continue * basis.u_centered[i] + k_logit_kick * basis.m[i]);
        m.unembed.at(i, tok::THINK_CLOSE)      = float(k_logit_close * basis.p[i]);
        m.unembed.at(i, planted::ANSWER_TOKEN) = float(k_logit_chain * basis.z[i]);
        m.unembed.at(i, tok::EOS)              = float(k_logit_chain * basis.y[i]);
    }

    m.refresh_fingerprint();
    return m;
}

void save_ground_truth(const PlantedGroundTruth & gt, const std::string & path) {
    json j;
    j["u"]              = gt.u;
    j["layer"]          = gt.layer;
    j["head"]           = gt.head;
    j["continue_token"] = gt.continue_token;
    j["control_token"]  = gt.control_token;
    j["answer_token"]   = gt.answer_token;
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("save_ground_truth: cannot write " + path);
    }
    f << j.dump(2) << "\n";
}

PlantedGroundTruth load_ground_truth(const std::string & path) {
    std::ifstream f(path);
    if (!f) {
        throw error("load_ground_truth: cannot open " + path);
    }
    json j;
    try {
        j = json::parse(f);
    } catch (const std::exception & e) {
        throw error("load_ground_truth: parse failure: " + std::string(e.what()));
    }
    PlantedGroundTruth gt;
    gt.u              = j.at("u").get<std::vector<float>>();
    gt.layer          = j.at("layer").get<int>();
    gt.head           = j.at("head").get<int>();
    gt.continue_token = j.value("continue_token", planted::CONTINUE_TOKEN);
    gt.control_token  = j.value("control_token", planted::CONTROL_TOKEN);
    gt.answer_token   = j.value("answer_token", planted::ANSWER_TOKEN);
    return gt;
}

std::vector<float> random_unit_centered(uint64_t seed, int dim) {
    Rng rng(seed);
    const std::vector<std::vector<double>> anchors = {
        std::vector<double>(dim, 1.0 / std::sqrt(double(dim)))};
    const std::vector<std::vector<double>> rows = orthonormal_rows(rng, dim, 1, anchors);
    std::vector<float> u(dim);
    for (int i = 0; i < dim; ++i) {
        u[i] = float(rows[0][i]);
    }
    // renormalize after the f32 cast
    const float n = norm2(u.data(), dim);
    for (float & x : u) {
        x /= n;
    }
    return u;
}

std::vector<ResponseRecord> make_planted_corpus(uint64_t seed, const PlantedCorpusSpec & spec) {
    if (spec.long_span_min <= planted_long_min) {
        throw error("make_planted_corpus: long spans must exceed the long threshold");
    }
    if (spec.short_span_max >= planted_short_max) {
        throw error("make_planted_corpus: short spans must stay under the short threshold");
    }
    Rng rng(seed);
    std::vector<ResponseRecord> records;
    records.reserve(spec.n_long + spec.n_short);

    auto make_problem = [&](int i) {
        const int a = rng.uniform_int(10, 99);
        const int b = rng.uniform_int(10, 99);
        return "item " + std::to_string(i) + ": " + std::to_string(a) + " x " + std::to_string(b);
    };

    char id_buf[32];
    for (int i = 0; i < spec.n_long; ++i) {
        std::snprintf(id_buf, sizeof(id_buf), "long-%03d", i);
        ResponseRecord rec;
        rec.id      = id_buf;
        rec.problem = make_problem(i);
        const int len = rng.uniform_int(spec.long_span_min, spec.long_span_max);
        rec.response  = "<think>" + std::string(len, char(planted::CONTINUE_TOKEN)) + "</think>" +
                       std::string(1, char(planted::ANSWER_TOKEN));
        rec.gold_answer = std::string(1, char(planted::ANSWER_TOKEN));
        records.push_back(std::move(rec));
    }
    for (int i = 0; i < spec.n_short; ++i) {
        std::snprintf(id_buf, sizeof(id_buf), "short-%03d", i);
        ResponseRecord rec;
        rec.id      = id_buf;
        rec.problem = make_problem(spec.n_long + i);
        const int len = rng.uniform_int(spec.short_span_min, spec.short_span_max);
        rec.response  = "<think>" + std::string(len, char(planted::CONTROL_TOKEN)) + "</think>" +
                       std::string(1, char(planted::ANSWER_TOKEN));
        rec.gold_answer = std::string(1, char(planted::ANSWER_TOKEN));
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace cotkit
