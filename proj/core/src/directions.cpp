#include "cotkit/directions.hpp"

#include "cotkit/forward.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

using json = nlohmann::ordered_json;

namespace cotkit {

MeanRepresentation mean_cot_representation(const Model & model,
                                           const std::vector<std::pair<ResponseRecord, CotSpan>> & dataset,
                                           RepKind kind, int jobs) {
    if (dataset.empty()) {
        throw error("mean_cot_representation: empty dataset");
    }
    const int L = model.config.n_layers;
    const int d = model.config.hidden_dim;

    const TapSpec taps =
        TapSpec::all_layers(model.config, kind == RepKind::attn, kind == RepKind::mlp);

    // per-response inner means, computed in parallel, reduced in dataset order
    std::vector<std::vector<std::vector<float>>> inner(dataset.size());
    std::vector<char> usable(dataset.size(), 0);

    parallel_for(jobs, int(dataset.size()), [&](int idx) {
        const auto & [rec, span] = dataset[idx];
        if (span.length() <= 0) {
            return;  // logged via n_skipped
        }
        const std::vector<int> seq = encode_example(rec.problem, rec.response);
        if (span.token_end > int(seq.size())) {
            throw error("mean_cot_representation: record \"" + rec.id +
                        "\" span exceeds encoded sequence");
        }
        const ForwardTrace trace = forward(model, seq, taps);
        std::vector<std::vector<float>> means(L, std::vector<float>(d, 0.0f));
        for (int l = 0; l < L; ++l) {
            const Mat & rows = kind == RepKind::attn ? trace.r_attn.at(l) : trace.r_mlp.at(l);
            std::vector<float> & m = means[l];
            for (int t = span.token_start; t < span.token_end; ++t) {
                const float * r = rows.row(t);
                for (int i = 0; i < d; ++i) {
                    m[i] += r[i];
                }
            }
            const float inv = 1.0f / float(span.length());
            for (int i = 0; i < d; ++i) {
                m[i] *= inv;
            }
        }
        inner[idx]  = std::move(means);
        usable[idx] = 1;
    });

    MeanRepresentation rep;
    rep.kind       = kind;
    rep.n_layers   = L;
    rep.hidden_dim = d;
    rep.per_layer.assign(L, std::vector<float>(d, 0.0f));
    rep.model_fingerprint   = model.fingerprint;
    rep.dataset_fingerprint = dataset_fingerprint(dataset);

    int n_used = 0;
    for (size_t idx = 0; idx < dataset.size(); ++idx) {
        if (!usable[idx]) {
            ++rep.n_skipped;
            continue;
        }
        ++n_used;
        for (int l = 0; l < L; ++l) {
            const std::vector<float> & m = inner[idx][l];
            for (int i = 0; i < d; ++i) {
                rep.per_layer[l][i] += m[i];
            }
        }
    }
    if (n_used == 0) {
        throw error("mean_cot_representation: every span in the dataset is empty");
    }
    const float inv = 1.0f / float(n_used);
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < d; ++i) {
            rep.per_layer[l][i] *= inv;
        }
    }
    rep.n_responses = n_used;
    return rep;
}

namespace {

constexpr float k_degenerate_norm = 1e-8f;

void check_pair(const MeanRepresentation & a, const MeanRepresentation & b, const char * what) {
    if (a.model_fingerprint != b.model_fingerprint) {
        throw error(std::string("extract_directions: ") + what + ": model fingerprints differ");
    }
    if (a.n_layers != b.n_layers || a.hidden_dim != b.hidden_dim) {
        throw error(std::string("extract_directions: ") + what + ": shape mismatch");
    }
}

void diff_and_normalize(const MeanRepresentation & longr, const MeanRepresentation & shortr,
                        std::vector<std::vector<float>> & v,
                        std::vector<std::vector<float>> & v_unit, std::vector<bool> & degen) {
    const int L = longr.n_layers;
    const int d = longr.hidden_dim;
    v.assign(L, std::vector<float>(d, 0.0f));
    v_unit.assign(L, std::vector<float>(d, 0.0f));
    degen.assign(L, false);
    for (int l = 0; l < L; ++l) {
        for (int i = 0; i < d; ++i) {
            v[l][i] = longr.per_layer[l][i] - shortr.per_layer[l][i];
        }
        const float n = norm2(v[l].data(), d);
        if (n < k_degenerate_norm) {
            degen[l] = true;
            continue;
        }
        for (int i = 0; i < d; ++i) {
            v_unit[l][i] = v[l][i] / n;
        }
    }
}

} // namespace

const std::vector<float> & DirectionSet::unit(RepKind kind, int layer) const {
    if (layer < 0 || layer >= n_layers) {
        throw error("directions: layer " + std::to_string(layer) + " out of range");
    }
    if (degenerate(kind, layer)) {
        throw error("directions: layer " + std::to_string(layer) + " is degenerate for " +
                    (kind == RepKind::attn ? "attn" : "mlp"));
    }
    return kind == RepKind::attn ? v_attn_unit[layer] : v_mlp_unit[layer];
}

DirectionSet extract_directions(const MeanRepresentation & long_attn,
                                const MeanRepresentation & short_attn,
                                const MeanRepresentation & long_mlp,
                                const MeanRepresentation & short_mlp) {
    if (long_attn.kind != RepKind::attn || short_attn.kind != RepKind::attn ||
        long_mlp.kind != RepKind::mlp || short_mlp.kind != RepKind::mlp) {
        throw error("extract_directions: representation kinds are mixed up");
    }
    check_pair(long_attn, short_attn, "attn");
    check_pair(long_mlp, short_mlp, "mlp");
    check_pair(long_attn, long_mlp, "attn/mlp");

    DirectionSet dirs;
    dirs.n_layers   = long_attn.n_layers;
    dirs.hidden_dim = long_attn.hidden_dim;
    diff_and_normalize(long_attn, short_attn, dirs.v_attn, dirs.v_attn_unit, dirs.attn_degenerate);
    diff_and_normalize(long_mlp, short_mlp, dirs.v_mlp, dirs.v_mlp_unit, dirs.mlp_degenerate);

    dirs.provenance.model_fingerprint        = long_attn.model_fingerprint;
    dirs.provenance.long_corpus_fingerprint  = long_attn.dataset_fingerprint;
    dirs.provenance.short_corpus_fingerprint = short_attn.dataset_fingerprint;
    dirs.provenance.n_long                   = long_attn.n_responses;
    dirs.provenance.n_short                  = short_attn.n_responses;
    return dirs;
}

namespace {

std::string header_json(const DirectionSet & dirs) {
    json j;
    j["magic"]      = "cotkit-directions-v1";
    j["n_layers"]   = dirs.n_layers;
    j["hidden_dim"] = dirs.hidden_dim;
    j["kinds"]      = {"attn", "mlp"};
    json degen_attn = json::array(), degen_mlp = json::array();
    for (int l = 0; l < dirs.n_layers; ++l) {
        if (dirs.attn_degenerate[l]) {
            degen_attn.push_back(l);
        }
        if (dirs.mlp_degenerate[l]) {
            degen_mlp.push_back(l);
        }
    }
    j["degenerate"] = {{"attn", degen_attn}, {"mlp", degen_mlp}};
    j["provenance"] = {
        {"model_fingerprint", dirs.provenance.model_fingerprint},
        {"long_corpus_fingerprint", dirs.provenance.long_corpus_fingerprint},
        {"short_corpus_fingerprint", dirs.provenance.short_corpus_fingerprint},
        {"long_min", dirs.provenance.long_min},
        {"short_max", dirs.provenance.short_max},
        {"n_long", dirs.provenance.n_long},
        {"n_short", dirs.provenance.n_short},
    };
    return j.dump();
}

std::string serialized_bytes(const DirectionSet & dirs) {
    std::string out = header_json(dirs);
    out += '\n';
    auto append_block = [&](const std::vector<std::vector<float>> & block) {
        for (const std::vector<float> & v : block) {
            out.append(reinterpret_cast<const char *>(v.data()), v.size() * sizeof(float));
        }
    };
    append_block(dirs.v_attn);
    append_block(dirs.v_mlp);
    return out;
}

} // namespace

void save_directions(const DirectionSet & dirs, const std::string & path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw error("save_directions: cannot write " + path);
    }
    const std::string bytes = serialized_bytes(dirs);
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.close();
    if (!f) {
        throw error("save_directions: short write to " + path);
    }
}

DirectionSet load_directions(const std::string & path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw error("load_directions: cannot open " + path);
    }
    std::string header;
    if (!std::getline(f, header)) {
        throw error("load_directions: missing header line");
    }
    json j;
    try {
        j = json::parse(header);
    } catch (const std::exception & e) {
        throw error("load_directions: header parse failure: " + std::string(e.what()));
    }
    if (!j.contains("magic") || j.at("magic").get<std::string>() != "cotkit-directions-v1") {
        throw error("load_directions: not a directions file");
    }

    DirectionSet dirs;
    dirs.n_layers   = j.at("n_layers").get<int>();
    dirs.hidden_dim = j.at("hidden_dim").get<int>();
    if (dirs.n_layers <= 0 || dirs.hidden_dim <= 0) {
        throw error("load_directions: bad dimensions in header");
    }
    const json & prov = j.at("provenance");
    dirs.provenance.model_fingerprint        = prov.at("model_fingerprint").get<std::string>();
    dirs.provenance.long_corpus_fingerprint  = prov.at("long_corpus_fingerprint").get<std::string>();
    dirs.provenance.short_corpus_fingerprint = prov.at("short_corpus_fingerprint").get<std::string>();
    dirs.provenance.long_min                 = prov.at("long_min").get<int>();
    dirs.provenance.short_max                = prov.at("short_max").get<int>();
    dirs.provenance.n_long                   = prov.at("n_long").get<int>();
    dirs.provenance.n_short                  = prov.at("n_short").get<int>();

    const int L = dirs.n_layers;
    const int d = dirs.hidden_dim;
    auto read_block = [&](std::vector<std::vector<float>> & block) {
        block.assign(L, std::vector<float>(d, 0.0f));
        for (int l = 0; l < L; ++l) {
            f.read(reinterpret_cast<char *>(block[l].data()), std::streamsize(d * sizeof(float)));
            if (!f) {
                throw error("load_directions: payload truncated");
            }
        }
    };
    read_block(dirs.v_attn);
    read_block(dirs.v_mlp);

    // unit forms and degeneracy are derived, not stored
    dirs.v_attn_unit.assign(L, std::vector<float>(d, 0.0f));
    dirs.v_mlp_unit.assign(L, std::vector<float>(d, 0.0f));
    dirs.attn_degenerate.assign(L, false);
    dirs.mlp_degenerate.assign(L, false);
    for (int l = 0; l < L; ++l) {
        const float na = norm2(dirs.v_attn[l].data(), d);
        if (na < k_degenerate_norm) {
            dirs.attn_degenerate[l] = true;
        } else {
            for (int i = 0; i < d; ++i) {
                dirs.v_attn_unit[l][i] = dirs.v_attn[l][i] / na;
            }
        }
        const float nm = norm2(dirs.v_mlp[l].data(), d);
        if (nm < k_degenerate_norm) {
            dirs.mlp_degenerate[l] = true;
        } else {
            for (int i = 0; i < d; ++i) {
                dirs.v_mlp_unit[l][i] = dirs.v_mlp[l][i] / nm;
            }
        }
    }
    return dirs;
}

std::string directions_hash(const DirectionSet & dirs) {
    return fnv1a_hex(serialized_bytes(dirs));
}

} // namespace cotkit
