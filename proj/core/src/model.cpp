#include "cotkit/model.hpp"

#include "cotkit/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

using json = nlohmann::ordered_json;

namespace cotkit {

void ModelConfig::validate() const {
    if (n_layers <= 0 || n_heads <= 0 || hidden_dim <= 0 || head_dim <= 0 ||
        vocab_size <= 0 || max_seq_len <= 0) {
        throw error("config: all dimensions must be positive");
    }
    if (hidden_dim % n_heads != 0) {
        throw error("config: hidden_dim " + std::to_string(hidden_dim) +
                    " not divisible by n_heads " + std::to_string(n_heads));
    }
    if (hidden_dim != n_heads * head_dim) {
        throw error("config: hidden_dim != n_heads * head_dim");
    }
    if (vocab_size < 260) {
        throw error("config: vocab_size " + std::to_string(vocab_size) +
                    " below byte alphabet plus special tokens (260)");
    }
    if (!(ln_epsilon > 0.0f)) {
        throw error("config: ln_epsilon must be positive");
    }
}

namespace {

struct TensorRef {
    std::string      name;
    float *          data = nullptr;
    size_t           n    = 0;
    std::vector<int> shape;
};

size_t shape_elems(const std::vector<int> & shape) {
    size_t n = 1;
    for (int s : shape) {
        n *= size_t(s);
    }
    return n;
}

std::vector<TensorRef> tensor_table(Model & m) {
    const int d = m.config.hidden_dim;
    std::vector<TensorRef> t;
    auto add_mat = [&](const std::string & name, Mat & mat, std::vector<int> shape) {
        t.push_back({name, mat.v.data(), mat.v.size(), std::move(shape)});
    };
    auto add_vec = [&](const std::string & name, std::vector<float> & v, int len) {
        t.push_back({name, v.data(), v.size(), {len}});
    };
    add_mat("embed.tok", m.tok_embedding, {m.config.vocab_size, d});
    add_mat("embed.pos", m.pos_embedding, {m.config.max_seq_len, d});
    for (int l = 0; l < m.config.n_layers; ++l) {
        const std::string p  = "layers." + std::to_string(l) + ".";
        LayerWeights &    lw = m.layers[l];
        add_vec(p + "ln1.scale", lw.ln1.scale, d);
        add_vec(p + "ln1.bias", lw.ln1.bias, d);
        add_mat(p + "attn.wq", lw.wq, {d, d});
        add_mat(p + "attn.wk", lw.wk, {d, d});
        add_mat(p + "attn.wv", lw.wv, {d, d});
        add_mat(p + "attn.wo", lw.wo, {d, d});
        add_vec(p + "ln2.scale", lw.ln2.scale, d);
        add_vec(p + "ln2.bias", lw.ln2.bias, d);
        add_mat(p + "mlp.w_in", lw.mlp_w_in, {d, 4 * d});
        add_vec(p + "mlp.b_in", lw.mlp_b_in, 4 * d);
        add_mat(p + "mlp.w_out", lw.mlp_w_out, {4 * d, d});
        add_vec(p + "mlp.b_out", lw.mlp_b_out, d);
    }
    add_vec("final_ln.scale", m.final_ln.scale, d);
    add_vec("final_ln.bias", m.final_ln.bias, d);
    add_mat("unembed", m.unembed, {d, m.config.vocab_size});
    return t;
}

std::vector<TensorRef> tensor_table(const Model & m) {
    return tensor_table(const_cast<Model &>(m));  // read-only use
}

void allocate_tensors(Model & m) {
    const int d = m.config.hidden_dim;
    m.tok_embedding = Mat(m.config.vocab_size, d);
    m.pos_embedding = Mat(m.config.max_seq_len, d);
    m.layers.assign(m.config.n_layers, LayerWeights{});
    for (LayerWeights & lw : m.layers) {
        lw.ln1.scale.assign(d, 0.0f);
        lw.ln1.bias.assign(d, 0.0f);
        lw.wq = Mat(d, d);
        lw.wk = Mat(d, d);
        lw.wv = Mat(d, d);
        lw.wo = Mat(d, d);
        lw.ln2.scale.assign(d, 0.0f);
        lw.ln2.bias.assign(d, 0.0f);
        lw.mlp_w_in = Mat(d, 4 * d);
        lw.mlp_b_in.assign(4 * d, 0.0f);
        lw.mlp_w_out = Mat(4 * d, d);
        lw.mlp_b_out.assign(d, 0.0f);
    }
    m.final_ln.scale.assign(d, 0.0f);
    m.final_ln.bias.assign(d, 0.0f);
    m.unembed = Mat(d, m.config.vocab_size);
}

float f16_to_f32(uint16_t h) {
    const uint32_t sign = uint32_t(h >> 15) << 31;
    const uint32_t exp  = (h >> 10) & 0x1f;
    uint32_t       mant = h & 0x3ff;
    uint32_t       bits;
    if (exp == 0) {
        if (mant == 0) {
            bits = sign;
        } else {
            int shift = 0;
            while ((mant & 0x400) == 0) {
                mant <<= 1;
                ++shift;
            }
            mant &= 0x3ff;
            bits = sign | uint32_t(127 - 15 - shift + 1) << 23 | (mant << 13);
        }
    } else if (exp == 0x1f) {
        bits = sign | 0x7f800000u | (mant << 13);
    } else {
        bits = sign | ((exp - 15 + 127) << 23) | (mant << 13);
    }
    float f;
    std::memcpy(&f, &bits, sizeof(f));
    return f;
}

std::string config_digest_string(const ModelConfig & c) {
    return "L=" + std::to_string(c.n_layers) + ",H=" + std::to_string(c.n_heads) +
           ",d=" + std::to_string(c.hidden_dim) + ",dh=" + std::to_string(c.head_dim) +
           ",V=" + std::to_string(c.vocab_size) + ",T=" + std::to_string(c.max_seq_len) +
           ",eps=" + fmt_float(c.ln_epsilon);
}

} // namespace

size_t Model::total_params() const {
    size_t n = 0;
    for (const TensorRef & t : tensor_table(*this)) {
        n += t.n;
    }
    return n;
}

void Model::refresh_fingerprint() {
    Fnv1a f;
    f.update(config_digest_string(config));
    for (const TensorRef & t : tensor_table(*this)) {
        f.update(t.name);
        f.update_f32(t.data, t.n);
    }
    fingerprint = f.hex();
}

Model load_checkpoint(const std::string & dir) {
    namespace fs = std::filesystem;
    const fs::path manifest_path = fs::path(dir) / "model.json";
    const fs::path blob_path     = fs::path(dir) / "model.bin";

    std::ifstream mf(manifest_path);
    if (!mf) {
        throw error("load_checkpoint: cannot open " + manifest_path.string());
    }
    json manifest;
    try {
        manifest = json::parse(mf);
    } catch (const std::exception & e) {
        throw error("load_checkpoint: manifest parse failure: " + std::string(e.what()));
    }

    Model m;
    try {
        const json & c = manifest.at("config");
        m.config.n_layers    = c.at("n_layers").get<int>();
        m.config.n_heads     = c.at("n_heads").get<int>();
        m.config.hidden_dim  = c.at("hidden_dim").get<int>();
        m.config.head_dim    = c.at("head_dim").get<int>();
        m.config.vocab_size  = c.at("vocab_size").get<int>();
        m.config.max_seq_len = c.at("max_seq_len").get<int>();
        m.config.ln_epsilon  = c.at("ln_epsilon").get<float>();
    } catch (const json::exception & e) {
        throw error("load_checkpoint: bad config block: " + std::string(e.what()));
    }
    m.config.validate();
    allocate_tensors(m);

    std::ifstream bf(blob_path, std::ios::binary);
    if (!bf) {
        throw error("load_checkpoint: cannot open " + blob_path.string());
    }
    std::vector<char> blob((std::istreambuf_iterator<char>(bf)), std::istreambuf_iterator<char>());

    if (!manifest.contains("tensors")) {
        throw error("load_checkpoint: manifest has no tensor table");
    }
    const json & table = manifest.at("tensors");

    const std::vector<TensorRef> refs = tensor_table(m);

    size_t manifest_elems = 0;
    for (const auto & [name, entry] : table.items()) {
        manifest_elems += shape_elems(entry.at("shape").get<std::vector<int>>());
        bool known = false;
        for (const TensorRef & t : refs) {
            if (t.name == name) {
                known = true;
                break;
            }
        }
        if (!known) {
            throw error("load_checkpoint: unexpected tensor '" + name + "'");
        }
    }

    size_t loaded_elems = 0;
    for (const TensorRef & t : refs) {
        if (!table.contains(t.name)) {
            throw error("load_checkpoint: missing tensor '" + t.name + "'");
        }
        const json &           entry = table.at(t.name);
        const std::string      dtype = entry.at("dtype").get<std::string>();
        const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
        const size_t           offset = entry.at("offset").get<size_t>();
        const size_t           length = entry.at("length").get<size_t>();

        if (shape != t.shape) {
            std::string want, got;
            for (int s : t.shape) want += std::to_string(s) + " ";
            for (int s : shape) got += std::to_string(s) + " ";
            throw error("load_checkpoint: tensor '" + t.name + "' shape mismatch, manifest [" +
                        got + "] vs config [" + want + "]");
        }
        size_t elem_size;
        if (dtype == "f32") {
            elem_size = 4;
        } else if (dtype == "f16") {
            elem_size = 2;
            m.loaded_from_f16 = true;
        } else {
            throw error("load_checkpoint: tensor '" + t.name + "' has unsupported dtype '" + dtype + "'");
        }
        if (length != t.n * elem_size) {
            throw error("load_checkpoint: tensor '" + t.name + "' length/shape disagree");
        }
        if (offset + length > blob.size()) {
            throw error("load_checkpoint: tensor '" + t.name + "' extends past end of model.bin");
        }

        const char * src = blob.data() + offset;
        if (dtype == "f32") {
            std::memcpy(t.data, src, length);
        } else {
            for (size_t i = 0; i < t.n; ++i) {
                uint16_t h;
                std::memcpy(&h, src + 2 * i, 2);
                t.data[i] = f16_to_f32(h);
            }
        }
        if (!all_finite(t.data, t.n)) {
            throw error("load_checkpoint: tensor '" + t.name + "' contains non-finite values");
        }
        loaded_elems += t.n;
    }

    if (manifest.contains("total_params")) {
        const size_t declared = manifest.at("total_params").get<size_t>();
        if (declared != loaded_elems || declared != manifest_elems) {
            throw error("load_checkpoint: total_params " + std::to_string(declared) +
                        " does not match tensor table sum " + std::to_string(manifest_elems));
        }
    }

    if (manifest.contains("edit_lineage")) {
        const json & el = manifest.at("edit_lineage");
        EditLineage  lineage;
        lineage.base_fingerprint = el.at("base_fingerprint").get<std::string>();
        lineage.plan_hash        = el.at("plan_hash").get<std::string>();
        lineage.directions_hash  = el.at("directions_hash").get<std::string>();
        lineage.timestamp        = el.at("timestamp").get<std::string>();
        m.lineage = lineage;
    }

    m.refresh_fingerprint();
    return m;
}

void save_checkpoint(const Model & model, const std::string & dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);

    std::ofstream bf(fs::path(dir) / "model.bin", std::ios::binary | std::ios::trunc);
    if (!bf) {
        throw error("save_checkpoint: cannot write " + (fs::path(dir) / "model.bin").string());
    }

    json   tensors = json::object();
    size_t offset  = 0;
    size_t total   = 0;
    for (const TensorRef & t : tensor_table(model)) {
        const size_t len = t.n * 4;
        bf.write(reinterpret_cast<const char *>(t.data), std::streamsize(len));
        tensors[t.name] = {
            {"dtype", "f32"}, {"shape", t.shape}, {"offset", offset}, {"length", len}};
        offset += len;
        total += t.n;
    }
    bf.close();
    if (!bf) {
        throw error("save_checkpoint: short write to model.bin");
    }

    json manifest;
    manifest["config"] = {
        {"n_layers", model.config.n_layers},     {"n_heads", model.config.n_heads},
        {"hidden_dim", model.config.hidden_dim}, {"head_dim", model.config.head_dim},
        {"vocab_size", model.config.vocab_size}, {"max_seq_len", model.config.max_seq_len},
        {"ln_epsilon", model.config.ln_epsilon},
    };
    manifest["tensors"]      = tensors;
    manifest["total_params"] = total;
    if (model.loaded_from_f16) {
        manifest["precision_note"] = "weights materialized as f32 from an f16 source";
    }
    if (model.lineage) {
        manifest["edit_lineage"] = {
            {"base_fingerprint", model.lineage->base_fingerprint},
            {"plan_hash", model.lineage->plan_hash},
            {"directions_hash", model.lineage->directions_hash},
            {"timestamp", model.lineage->timestamp},
        };
    }

    std::ofstream mf(fs::path(dir) / "model.json", std::ios::trunc);
    if (!mf) {
        throw error("save_checkpoint: cannot write " + (fs::path(dir) / "model.json").string());
    }
    mf << manifest.dump(2) << "\n";
    mf.close();
    if (!mf) {
        throw error("save_checkpoint: short write to model.json");
    }
}

Model build_random_model(uint64_t seed, const ModelConfig & config) {
    config.validate();
    Rng   rng(seed);
    Model m;
    m.config = config;
    allocate_tensors(m);
    const int d = config.hidden_dim;

    auto fill = [&](float * data, size_t n, double mu, double sigma) {
        for (size_t i = 0; i < n; ++i) {
            data[i] = float(rng.normal(mu, sigma));
        }
    };

    const double w_sigma = 0.4 / std::sqrt(double(d));
    fill(m.tok_embedding.v.data(), m.tok_embedding.size(), 0.0, 0.3);
    fill(m.pos_embedding.v.data(), m.pos_embedding.size(), 0.0, 0.1);
    for (LayerWeights & lw : m.layers) {
        fill(lw.ln1.scale.data(), lw.ln1.scale.size(), 1.0, 0.05);
        fill(lw.ln1.bias.data(), lw.ln1.bias.size(), 0.0, 0.02);
        fill(lw.wq.v.data(), lw.wq.size(), 0.0, w_sigma);
        fill(lw.wk.v.data(), lw.wk.size(), 0.0, w_sigma);
        fill(lw.wv.v.data(), lw.wv.size(), 0.0, w_sigma);
        fill(lw.wo.v.data(), lw.wo.size(), 0.0, w_sigma);
        fill(lw.ln2.scale.data(), lw.ln2.scale.size(), 1.0, 0.05);
        fill(lw.ln2.bias.data(), lw.ln2.bias.size(), 0.0, 0.02);
        fill(lw.mlp_w_in.v.data(), lw.mlp_w_in.size(), 0.0, w_sigma);
        fill(lw.mlp_b_in.data(), lw.mlp_b_in.size(), 0.0, 0.02);
        fill(lw.mlp_w_out.v.data(), lw.mlp_w_out.size(), 0.0, w_sigma);
        fill(lw.mlp_b_out.data(), lw.mlp_b_out.size(), 0.0, 0.02);
    }
    fill(m.final_ln.scale.data(), m.final_ln.scale.size(), 1.0, 0.05);
    fill(m.final_ln.bias.data(), m.final_ln.bias.size(), 0.0, 0.02);
    fill(m.unembed.v.data(), m.unembed.size(), 0.0, 0.3);

    m.refresh_fingerprint();
    return m;
}

} // namespace cotkit
