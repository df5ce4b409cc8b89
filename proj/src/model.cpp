#include "tppt/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "tppt/error.hpp"
#include "tppt/rng.hpp"

namespace tppt {

namespace {

std::string attention_mode_name(AttentionMode mode) {
    return mode == AttentionMode::MultiQuery ? "multi-query" : "multi-head";
}

AttentionMode parse_attention_mode(const std::string& s) {
    if (s == "multi-query" || s == "mqa") return AttentionMode::MultiQuery;
    if (s == "multi-head" || s == "mha") return AttentionMode::MultiHead;
    throw config_error("unknown attention mode '" + s + "'");
}

std::string pool_shape_name(AdjPoolShape shape) {
    switch (shape) {
        case AdjPoolShape::BV1C: return "BV1C";
        case AdjPoolShape::BVLC: return "BVLC";
        case AdjPoolShape::B11C: return "B11C";
    }
    return "BV1C";
}

AdjPoolShape parse_pool_shape(const std::string& s) {
    if (s == "BV1C") return AdjPoolShape::BV1C;
    if (s == "BVLC") return AdjPoolShape::BVLC;
    if (s == "B11C") return AdjPoolShape::B11C;
    throw config_error("unknown adjacency pool shape '" + s + "'");
}

Tensor normal_init(std::vector<std::int64_t> shape, double std, Rng& rng) {
    Tensor t(std::move(shape));
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normal(0.0, std);
    return t;
}

} // namespace

Tensor sinusoidal_encoding(std::int64_t positions, std::int64_t width) {
    Tensor t({positions, width});
    for (std::int64_t p = 0; p < positions; ++p) {
        for (std::int64_t j = 0; j < width; ++j) {
            const double exponent = static_cast<double>(2 * (j / 2)) / static_cast<double>(width);
            const double angle = static_cast<double>(p) / std::pow(10000.0, exponent);
            t.at(p, j) = (j % 2 == 0) ? std::sin(angle) : std::cos(angle);
        }
    }
    return t;
}

void ModelConfig::validate() const {
    if (V < 1) throw config_error("model config: V must be positive");
    if (T < 1) throw config_error("model config: T must be positive");
    if (L < 0 || M < 0 || N < 0) throw config_error("model config: L, M, N must be non-negative");
    if (C < 1 || H < 1) throw config_error("model config: C and H must be positive");
    if (C % H != 0) throw config_error("model config: hidden size C must be divisible by head count H");
    if (n_block < 1) throw config_error("model config: n_block must be at least 1");
    if (ffn_expansion < 1) throw config_error("model config: ffn_expansion must be at least 1");
    if (K < 1) throw config_error("model config: discretization level K must be positive");
}

ModelConfig ModelConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open model config: " + path);
    ModelConfig cfg;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw config_error(path + ":" + std::to_string(line_no) + ": expected key=value");
        }
        const std::string key = line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "V") cfg.V = std::stoi(value);
        else if (key == "T") cfg.T = std::stoi(value);
        else if (key == "L") cfg.L = std::stoi(value);
        else if (key == "M") cfg.M = std::stoi(value);
        else if (key == "N") cfg.N = std::stoi(value);
        else if (key == "C") cfg.C = std::stoi(value);
        else if (key == "H") cfg.H = std::stoi(value);
        else if (key == "n_block") cfg.n_block = std::stoi(value);
        else if (key == "ffn_expansion") cfg.ffn_expansion = std::stoi(value);
        else if (key == "K") cfg.K = std::stoi(value);
        else if (key == "adj_attention") cfg.adj_attention = parse_attention_mode(value);
        else if (key == "self_attention") cfg.self_attention = parse_attention_mode(value);
        else if (key == "adj_pool") cfg.adj_pool = parse_pool_shape(value);
        else if (key == "use_history") cfg.use_history = (value == "1" || value == "true");
        else if (key == "use_adjacency") cfg.use_adjacency = (value == "1" || value == "true");
        else if (key == "tokenizer") cfg.tokenizer = (value == "mlp") ? FeatureTokenizer::Mlp : FeatureTokenizer::Discretized;
        else if (key == "init_std") cfg.init_std = std::stod(value);
        else throw config_error(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

void ModelConfig::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write model config: " + path);
    out << "V=" << V << "\nT=" << T << "\nL=" << L << "\nM=" << M << "\nN=" << N
        << "\nC=" << C << "\nH=" << H << "\nn_block=" << n_block
        << "\nffn_expansion=" << ffn_expansion << "\nK=" << K
        << "\nadj_attention=" << attention_mode_name(adj_attention)
        << "\nself_attention=" << attention_mode_name(self_attention)
        << "\nadj_pool=" << pool_shape_name(adj_pool)
        << "\nuse_history=" << (use_history ? 1 : 0)
        << "\nuse_adjacency=" << (use_adjacency ? 1 : 0)
        << "\ntokenizer=" << (tokenizer == FeatureTokenizer::Mlp ? "mlp" : "discretized")
        << "\ninit_std=" << init_std << "\n";
}

BatchTokens make_batch(std::span<const Trajectory> observations,
                       std::span<const std::vector<Trajectory>> histories,
                       const ModelConfig& config) {
    BatchTokens batch;
    batch.B = static_cast<int>(observations.size());
    batch.obs.reserve(static_cast<std::size_t>(batch.B) * config.T);
    for (const Trajectory& traj : observations) {
        if (static_cast<int>(traj.size()) != config.T) {
            throw validation_error("observation length does not match horizon T");
        }
        batch.obs.insert(batch.obs.end(), traj.begin(), traj.end());
    }
    if (config.N > 0) {
        if (static_cast<int>(histories.size()) != batch.B) {
            throw validation_error("history batch size mismatch");
        }
        batch.his.reserve(static_cast<std::size_t>(batch.B) * config.N * config.T);
        for (const auto& hs : histories) {
            if (static_cast<int>(hs.size()) != config.N) {
                throw validation_error("history count does not match N");
            }
            for (const Trajectory& traj : hs) {
                if (static_cast<int>(traj.size()) != config.T) {
                    throw validation_error("history length does not match horizon T");
                }
                batch.his.insert(batch.his.end(), traj.begin(), traj.end());
            }
        }
    }
    return batch;
}

Model::Model(ModelConfig config, std::uint64_t seed) : config_(std::move(config)) {
    config_.validate();
    Rng rng(mix_seed(seed, 0x6d6f64656cULL));
    const int C = config_.C;
    const double std = config_.init_std;

    e_traj_ = add_param("city.e_traj", normal_init({config_.V + 1, C}, std, rng));
    if (config_.use_adjacency) {
        for (int m = 0; m < config_.M; ++m) {
            if (config_.tokenizer == FeatureTokenizer::Discretized) {
                e_adj_.push_back(add_param("city.e_adj" + std::to_string(m),
                                           normal_init({config_.K + 1, C}, std, rng)));
            } else {
                MlpTokenizer tok;
                const std::string prefix = "city.adj_tok" + std::to_string(m);
                tok.w = add_param(prefix + ".w", normal_init({1, C}, std, rng));
                tok.b = add_param(prefix + ".b", Tensor::zeros({C}));
                tok.ln_gain = add_param(prefix + ".ln_g", Tensor::full({C}, 1.0));
                tok.ln_bias = add_param(prefix + ".ln_b", Tensor::zeros({C}));
                adj_tok_.push_back(tok);
            }
        }
    }

    emb_w_ = add_param("backbone.emb.w", normal_init({C, C}, std, rng));
    emb_b_ = add_param("backbone.emb.b", Tensor::zeros({C}));
    emb_ln_gain_ = add_param("backbone.emb.ln_g", Tensor::full({C}, 1.0));
    emb_ln_bias_ = add_param("backbone.emb.ln_b", Tensor::zeros({C}));

    for (int i = 0; i < config_.n_block; ++i) {
        const std::string prefix = "backbone.block" + std::to_string(i);
        BlockParams bp;
        if (config_.use_adjacency) {
            bp.adj = make_attention(prefix + ".adj", config_.adj_attention, rng);
        }
        if (config_.use_history && config_.N > 0) {
            bp.his = make_attention(prefix + ".his", AttentionMode::MultiHead, rng);
        }
        bp.self = make_attention(prefix + ".self", config_.self_attention, rng);

        const int F = config_.ffn_expansion * C;
        bp.ffn.ln_gain = add_param(prefix + ".ffn.ln_g", Tensor::full({C}, 1.0));
        bp.ffn.ln_bias = add_param(prefix + ".ffn.ln_b", Tensor::zeros({C}));
        bp.ffn.w1 = add_param(prefix + ".ffn.w1", normal_init({C, F}, std, rng));
        bp.ffn.b1 = add_param(prefix + ".ffn.b1", Tensor::zeros({F}));
        bp.ffn.w2 = add_param(prefix + ".ffn.w2", normal_init({F, C}, std, rng));
        bp.ffn.b2 = add_param(prefix + ".ffn.b2", Tensor::zeros({C}));
        blocks_.push_back(bp);
    }

    head_w_ = add_param("city.head.w", normal_init({C, config_.V + 1}, std, rng));
    head_b_ = add_param("city.head.b", Tensor::zeros({config_.V + 1}));

    pos_t_ = sinusoidal_encoding(config_.T, C);
    if (config_.L > 0) {
        const Tensor pos_v = sinusoidal_encoding(config_.V, C);
        const Tensor pos_l = sinusoidal_encoding(config_.L, C);
        pos_vl_ = Tensor({static_cast<std::int64_t>(config_.V) * config_.L, C});
        for (int v = 0; v < config_.V; ++v) {
            for (int l = 0; l < config_.L; ++l) {
                double* dst = pos_vl_.data() + (static_cast<std::int64_t>(v) * config_.L + l) * C;
                for (int j = 0; j < C; ++j) dst[j] = pos_v.at(v, j) + pos_l.at(l, j);
            }
        }
    }
}

Parameter* Model::add_param(const std::string& name, Tensor init) {
    params_.emplace_back(name, std::move(init));
    return &params_.back();
}

Model::AttentionParams Model::make_attention(const std::string& prefix, AttentionMode mode, Rng& rng) {
    const int C = config_.C;
    const int Ckv = (mode == AttentionMode::MultiQuery) ? C / config_.H : C;
    AttentionParams p;
    p.mode = mode;
    p.ln_gain = add_param(prefix + ".ln_g", Tensor::full({C}, 1.0));
    p.ln_bias = add_param(prefix + ".ln_b", Tensor::zeros({C}));
    p.wq = add_param(prefix + ".wq", normal_init({C, C}, config_.init_std, rng));
    p.wk = add_param(prefix + ".wk", normal_init({C, Ckv}, config_.init_std, rng));
    p.wv = add_param(prefix + ".wv", normal_init({C, Ckv}, config_.init_std, rng));
    p.wo = add_param(prefix + ".wo", normal_init({C, C}, config_.init_std, rng));
    return p;
}

std::vector<Parameter*> Model::parameters() {
    std::vector<Parameter*> out;
    out.reserve(params_.size());
    for (Parameter& p : params_) out.push_back(&p);
    return out;
}

std::vector<const Parameter*> Model::parameters() const {
    std::vector<const Parameter*> out;
    out.reserve(params_.size());
    for (const Parameter& p : params_) out.push_back(&p);
    return out;
}

Parameter* Model::find_parameter(const std::string& name) {
    for (Parameter& p : params_) {
        if (p.name == name) return &p;
    }
    return nullptr;
}

int Model::embed_tokens(Tape& tape, const std::vector<std::int32_t>& ids,
                        std::vector<std::int64_t> lead_shape, const Tensor& positional) {
    const int table = tape.param(*e_traj_);
    int z = tape.lookup(table, ids, std::move(lead_shape));
    z = tape.add_rowbcast(z, positional);
    z = tape.linear(z, tape.param(*emb_w_), tape.param(*emb_b_));
    z = tape.layer_norm(z, tape.param(*emb_ln_gain_), tape.param(*emb_ln_bias_));
    return tape.silu(z);
}

int Model::embed_observation(Tape& tape, const BatchTokens& batch) {
    return embed_tokens(tape, batch.obs, {batch.B, config_.T}, pos_t_);
}

int Model::embed_history(Tape& tape, const BatchTokens& batch) {
    if (config_.N == 0) throw validation_error("embed_history: model has N=0");
    // Positional code repeats across the N history slots.
    Tensor tiled({static_cast<std::int64_t>(config_.N) * config_.T, config_.C});
    for (int n = 0; n < config_.N; ++n) {
        double* dst = tiled.data() + static_cast<std::int64_t>(n) * config_.T * config_.C;
        for (std::int64_t i = 0; i < pos_t_.numel(); ++i) dst[i] = pos_t_[i];
    }
    return embed_tokens(tape, batch.his, {batch.B, static_cast<std::int64_t>(config_.N) * config_.T},
                        std::move(tiled));
}

int Model::embed_adjacency(Tape& tape, const AdjacencyTables& tables) {
    if (tables.V != config_.V || tables.L != config_.L) {
        throw validation_error("adjacency tables do not match model config (V, L)");
    }
    const std::int64_t slots = static_cast<std::int64_t>(config_.V) * config_.L;

    const int traj_table = tape.param(*e_traj_);
    int z = tape.lookup(traj_table, tables.a0, {slots});

    if (config_.tokenizer == FeatureTokenizer::Discretized) {
        if (static_cast<int>(tables.features.size()) < config_.M) {
            throw validation_error("adjacency tables missing discretized features; "
                                   "build them with discretization specs or use the mlp tokenizer");
        }
        for (int m = 0; m < config_.M; ++m) {
            const auto& bins = tables.features[static_cast<std::size_t>(m)].bins;
            const int table = tape.param(*e_adj_[static_cast<std::size_t>(m)]);
            z = tape.add(z, tape.lookup(table, bins, {slots}));
        }
    } else {
        for (int m = 0; m < config_.M; ++m) {
            const auto& raw = tables.raw[static_cast<std::size_t>(m)];
            Tensor values({slots, 1});
            for (std::int64_t i = 0; i < slots; ++i) values[i] = raw[static_cast<std::size_t>(i)];
            const MlpTokenizer& tok = adj_tok_[static_cast<std::size_t>(m)];
            int f = tape.linear(tape.constant(std::move(values)), tape.param(*tok.w), tape.param(*tok.b));
            f = tape.layer_norm(f, tape.param(*tok.ln_gain), tape.param(*tok.ln_bias));
            z = tape.add(z, tape.silu(f));
        }
    }

    z = tape.add_rowbcast(z, pos_vl_);

    std::vector<double> mask(static_cast<std::size_t>(slots), 0.0);
    for (std::int64_t i = 0; i < slots; ++i) {
        if (tables.a0[static_cast<std::size_t>(i)] != 0) mask[static_cast<std::size_t>(i)] = 1.0;
    }
    switch (config_.adj_pool) {
        case AdjPoolShape::BV1C: return tape.group_mean(z, std::move(mask), config_.L);
        case AdjPoolShape::BVLC: return tape.mask_rows(z, std::move(mask));
        case AdjPoolShape::B11C: return tape.group_mean(z, std::move(mask), slots);
    }
    throw validation_error("unreachable pool shape");
}

int Model::attention(Tape& tape, const AttentionParams& p, int queries, int kv) {
    const int q = tape.linear(queries, tape.param(*p.wq));
    const int k = tape.linear(kv, tape.param(*p.wk));
    const int v = tape.linear(kv, tape.param(*p.wv));
    const int o = tape.sdpa(q, k, v, config_.H);
    return tape.linear(o, tape.param(*p.wo));
}

int Model::block(Tape& tape, const BlockParams& p, int z_obs, int z_his, int z_adj) {
    int fused = z_obs;
    if (z_adj >= 0) {
        const int q = tape.layer_norm(z_obs, tape.param(*p.adj.ln_gain), tape.param(*p.adj.ln_bias));
        fused = tape.add(fused, attention(tape, p.adj, q, z_adj));
    }
    if (z_his >= 0) {
        const int q = tape.layer_norm(z_obs, tape.param(*p.his.ln_gain), tape.param(*p.his.ln_bias));
        fused = tape.add(fused, attention(tape, p.his, q, z_his));
    }
    const int qs = tape.layer_norm(fused, tape.param(*p.self.ln_gain), tape.param(*p.self.ln_bias));
    const int with_self = tape.add(fused, attention(tape, p.self, qs, qs));

    int f = tape.layer_norm(with_self, tape.param(*p.ffn.ln_gain), tape.param(*p.ffn.ln_bias));
    f = tape.linear(f, tape.param(*p.ffn.w1), tape.param(*p.ffn.b1));
    f = tape.silu(f);
    f = tape.linear(f, tape.param(*p.ffn.w2), tape.param(*p.ffn.b2));
    return tape.add(with_self, f);
}

int Model::forward(Tape& tape, const BatchTokens& batch, const AdjacencyTables& tables) {
    const AdjacencyTables* ptr = &tables;
    return forward(tape, batch, std::span<const AdjacencyTables* const>(&ptr, 1));
}

int Model::forward(Tape& tape, const BatchTokens& batch,
                   std::span<const AdjacencyTables* const> tables) {
    if (batch.B < 1) throw validation_error("forward: empty batch");

    int z = embed_observation(tape, batch);
    const int z_his = (config_.use_history && config_.N > 0) ? embed_history(tape, batch) : -1;

    int z_adj = -1;
    if (config_.use_adjacency && config_.L > 0) {
        if (tables.size() == 1) {
            z_adj = embed_adjacency(tape, *tables[0]);
        } else if (static_cast<int>(tables.size()) == batch.B) {
            std::vector<int> parts;
            parts.reserve(tables.size());
            for (const AdjacencyTables* t : tables) parts.push_back(embed_adjacency(tape, *t));
            z_adj = tape.stack_rows(parts);
        } else {
            throw validation_error("forward: expected 1 or B adjacency tables");
        }
    }

    for (const BlockParams& bp : blocks_) {
        z = block(tape, bp, z, z_his, z_adj);
    }

    const int logits = tape.linear(z, tape.param(*head_w_), tape.param(*head_b_));
    return tape.softmax(logits);
}

} // namespace tppt
