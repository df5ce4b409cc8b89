#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "tppt/rng.hpp"
#include "tppt/road_graph.hpp"
#include "tppt/tape.hpp"
#include "tppt/trajectory.hpp"

namespace tppt {

enum class AttentionMode { MultiQuery, MultiHead };
enum class AdjPoolShape { BV1C, BVLC, B11C };
enum class FeatureTokenizer { Discretized, Mlp };

struct ModelConfig {
    int V = 0;
    int T = 0;
    int L = 0;
    int M = 0; // feature table count
    int N = 0; // histories per vehicle
    int C = 64;
    int H = 16;
    int n_block = 8;
    int ffn_expansion = 2;
    int K = 30;
    AttentionMode adj_attention = AttentionMode::MultiQuery;
    AttentionMode self_attention = AttentionMode::MultiQuery;
    AdjPoolShape adj_pool = AdjPoolShape::BV1C;
    bool use_history = true;
    bool use_adjacency = true;
    FeatureTokenizer tokenizer = FeatureTokenizer::Discretized;
    double init_std = 0.05;

    void validate() const;

    static ModelConfig from_file(const std::string& path);
    void save(const std::string& path) const;
};

// Observation and history tokens of one batch, flattened row-major.
struct BatchTokens {
    int B = 0;
    std::vector<std::int32_t> obs; // B*T
    std::vector<std::int32_t> his; // B*N*T, empty when N == 0
};

BatchTokens make_batch(std::span<const Trajectory> observations,
                       std::span<const std::vector<Trajectory>> histories,
                       const ModelConfig& config);

// Three embedding branches feeding a stack of multi-view attention blocks and
// a softmax head over node classes (class 0 = off-network/ended).
class Model {
public:
    Model(ModelConfig config, std::uint64_t seed);

    const ModelConfig& config() const { return config_; }

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
    Parameter* find_parameter(const std::string& name);

    // Trajectory probabilities (B, T, V+1); tables has one entry (broadcast
    // over the batch) or B entries (per-sample override).
    int forward(Tape& tape, const BatchTokens& batch,
                std::span<const AdjacencyTables* const> tables);
    int forward(Tape& tape, const BatchTokens& batch, const AdjacencyTables& tables);

    // Individual branches, exposed for composition tests.
    int embed_observation(Tape& tape, const BatchTokens& batch);
    int embed_history(Tape& tape, const BatchTokens& batch);
    int embed_adjacency(Tape& tape, const AdjacencyTables& tables);

    const Tensor& positional_time() const { return pos_t_; }
    const Tensor& positional_vl() const { return pos_vl_; }
    // The fixed positional tables are swappable (node relabeling, horizon transfer).
    Tensor& positional_time_mutable() { return pos_t_; }
    Tensor& positional_vl_mutable() { return pos_vl_; }

private:
    struct AttentionParams {
        Parameter* ln_gain = nullptr;
        Parameter* ln_bias = nullptr;
        Parameter* wq = nullptr;
        Parameter* wk = nullptr;
        Parameter* wv = nullptr;
        Parameter* wo = nullptr;
        AttentionMode mode = AttentionMode::MultiHead;
    };
    struct FfnParams {
        Parameter* ln_gain = nullptr;
        Parameter* ln_bias = nullptr;
        Parameter* w1 = nullptr;
        Parameter* b1 = nullptr;
        Parameter* w2 = nullptr;
        Parameter* b2 = nullptr;
    };
    struct BlockParams {
        AttentionParams adj;
        AttentionParams his;
        AttentionParams self;
        FfnParams ffn;
    };

    Parameter* add_param(const std::string& name, Tensor init);
    AttentionParams make_attention(const std::string& prefix, AttentionMode mode, Rng& rng);
    int embed_tokens(Tape& tape, const std::vector<std::int32_t>& ids,
                     std::vector<std::int64_t> lead_shape, const Tensor& positional);
    int attention(Tape& tape, const AttentionParams& p, int queries, int kv);
    int block(Tape& tape, const BlockParams& p, int z_obs, int z_his, int z_adj);

    ModelConfig config_;
    std::deque<Parameter> params_;

    Parameter* e_traj_ = nullptr;
    std::vector<Parameter*> e_adj_;                       // discretized tables
    struct MlpTokenizer {
        Parameter* w = nullptr;
        Parameter* b = nullptr;
        Parameter* ln_gain = nullptr;
        Parameter* ln_bias = nullptr;
    };
    std::vector<MlpTokenizer> adj_tok_;                   // raw-value tokenizers
    Parameter* emb_w_ = nullptr;
    Parameter* emb_b_ = nullptr;
    Parameter* emb_ln_gain_ = nullptr;
    Parameter* emb_ln_bias_ = nullptr;
    Parameter* head_w_ = nullptr;
    Parameter* head_b_ = nullptr;
    std::vector<BlockParams> blocks_;

    Tensor pos_t_;  // (T, C), fixed
    Tensor pos_vl_; // (V*L, C), fixed
};

// Standard sin/cos positional table over `positions` rows.
Tensor sinusoidal_encoding(std::int64_t positions, std::int64_t width);

} // namespace tppt
