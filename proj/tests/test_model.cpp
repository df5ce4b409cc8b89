#include <doctest.h>

#include <cmath>
#include <numeric>

#include "tppt/checkpoint.hpp"
#include "tppt/model.hpp"
#include "tppt/optim.hpp"
#include "tppt/road_graph.hpp"

using namespace tppt;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.V = 6;
    cfg.T = 4;
    cfg.L = 2;
    cfg.M = 1;
    cfg.N = 1;
    cfg.C = 4;
    cfg.H = 2;
    cfg.n_block = 1;
    cfg.K = 3;
    cfg.init_std = 0.08;
    return cfg;
}

RoadNetwork tiny_net() {
    // 6 nodes, max out-degree 2
    return RoadNetwork(6, {{1, 2, 1.0, {}}, {1, 3, 2.0, {}}, {2, 4, 1.5, {}},
                           {3, 5, 0.5, {}}, {4, 6, 2.5, {}}, {5, 6, 1.0, {}}});
}

AdjacencyTables tiny_tables(const RoadNetwork& net, int K) {
    return build_adjacency_tables(net, {{K, 0.5, 2.5, DiscretizationSpec::Policy::EqualWidth}});
}

BatchTokens tiny_batch(const ModelConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    BatchTokens batch;
    batch.B = 2;
    for (int i = 0; i < batch.B * cfg.T; ++i) {
        batch.obs.push_back(rng.uniform01() < 0.3 ? 0 : static_cast<std::int32_t>(rng.range(1, cfg.V)));
    }
    for (int i = 0; i < batch.B * cfg.N * cfg.T; ++i) {
        batch.his.push_back(rng.uniform01() < 0.3 ? 0 : static_cast<std::int32_t>(rng.range(1, cfg.V)));
    }
    return batch;
}

} // namespace

TEST_CASE("forward outputs are probability simplices, even fully masked") {
    const ModelConfig cfg = tiny_config();
    Model model(cfg, 5);
    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);

    BatchTokens batch = tiny_batch(cfg, 1);
    SUBCASE("random tokens") {}
    SUBCASE("fully masked input") {
        std::fill(batch.obs.begin(), batch.obs.end(), 0);
        std::fill(batch.his.begin(), batch.his.end(), 0);
    }

    Tape tape;
    const Tensor& y = tape.value(model.forward(tape, batch, tables));
    REQUIRE(y.shape() == std::vector<std::int64_t>{2, cfg.T, cfg.V + 1});
    for (std::int64_t r = 0; r < y.rows(); ++r) {
        double sum = 0.0;
        for (std::int64_t v = 0; v <= cfg.V; ++v) {
            const double p = y.at(r, v);
            CHECK(p >= 0.0);
            CHECK(std::isfinite(p));
            sum += p;
        }
        CHECK(std::abs(sum - 1.0) < 1e-6);
    }
}

TEST_CASE("embed_observation composes lookup, positional add, linear, ln, silu") {
    const ModelConfig cfg = tiny_config();
    Model model(cfg, 7);
    const BatchTokens batch = tiny_batch(cfg, 2);

    Tape tape;
    const Tensor& got = tape.value(model.embed_observation(tape, batch));
    REQUIRE(got.shape() == std::vector<std::int64_t>{2, cfg.T, cfg.C});

    Tape oracle;
    const int table = oracle.param(*model.find_parameter("city.e_traj"));
    int z = oracle.lookup(table, batch.obs, {2, cfg.T});
    z = oracle.add_rowbcast(z, model.positional_time());
    z = oracle.linear(z, oracle.param(*model.find_parameter("backbone.emb.w")),
                      oracle.param(*model.find_parameter("backbone.emb.b")));
    z = oracle.layer_norm(z, oracle.param(*model.find_parameter("backbone.emb.ln_g")),
                          oracle.param(*model.find_parameter("backbone.emb.ln_b")));
    z = oracle.silu(z);
    const Tensor& want = oracle.value(z);
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("identical tokens at different time steps embed differently") {
    ModelConfig cfg = tiny_config();
    Model model(cfg, 9);
    BatchTokens batch;
    batch.B = 1;
    batch.obs.assign(static_cast<std::size_t>(cfg.T), 3); // same token everywhere
    batch.his.assign(static_cast<std::size_t>(cfg.N * cfg.T), 0);

    Tape tape;
    const Tensor& z = tape.value(model.embed_observation(tape, batch));
    bool any_differ = false;
    for (int c = 0; c < cfg.C; ++c) {
        if (std::abs(z.at(0, c) - z.at(1, c)) > 1e-9) any_differ = true;
    }
    CHECK(any_differ);
}

TEST_CASE("embed_history shares weights with embed_observation") {
    ModelConfig cfg = tiny_config();
    cfg.N = 1;
    Model model(cfg, 11);
    BatchTokens batch = tiny_batch(cfg, 3);
    batch.his = batch.obs; // N=1 history equals the observation

    Tape tape;
    const Tensor& z_obs = tape.value(model.embed_observation(tape, batch));
    const Tensor& z_his = tape.value(model.embed_history(tape, batch));
    REQUIRE(z_his.shape() == std::vector<std::int64_t>{2, cfg.N * cfg.T, cfg.C});
    for (std::int64_t i = 0; i < z_obs.numel(); ++i) {
        CHECK(z_his[i] == doctest::Approx(z_obs[i]).epsilon(1e-14));
    }
}

TEST_CASE("history positional code repeats across history slots") {
    ModelConfig cfg = tiny_config();
    cfg.N = 3;
    Model model(cfg, 13);
    BatchTokens batch;
    batch.B = 1;
    batch.obs.assign(static_cast<std::size_t>(cfg.T), 1);
    // all three histories identical
    batch.his.clear();
    for (int n = 0; n < cfg.N; ++n) {
        for (int t = 0; t < cfg.T; ++t) batch.his.push_back(t % 2 == 0 ? 2 : 5);
    }
    Tape tape;
    const Tensor& z = tape.value(model.embed_history(tape, batch));
    // identical history content + tiled positional code => identical embeddings per slot
    for (int n = 1; n < cfg.N; ++n) {
        for (int t = 0; t < cfg.T; ++t) {
            for (int c = 0; c < cfg.C; ++c) {
                CHECK(z[(static_cast<std::int64_t>(n) * cfg.T + t) * cfg.C + c] ==
                      doctest::Approx(z[static_cast<std::int64_t>(t) * cfg.C + c]).epsilon(1e-14));
            }
        }
    }
}

TEST_CASE("adjacency pooling: BV1C equals BVLC rows on single-slot networks") {
    // chain network: every node has at most one out-neighbor, L = 1
    const RoadNetwork chain(4, {{1, 2, 1.0, {}}, {2, 3, 1.5, {}}, {3, 4, 2.0, {}}});
    const AdjacencyTables tables = build_adjacency_tables(
        chain, {{4, 1.0, 2.0, DiscretizationSpec::Policy::EqualWidth}});

    ModelConfig cfg = tiny_config();
    cfg.V = 4;
    cfg.L = 1;
    cfg.K = 4;

    cfg.adj_pool = AdjPoolShape::BV1C;
    Model m1(cfg, 17);
    cfg.adj_pool = AdjPoolShape::BVLC;
    Model m2(cfg, 17); // same seed, same parameter values

    Tape t1, t2;
    const Tensor& pooled = t1.value(m1.embed_adjacency(t1, tables));
    const Tensor& tokens = t2.value(m2.embed_adjacency(t2, tables));
    REQUIRE(pooled.shape() == std::vector<std::int64_t>{4, cfg.C});
    REQUIRE(tokens.shape() == std::vector<std::int64_t>{4, cfg.C});
    for (std::int64_t i = 0; i < pooled.numel(); ++i) {
        CHECK(pooled[i] == doctest::Approx(tokens[i]).epsilon(1e-14));
    }
}

TEST_CASE("masked average pools exactly the real slots") {
    // node 1 has 2 real neighbors; node 2 has 5, setting L = 5
    std::vector<Edge> edges = {{1, 3, 1.0, {}}, {1, 4, 1.2, {}}};
    for (int d = 3; d <= 7; ++d) edges.push_back({2, d, 1.0 + 0.1 * d, {}});
    const RoadNetwork net(7, edges);
    const AdjacencyTables tables = build_adjacency_tables(
        net, {{5, 1.0, 2.0, DiscretizationSpec::Policy::EqualWidth}});
    REQUIRE(tables.L == 5);

    ModelConfig cfg = tiny_config();
    cfg.V = 7;
    cfg.L = 5;
    cfg.K = 5;
    cfg.adj_pool = AdjPoolShape::BV1C;
    Model m1(cfg, 19);
    cfg.adj_pool = AdjPoolShape::BVLC;
    Model m2(cfg, 19);

    Tape t1, t2;
    const Tensor& pooled = t1.value(m1.embed_adjacency(t1, tables));
    const Tensor& tokens = t2.value(m2.embed_adjacency(t2, tables));

    for (int v = 0; v < 7; ++v) {
        int real = 0;
        for (int l = 0; l < 5; ++l) real += tables.a0[static_cast<std::size_t>(v * 5 + l)] != 0;
        for (int c = 0; c < cfg.C; ++c) {
            double mean = 0.0;
            for (int l = 0; l < 5; ++l) {
                mean += tokens[(static_cast<std::int64_t>(v) * 5 + l) * cfg.C + c];
            }
            if (real > 0) mean /= real; // padded tokens are zeroed, so the sum is over real slots
            CHECK(pooled[static_cast<std::int64_t>(v) * cfg.C + c] == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("B11C pools everything into one token") {
    const ModelConfig base = tiny_config();
    ModelConfig cfg = base;
    cfg.adj_pool = AdjPoolShape::B11C;
    Model model(cfg, 23);
    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    Tape tape;
    const Tensor& z = tape.value(model.embed_adjacency(tape, tables));
    CHECK(z.shape() == std::vector<std::int64_t>{1, cfg.C});
}

TEST_CASE("zeroed attention and FFN weights make blocks pure residues") {
    const ModelConfig cfg = tiny_config();
    Model model(cfg, 29);
    // zero every attention output projection and FFN second linear + head
    for (Parameter* p : model.parameters()) {
        if (p->name.find(".wo") != std::string::npos || p->name.find("ffn.w2") != std::string::npos) {
            p->value.fill(0.0);
        }
    }
    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 31);

    Tape tape;
    const int z0 = model.embed_observation(tape, batch);
    const Tensor z0_copy = tape.value(z0);

    Tape full;
    const int y = model.forward(full, batch, tables);
    (void)y;
    // reconstruct: logits of the forward must equal head(z0) because all block
    // contributions vanish; check via a fresh forward on a one-block path
    Tape probe;
    const int z = model.embed_observation(probe, batch);
    const int logits = probe.linear(z, probe.param(*model.find_parameter("city.head.w")),
                                    probe.param(*model.find_parameter("city.head.b")));
    const Tensor& expected = probe.value(probe.softmax(logits));
    const Tensor& got = full.value(y);
    for (std::int64_t i = 0; i < got.numel(); ++i) {
        CHECK(got[i] == doctest::Approx(expected[i]).epsilon(1e-12));
    }
    (void)z0_copy;
}

TEST_CASE("disabling branches equals zeroing their projections") {
    ModelConfig cfg = tiny_config();
    Model full(cfg, 37);
    for (Parameter* p : full.parameters()) {
        if ((p->name.find(".adj.wo") != std::string::npos) ||
            (p->name.find(".his.wo") != std::string::npos)) {
            p->value.fill(0.0);
        }
    }

    ModelConfig reduced_cfg = cfg;
    reduced_cfg.use_adjacency = false;
    reduced_cfg.use_history = false;
    reduced_cfg.M = 0;
    Model reduced(reduced_cfg, 41);
    // align the shared parameters
    for (Parameter* p : reduced.parameters()) {
        Parameter* src = full.find_parameter(p->name);
        REQUIRE(src != nullptr);
        p->value = src->value;
    }

    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 43);
    Tape ta, tb;
    const Tensor& ya = ta.value(full.forward(ta, batch, tables));
    const Tensor& yb = tb.value(reduced.forward(tb, batch, tables));
    for (std::int64_t i = 0; i < ya.numel(); ++i) {
        CHECK(ya[i] == doctest::Approx(yb[i]).epsilon(1e-12));
    }
}

TEST_CASE("multi-query equals multi-head at H=1 with tied weights") {
    ModelConfig cfg = tiny_config();
    cfg.H = 1;
    cfg.adj_attention = AttentionMode::MultiQuery;
    cfg.self_attention = AttentionMode::MultiQuery;
    Model mq(cfg, 47);
    cfg.adj_attention = AttentionMode::MultiHead;
    cfg.self_attention = AttentionMode::MultiHead;
    Model mh(cfg, 47); // same seed: same shapes, same draws at H=1

    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 53);
    Tape ta, tb;
    const Tensor& ya = ta.value(mq.forward(ta, batch, tables));
    const Tensor& yb = tb.value(mh.forward(tb, batch, tables));
    for (std::int64_t i = 0; i < ya.numel(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("per-sample adjacency tables broadcast consistently") {
    const ModelConfig cfg = tiny_config();
    Model model(cfg, 59);
    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 61);

    Tape ta;
    const Tensor& shared = ta.value(model.forward(ta, batch, tables));

    const AdjacencyTables* per_sample[2] = {&tables, &tables};
    Tape tb;
    const Tensor& stacked =
        tb.value(model.forward(tb, batch, std::span<const AdjacencyTables* const>(per_sample, 2)));
    for (std::int64_t i = 0; i < shared.numel(); ++i) {
        CHECK(shared[i] == doctest::Approx(stacked[i]).epsilon(1e-12));
    }
}

TEST_CASE("permutation of node labels permutes output columns") {
    const RoadNetwork net = tiny_net();
    ModelConfig cfg = tiny_config();
    Model m1(cfg, 67);

    // permutation pi over 1..6 (0 stays)
    const std::vector<int> pi{0, 4, 2, 6, 1, 3, 5};

    std::vector<Edge> relabeled;
    for (const Edge& e : net.edges()) {
        relabeled.push_back({pi[static_cast<std::size_t>(e.origin)],
                             pi[static_cast<std::size_t>(e.destination)], e.weight, e.features});
    }
    const RoadNetwork net2(6, relabeled);

    Model m2(cfg, 71);
    for (Parameter* p : m2.parameters()) {
        const Parameter* src = m1.find_parameter(p->name);
        p->value = src->value;
    }
    // permute the node-indexed tables: token embeddings, head columns
    {
        Parameter* src = m1.find_parameter("city.e_traj");
        Parameter* dst = m2.find_parameter("city.e_traj");
        for (int v = 0; v <= 6; ++v) {
            const int to = v == 0 ? 0 : pi[static_cast<std::size_t>(v)];
            for (int c = 0; c < cfg.C; ++c) {
                dst->value.at(to, c) = src->value.at(v, c);
            }
        }
        Parameter* hw1 = m1.find_parameter("city.head.w");
        Parameter* hw2 = m2.find_parameter("city.head.w");
        Parameter* hb1 = m1.find_parameter("city.head.b");
        Parameter* hb2 = m2.find_parameter("city.head.b");
        for (int v = 0; v <= 6; ++v) {
            const int to = v == 0 ? 0 : pi[static_cast<std::size_t>(v)];
            for (int c = 0; c < cfg.C; ++c) hw2->value.at(c, to) = hw1->value.at(c, v);
            hb2->value[to] = hb1->value[v];
        }
    }
    // permute the fixed node positional codes (rows of the (V, L) table)
    {
        const Tensor& src = m1.positional_vl();
        Tensor& dst = m2.positional_vl_mutable();
        for (int v = 1; v <= 6; ++v) {
            const int to = pi[static_cast<std::size_t>(v)];
            for (int l = 0; l < cfg.L; ++l) {
                for (int c = 0; c < cfg.C; ++c) {
                    dst[((static_cast<std::int64_t>(to) - 1) * cfg.L + l) * cfg.C + c] =
                        src[((static_cast<std::int64_t>(v) - 1) * cfg.L + l) * cfg.C + c];
                }
            }
        }
    }

    const auto spec = std::vector<DiscretizationSpec>{{cfg.K, 0.5, 2.5, DiscretizationSpec::Policy::EqualWidth}};
    const AdjacencyTables tab1 = build_adjacency_tables(net, spec);
    const AdjacencyTables tab2 = build_adjacency_tables(net2, spec);

    BatchTokens b1 = tiny_batch(cfg, 73);
    BatchTokens b2 = b1;
    for (auto& token : b2.obs) token = token == 0 ? 0 : pi[static_cast<std::size_t>(token)];
    for (auto& token : b2.his) token = token == 0 ? 0 : pi[static_cast<std::size_t>(token)];

    Tape ta, tb;
    const Tensor& y1 = ta.value(m1.forward(ta, b1, tab1));
    const Tensor& y2 = tb.value(m2.forward(tb, b2, tab2));
    for (std::int64_t r = 0; r < y1.rows(); ++r) {
        CHECK(y2.at(r, 0) == doctest::Approx(y1.at(r, 0)).epsilon(1e-9));
        for (int v = 1; v <= 6; ++v) {
            CHECK(y2.at(r, pi[static_cast<std::size_t>(v)]) ==
                  doctest::Approx(y1.at(r, v)).epsilon(1e-9));
        }
    }
}

TEST_CASE("model config file round-trips") {
    ModelConfig cfg = tiny_config();
    cfg.adj_pool = AdjPoolShape::B11C;
    cfg.adj_attention = AttentionMode::MultiHead;
    cfg.tokenizer = FeatureTokenizer::Mlp;
    cfg.use_history = false;
    cfg.save("/tmp/tppt_test_model.cfg");
    const ModelConfig loaded = ModelConfig::from_file("/tmp/tppt_test_model.cfg");
    CHECK(loaded.V == cfg.V);
    CHECK(loaded.T == cfg.T);
    CHECK(loaded.adj_pool == AdjPoolShape::B11C);
    CHECK(loaded.adj_attention == AttentionMode::MultiHead);
    CHECK(loaded.self_attention == AttentionMode::MultiQuery);
    CHECK(loaded.tokenizer == FeatureTokenizer::Mlp);
    CHECK(loaded.use_history == false);
    CHECK(loaded.init_std == doctest::Approx(cfg.init_std));
}

TEST_CASE("checkpoint round-trip reproduces forward outputs bit for bit") {
    const ModelConfig cfg = tiny_config();
    Model a(cfg, 79);
    {
        auto params = a.parameters();
        const std::vector<const Parameter*> cparams(params.begin(), params.end());
        save_checkpoint(cparams, "/tmp/tppt_test_model.ckpt");
    }
    Model b(cfg, 83); // different init, then overwritten by the checkpoint
    auto params_b = b.parameters();
    load_checkpoint(params_b, "/tmp/tppt_test_model.ckpt");

    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 89);
    Tape ta, tb;
    const Tensor& ya = ta.value(a.forward(ta, batch, tables));
    const Tensor& yb = tb.value(b.forward(tb, batch, tables));
    for (std::int64_t i = 0; i < ya.numel(); ++i) CHECK(ya[i] == yb[i]);
}

TEST_CASE("backbone prefix loads across city models") {
    const ModelConfig cfg = tiny_config();
    Model a(cfg, 97);
    {
        auto params = a.parameters();
        const std::vector<const Parameter*> cparams(params.begin(), params.end());
        save_checkpoint(cparams, "/tmp/tppt_test_backbone.ckpt");
    }
    ModelConfig other = cfg;
    other.V = 9; // a different city: city.* shapes differ, backbone matches
    Model b(other, 101);
    auto params_b = b.parameters();
    load_checkpoint(params_b, "/tmp/tppt_test_backbone.ckpt", "backbone.");
    CHECK(b.find_parameter("backbone.emb.w")->value.data()[0] ==
          a.find_parameter("backbone.emb.w")->value.data()[0]);

    // full load into a mismatched city must fail
    CHECK_THROWS(load_checkpoint(params_b, "/tmp/tppt_test_backbone.ckpt"));
}

TEST_CASE("full tiny model passes the gradient check") {
    const ModelConfig cfg = tiny_config();
    Model model(cfg, 103);
    const AdjacencyTables tables = tiny_tables(tiny_net(), cfg.K);
    const BatchTokens batch = tiny_batch(cfg, 107);

    Rng rng(109);
    std::vector<std::int32_t> targets;
    std::vector<double> weights;
    for (int i = 0; i < batch.B * cfg.T; ++i) {
        const auto token = static_cast<std::int32_t>(rng.range(0, cfg.V));
        targets.push_back(token);
        weights.push_back(token == 0 ? 0.0001 : 1.0);
    }
    auto loss = [&]() {
        Tape t;
        return t.value(t.cross_entropy_sum(model.forward(t, batch, tables), targets, weights))[0];
    };
    auto backward = [&]() {
        Tape t;
        t.backward(t.cross_entropy_sum(model.forward(t, batch, tables), targets, weights));
    };
    auto params = model.parameters();
    const GradCheckResult result = grad_check(loss, backward, params, 1e-4, 60, 111);
    CAPTURE(result.worst_param);
    CHECK(result.max_rel_err < 1e-3);
}
