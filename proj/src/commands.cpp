#include "tppt/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "tppt/checkpoint.hpp"
#include "tppt/dataset.hpp"
#include "tppt/error.hpp"
#include "tppt/manifest.hpp"
#include "tppt/model.hpp"
#include "tppt/optim.hpp"
#include "tppt/road_graph.hpp"
#include "tppt/simulator.hpp"
#include "tppt/training.hpp"
#include "tppt/volume.hpp"

namespace tppt::cli {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

std::vector<VehicleRecord> load_records(const std::string& path) {
    if (ends_with(path, ".shard") || ends_with(path, ".bin")) return read_sample_shard(path);
    return read_trajectory_file(path);
}

AttentionMode parse_attention(const std::string& s) {
    if (s == "multi-query") return AttentionMode::MultiQuery;
    if (s == "multi-head") return AttentionMode::MultiHead;
    throw config_error("unknown attention mode '" + s + "' (expected multi-query or multi-head)");
}

AdjPoolShape parse_pool(const std::string& s) {
    if (s == "BV1C") return AdjPoolShape::BV1C;
    if (s == "BVLC") return AdjPoolShape::BVLC;
    if (s == "B11C") return AdjPoolShape::B11C;
    throw config_error("unknown pool shape '" + s + "' (expected BV1C, BVLC or B11C)");
}

ModelConfig build_model_config(const RoadNetwork& net, int horizon, int histories,
                               const ModelOpts& m) {
    ModelConfig cfg;
    cfg.V = net.node_count();
    cfg.T = horizon;
    cfg.L = net.max_out_degree();
    cfg.N = histories;
    cfg.C = m.hidden;
    cfg.H = m.heads;
    cfg.n_block = m.blocks;
    cfg.ffn_expansion = m.ffn_expansion;
    cfg.use_history = !m.no_history && histories > 0;
    cfg.use_adjacency = !m.no_adjacency;
    cfg.M = cfg.use_adjacency ? 1 + net.feature_count() : 0;
    if (m.discretization > 0) {
        cfg.tokenizer = FeatureTokenizer::Discretized;
        cfg.K = m.discretization;
    } else {
        cfg.tokenizer = FeatureTokenizer::Mlp;
    }
    cfg.adj_attention = parse_attention(m.adj_attention);
    cfg.self_attention = parse_attention(m.self_attention);
    cfg.adj_pool = parse_pool(m.pool);
    cfg.init_std = m.init_std;
    cfg.validate();
    return cfg;
}

std::vector<DiscretizationSpec> feature_specs(const RoadNetwork& net, int K) {
    const int columns = 1 + net.feature_count();
    std::vector<DiscretizationSpec> specs(static_cast<std::size_t>(columns));
    for (int f = 0; f < columns; ++f) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const Edge& e : net.edges()) {
            const double v = (f == 0) ? e.weight : e.features[static_cast<std::size_t>(f - 1)];
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        if (net.edge_count() == 0) {
            lo = 0.0;
            hi = 1.0;
        }
        if (!(lo < hi)) hi = lo + 1.0;
        specs[static_cast<std::size_t>(f)] = {K, lo, hi, DiscretizationSpec::Policy::EqualWidth};
    }
    return specs;
}

AdjacencyTables build_tables(const RoadNetwork& net, const ModelConfig& cfg) {
    if (cfg.use_adjacency && cfg.tokenizer == FeatureTokenizer::Discretized) {
        return build_adjacency_tables(net, feature_specs(net, cfg.K));
    }
    return build_adjacency_tables(net, {});
}

void append_model_argv(std::vector<std::string>& argv, const ModelOpts& m) {
    argv.insert(argv.end(), {"--blocks", std::to_string(m.blocks), "--hidden", std::to_string(m.hidden),
                             "--heads", std::to_string(m.heads), "--ffn-expansion",
                             std::to_string(m.ffn_expansion), "--discretization",
                             std::to_string(m.discretization), "--pool", m.pool, "--adj-attention",
                             m.adj_attention, "--self-attention", m.self_attention, "--init-std",
                             fmt(m.init_std)});
    if (m.no_history) argv.push_back("--no-history");
    if (m.no_adjacency) argv.push_back("--no-adjacency");
}

RunManifest start_manifest(const std::string& command, std::uint64_t seed, int workers) {
    RunManifest m;
    m.command = command;
    m.seed = seed;
    m.workers = workers;
    m.created = iso_timestamp();
    return m;
}

void finish_manifest(RunManifest& m, const std::string& out_dir) {
    m.write(out_dir + "/manifest.json");
}

struct PredictionOutput {
    Tensor Y;          // (B, T, V+1)
    VolumeTensor vol;
    double forward_seconds = 0.0;
};

PredictionOutput run_prediction(Model& model, const AdjacencyTables& tables,
                                const std::vector<VehicleRecord>& records,
                                const CheckpointSet* cps, bool exclude_offnetwork,
                                int batch_size, const RoadNetwork& net) {
    const ModelConfig& cfg = model.config();
    const int B_total = static_cast<int>(records.size());
    PredictionOutput out;
    out.Y = Tensor({B_total, cfg.T, cfg.V + 1});

    const auto start = Clock::now();
    for (int begin = 0; begin < B_total; begin += batch_size) {
        const int end = std::min(begin + batch_size, B_total);
        std::vector<Trajectory> obs;
        std::vector<std::vector<Trajectory>> his;
        obs.reserve(static_cast<std::size_t>(end - begin));
        for (int i = begin; i < end; ++i) {
            const VehicleRecord& rec = records[static_cast<std::size_t>(i)];
            obs.push_back(cps != nullptr ? finetune_mask(rec.observation_source, *cps)
                                         : rec.observation_source);
            his.push_back(rec.histories);
        }
        const BatchTokens tokens = make_batch(obs, his, cfg);
        Tape tape;
        const int y = model.forward(tape, tokens, tables);
        const Tensor& value = tape.value(y);
        std::copy(value.data(), value.data() + value.numel(),
                  out.Y.data() + static_cast<std::int64_t>(begin) * cfg.T * (cfg.V + 1));
    }
    out.forward_seconds = seconds_since(start);

    const EdgeProbability dotY = edge_probability(out.Y, net);
    out.vol = volume(dotY, exclude_offnetwork, &out.Y);
    return out;
}

} // namespace

int cmd_simulate(const SimulateOpts& opts) {
    ensure_dir(opts.out);
    const RoadNetwork net = load_network(opts.network);

    SimConfig cfg;
    cfg.vehicle_count = opts.vehicles;
    cfg.histories_per_vehicle = opts.histories;
    cfg.horizon = opts.horizon;
    cfg.weight_noise = opts.sigma;
    cfg.speed_unit = opts.speed_unit;
    cfg.seed = opts.seed;

    const auto records = generate_fleet(net, cfg);
    const std::string traj_path = opts.out + "/trajectories.txt";
    write_trajectory_file(records, traj_path);

    RunManifest m = start_manifest("simulate", opts.seed, opts.workers);
    m.argv = {"simulate", "--network", opts.network, "--out", opts.out,
              "--vehicles", std::to_string(opts.vehicles), "--histories", std::to_string(opts.histories),
              "--horizon", std::to_string(opts.horizon), "--sigma", fmt(opts.sigma),
              "--speed-unit", fmt(opts.speed_unit), "--seed", std::to_string(opts.seed),
              "--workers", std::to_string(opts.workers)};
    m.config = {{"network", opts.network}, {"vehicles", std::to_string(opts.vehicles)},
                {"histories", std::to_string(opts.histories)}, {"horizon", std::to_string(opts.horizon)},
                {"sigma", fmt(opts.sigma)}, {"speed_unit", fmt(opts.speed_unit)}};
    m.inputs[opts.network] = file_hash(opts.network);
    m.outputs = {"trajectories.txt"};
    finish_manifest(m, opts.out);
    std::cout << "simulated " << records.size() << " vehicles -> " << traj_path << "\n";
    return 0;
}

namespace {

int run_training(const TrainOpts& opts, TrainStage stage) {
    ensure_dir(opts.out);
    const RoadNetwork net = load_network(opts.network);
    std::vector<VehicleRecord> records = load_records(opts.data);
    if (records.empty()) throw validation_error("no records in " + opts.data);

    int N = opts.histories;
    if (N < 0) N = static_cast<int>(records.front().histories.size());

    ModelConfig cfg;
    const bool from_init = !opts.init.empty() && !opts.backbone_only;
    if (from_init) {
        cfg = ModelConfig::from_file(opts.init + "/model.cfg");
        N = cfg.N;
    } else {
        cfg = build_model_config(net, opts.horizon, N, opts.model);
    }

    prepare_records(records, cfg.N, cfg.T, opts.seed);

    Model model(cfg, opts.seed);
    if (!opts.init.empty()) {
        std::vector<Parameter*> params = model.parameters();
        load_checkpoint(params, opts.init + "/model.ckpt", opts.backbone_only ? "backbone." : "");
    }

    const AdjacencyTables tables = build_tables(net, cfg);

    TrainConfig tc;
    tc.stage = stage;
    tc.alpha = opts.alpha;
    tc.batch_size = opts.batch;
    tc.lr0 = opts.lr;
    tc.epochs = opts.epochs;
    tc.seed = opts.seed;
    tc.eval_every = opts.eval_every;
    tc.checkpoint_path = opts.out + "/model.ckpt";

    const TrainResult result = (stage == TrainStage::Pretrain)
                                   ? pretrain(records, model, tables, tc)
                                   : finetune(records, model, tables, tc);

    cfg.save(opts.out + "/model.cfg");
    result.curve.write_csv(opts.out + "/loss.csv");
    if (stage == TrainStage::Finetune) {
        save_checkpoint_set(result.checkpoints, opts.out + "/checkpoints.txt");
    }

    const char* name = stage == TrainStage::Pretrain ? "pretrain" : "finetune";
    RunManifest m = start_manifest(name, opts.seed, opts.workers);
    m.argv = {name, "--network", opts.network, "--data", opts.data, "--out", opts.out,
              "--alpha", fmt(opts.alpha), "--lr", fmt(opts.lr), "--batch", std::to_string(opts.batch),
              "--epochs", std::to_string(opts.epochs), "--eval-every", std::to_string(opts.eval_every),
              "--horizon", std::to_string(opts.horizon), "--histories", std::to_string(opts.histories),
              "--seed", std::to_string(opts.seed), "--workers", std::to_string(opts.workers)};
    if (!opts.init.empty()) {
        m.argv.insert(m.argv.end(), {"--init", opts.init});
        if (opts.backbone_only) m.argv.push_back("--backbone-only");
        m.inputs[opts.init + "/model.ckpt"] = file_hash(opts.init + "/model.ckpt");
    }
    append_model_argv(m.argv, opts.model);
    m.config = {{"network", opts.network}, {"data", opts.data}, {"alpha", fmt(opts.alpha)},
                {"lr", fmt(opts.lr)}, {"batch", std::to_string(opts.batch)},
                {"epochs", std::to_string(opts.epochs)}, {"stage", name}};
    m.inputs[opts.network] = file_hash(opts.network);
    m.inputs[opts.data] = file_hash(opts.data);
    m.outputs = {"model.ckpt", "model.cfg", "loss.csv"};
    if (stage == TrainStage::Finetune) m.outputs.push_back("checkpoints.txt");
    finish_manifest(m, opts.out);

    const auto& last = result.curve.entries.back();
    std::cout << name << " done: epochs=" << opts.epochs << " final_train_loss=" << fmt(last.train_loss);
    if (last.eval_loss.has_value()) std::cout << " final_eval_loss=" << fmt(*last.eval_loss);
    std::cout << "\n";
    return 0;
}

} // namespace

int cmd_pretrain(const TrainOpts& opts) { return run_training(opts, TrainStage::Pretrain); }
int cmd_finetune(const TrainOpts& opts) { return run_training(opts, TrainStage::Finetune); }

int cmd_predict(const PredictOpts& opts) {
    ensure_dir(opts.out);
    const RoadNetwork net = load_network(opts.network);
    std::vector<VehicleRecord> records = load_records(opts.data);
    if (records.empty()) throw validation_error("no records in " + opts.data);

    const ModelConfig cfg = ModelConfig::from_file(opts.model + "/model.cfg");
    Model model(cfg, 0);
    std::vector<Parameter*> params = model.parameters();
    load_checkpoint(params, opts.model + "/model.ckpt");

    prepare_records(records, cfg.N, cfg.T, opts.seed);
    const AdjacencyTables tables = build_tables(net, cfg);

    CheckpointSet cps;
    const CheckpointSet* cps_ptr = nullptr;
    if (opts.mask == "checkpoint") {
        cps = opts.checkpoints.empty() ? draw_checkpoint_set(cfg.V, opts.alpha, opts.seed)
                                       : load_checkpoint_set(opts.checkpoints, cfg.V);
        cps_ptr = &cps;
    } else if (opts.mask != "none") {
        throw config_error("unknown mask mode '" + opts.mask + "' (expected checkpoint or none)");
    }

    const PredictionOutput pred =
        run_prediction(model, tables, records, cps_ptr, opts.exclude_offnetwork, opts.batch, net);
    write_volume_csv(pred.vol, opts.out + "/vol.csv");

    RunManifest m = start_manifest("predict", opts.seed, opts.workers);
    m.argv = {"predict", "--network", opts.network, "--data", opts.data, "--model", opts.model,
              "--out", opts.out, "--mask", opts.mask, "--alpha", fmt(opts.alpha),
              "--batch", std::to_string(opts.batch), "--seed", std::to_string(opts.seed),
              "--workers", std::to_string(opts.workers)};
    if (!opts.checkpoints.empty()) m.argv.insert(m.argv.end(), {"--checkpoints", opts.checkpoints});
    if (opts.exclude_offnetwork) m.argv.push_back("--exclude-offnetwork");
    m.config = {{"network", opts.network}, {"data", opts.data}, {"model", opts.model},
                {"mask", opts.mask}, {"alpha", fmt(opts.alpha)}};
    m.inputs[opts.network] = file_hash(opts.network);
    m.inputs[opts.data] = file_hash(opts.data);
    m.inputs[opts.model + "/model.ckpt"] = file_hash(opts.model + "/model.ckpt");
    if (!opts.checkpoints.empty()) m.inputs[opts.checkpoints] = file_hash(opts.checkpoints);
    m.outputs = {"vol.csv"};
    finish_manifest(m, opts.out);
    std::cout << "predicted volumes for " << records.size() << " vehicles in "
              << fmt(pred.forward_seconds) << " s -> " << opts.out << "/vol.csv\n";
    return 0;
}

int cmd_evaluate(const EvaluateOpts& opts) {
    const VolumeTensor pred = read_volume_csv(opts.pred);
    const VolumeTensor truth = read_volume_csv(opts.truth);
    const double err = mae(pred, truth);
    std::cout << "MAE " << fmt(err) << "\n";
    if (!opts.out.empty()) {
        ensure_dir(opts.out);
        std::ofstream out(opts.out + "/mae.txt");
        out << fmt(err) << "\n";
        RunManifest m = start_manifest("evaluate", 0, 1);
        m.argv = {"evaluate", "--pred", opts.pred, "--truth", opts.truth, "--out", opts.out};
        m.config = {{"pred", opts.pred}, {"truth", opts.truth}};
        m.inputs[opts.pred] = file_hash(opts.pred);
        m.inputs[opts.truth] = file_hash(opts.truth);
        m.outputs = {"mae.txt"};
        finish_manifest(m, opts.out);
    }
    return 0;
}

int cmd_export(const ExportOpts& opts) {
    if (opts.vol.empty() == opts.trajectories.empty()) {
        throw config_error("export needs exactly one of --vol or --from-trajectories");
    }
    ensure_dir(opts.out);
    const RoadNetwork net = load_network(opts.network);

    VolumeTensor vol;
    if (!opts.vol.empty()) {
        vol = read_volume_csv(opts.vol);
    } else {
        const auto records = load_records(opts.trajectories);
        std::vector<Trajectory> gts;
        gts.reserve(records.size());
        for (const auto& rec : records) gts.push_back(rec.ground_truth);
        vol = volume_oracle(gts, net);
    }

    std::vector<std::pair<double, double>> coords;
    const bool have_coords = !opts.coords.empty();
    if (have_coords) coords = load_coordinates(opts.coords, net.node_count());
    const ExportPaths paths = export_volumes(vol, net, have_coords ? &coords : nullptr, opts.out);

    RunManifest m = start_manifest("export", 0, 1);
    m.argv = {"export", "--network", opts.network, "--out", opts.out};
    if (!opts.vol.empty()) m.argv.insert(m.argv.end(), {"--vol", opts.vol});
    if (!opts.trajectories.empty()) m.argv.insert(m.argv.end(), {"--from-trajectories", opts.trajectories});
    if (have_coords) m.argv.insert(m.argv.end(), {"--coords", opts.coords});
    m.config = {{"network", opts.network}};
    m.inputs[opts.network] = file_hash(opts.network);
    if (!opts.vol.empty()) m.inputs[opts.vol] = file_hash(opts.vol);
    if (!opts.trajectories.empty()) m.inputs[opts.trajectories] = file_hash(opts.trajectories);
    m.outputs = {"vol.csv", "totals.csv"};
    if (!paths.geojson.empty()) m.outputs.push_back("volumes.geojson");
    finish_manifest(m, opts.out);
    return 0;
}

int cmd_gradcheck(const GradcheckOpts& opts) {
    const ModelConfig cfg = ModelConfig::from_file(opts.model_config);
    Model model(cfg, opts.seed);

    // Synthetic tables and batch drawn from the config alone.
    Rng rng = derive_rng(opts.seed, 0x67636b31ULL);
    AdjacencyTables tables;
    tables.V = cfg.V;
    tables.L = cfg.L;
    tables.a0.assign(static_cast<std::size_t>(cfg.V) * cfg.L, 0);
    for (int m = 0; m < cfg.M; ++m) {
        tables.features.push_back({cfg.K, std::vector<std::int32_t>(tables.a0.size(), 0)});
        tables.raw.emplace_back(tables.a0.size(), 0.0);
    }
    for (int v = 0; v < cfg.V; ++v) {
        const int degree = cfg.L > 0 ? 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(cfg.L))) : 0;
        auto picks = rng.sample_without_replacement(static_cast<std::size_t>(cfg.V), static_cast<std::size_t>(degree));
        std::sort(picks.begin(), picks.end());
        for (int l = 0; l < degree; ++l) {
            const std::size_t slot = static_cast<std::size_t>(v) * cfg.L + l;
            tables.a0[slot] = static_cast<std::int32_t>(picks[static_cast<std::size_t>(l)]) + 1;
            for (int m = 0; m < cfg.M; ++m) {
                tables.features[static_cast<std::size_t>(m)].bins[slot] =
                    1 + static_cast<std::int32_t>(rng.below(static_cast<std::uint64_t>(cfg.K)));
                tables.raw[static_cast<std::size_t>(m)][slot] = rng.uniform01();
            }
        }
    }

    BatchTokens batch;
    batch.B = opts.batch;
    const auto draw_token = [&]() {
        return rng.uniform01() < 0.2 ? 0 : static_cast<std::int32_t>(rng.range(1, cfg.V));
    };
    for (int i = 0; i < batch.B * cfg.T; ++i) batch.obs.push_back(draw_token());
    for (int i = 0; i < batch.B * cfg.N * cfg.T; ++i) batch.his.push_back(draw_token());

    std::vector<std::int32_t> targets;
    std::vector<double> weights;
    for (int i = 0; i < batch.B * cfg.T; ++i) {
        const std::int32_t token = static_cast<std::int32_t>(rng.range(0, cfg.V));
        targets.push_back(token);
        weights.push_back(token == 0 ? kPadLossWeight : 1.0);
    }

    const auto loss_value = [&]() {
        Tape tape;
        const int y = model.forward(tape, batch, tables);
        const int ce = tape.cross_entropy_sum(y, targets, weights);
        return tape.value(ce)[0];
    };
    const auto loss_backward = [&]() {
        Tape tape;
        const int y = model.forward(tape, batch, tables);
        const int ce = tape.cross_entropy_sum(y, targets, weights);
        tape.backward(ce);
    };

    std::vector<Parameter*> params = model.parameters();
    const GradCheckResult result = grad_check(loss_value, loss_backward, params, opts.h, 200, opts.seed);
    std::cout << "max_rel_err " << fmt(result.max_rel_err) << " param " << result.worst_param << "\n";
    return result.max_rel_err < opts.tolerance ? 0 : 1;
}

namespace {

std::vector<double> parse_alpha_list(const std::string& csv) {
    std::vector<double> alphas;
    std::stringstream ss(csv);
    std::string part;
    while (std::getline(ss, part, ',')) {
        if (!part.empty()) alphas.push_back(std::stod(part));
    }
    if (alphas.empty()) throw config_error("empty alpha list");
    return alphas;
}

std::string alpha_label(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", alpha);
    return buf;
}

} // namespace

int cmd_e2e(const E2eOpts& opts) {
    ensure_dir(opts.out);
    const std::vector<double> alphas = parse_alpha_list(opts.alphas);

    std::vector<std::pair<std::string, double>> timings;
    const auto timed = [&](const std::string& label, const auto& fn) {
        const auto start = Clock::now();
        fn();
        timings.emplace_back(label, seconds_since(start));
    };

    // 1. Simulated train + test fleets.
    SimulateOpts sim;
    sim.network = opts.network;
    sim.out = opts.out + "/sim";
    sim.vehicles = opts.vehicles;
    sim.histories = opts.histories;
    sim.horizon = opts.horizon;
    sim.sigma = opts.sigma;
    sim.speed_unit = opts.speed_unit;
    sim.seed = opts.seed;
    sim.workers = opts.workers;
    timed("simulate", [&] { cmd_simulate(sim); });

    SimulateOpts sim_test = sim;
    sim_test.out = opts.out + "/sim_test";
    sim_test.vehicles = opts.test_vehicles;
    sim_test.seed = mix_seed(opts.seed, 0x74657374ULL);
    timed("simulate_test", [&] { cmd_simulate(sim_test); });

    // 2. Ground-truth volumes of the test fleet.
    ExportOpts truth;
    truth.trajectories = sim_test.out + "/trajectories.txt";
    truth.network = opts.network;
    truth.out = opts.out + "/truth";
    timed("truth_export", [&] { cmd_export(truth); });

    // 3. Pretraining.
    TrainOpts pre;
    pre.network = opts.network;
    pre.data = sim.out + "/trajectories.txt";
    pre.out = opts.out + "/pretrain";
    pre.alpha = opts.pretrain_alpha;
    pre.lr = opts.pretrain_lr;
    pre.batch = opts.batch;
    pre.epochs = opts.pretrain_epochs;
    pre.horizon = opts.horizon;
    pre.histories = opts.histories;
    pre.seed = opts.seed;
    pre.workers = opts.workers;
    pre.model = opts.model;
    timed("pretrain", [&] { cmd_pretrain(pre); });

    // 4. Fine-tune, predict, evaluate per checkpoint ratio.
    struct Row {
        double alpha;
        double mae_value;
        double final_train_loss;
    };
    std::vector<Row> rows;
    const VolumeTensor truth_vol = read_volume_csv(truth.out + "/vol.csv");
    for (const double alpha : alphas) {
        const std::string label = alpha_label(alpha);

        TrainOpts ft = pre;
        ft.init = pre.out;
        ft.out = opts.out + "/finetune_alpha" + label;
        ft.alpha = alpha;
        ft.lr = opts.finetune_lr;
        ft.epochs = opts.finetune_epochs;
        timed("finetune_alpha" + label, [&] { cmd_finetune(ft); });

        PredictOpts pr;
        pr.network = opts.network;
        pr.data = sim_test.out + "/trajectories.txt";
        pr.model = ft.out;
        pr.out = opts.out + "/predict_alpha" + label;
        pr.checkpoints = ft.out + "/checkpoints.txt";
        pr.alpha = alpha;
        pr.batch = opts.batch;
        pr.seed = opts.seed;
        pr.workers = opts.workers;
        timed("predict_alpha" + label, [&] { cmd_predict(pr); });

        const VolumeTensor pred = read_volume_csv(pr.out + "/vol.csv");
        Row row;
        row.alpha = alpha;
        row.mae_value = mae(pred, truth_vol);

        const std::string loss_csv = ft.out + "/loss.csv";
        std::ifstream in(loss_csv);
        std::string line, last;
        std::getline(in, line); // header
        while (std::getline(in, line)) {
            if (!line.empty()) last = line;
        }
        row.final_train_loss = 0.0;
        if (!last.empty()) {
            std::stringstream ss(last);
            std::string cell;
            std::getline(ss, cell, ',');
            std::getline(ss, cell, ',');
            row.final_train_loss = std::stod(cell);
        }
        rows.push_back(row);
    }

    {
        std::ofstream out(opts.out + "/report.csv");
        out << "alpha,mae,final_train_loss,epochs\n";
        for (const Row& row : rows) {
            out << alpha_label(row.alpha) << "," << fmt(row.mae_value) << ","
                << fmt(row.final_train_loss) << "," << opts.finetune_epochs << "\n";
        }
    }
    {
        std::ofstream out(opts.out + "/report_long.csv");
        out << "alpha,metric,value\n";
        for (const Row& row : rows) {
            out << alpha_label(row.alpha) << ",mae," << fmt(row.mae_value) << "\n";
            out << alpha_label(row.alpha) << ",final_train_loss," << fmt(row.final_train_loss) << "\n";
        }
    }
    {
        std::ofstream out(opts.out + "/timings.csv");
        out << "stage,seconds\n";
        for (const auto& [label, secs] : timings) out << label << "," << fmt(secs) << "\n";
    }

    RunManifest m = start_manifest("e2e", opts.seed, opts.workers);
    m.argv = {"e2e", "--network", opts.network, "--out", opts.out, "--alphas", opts.alphas,
              "--vehicles", std::to_string(opts.vehicles), "--test-vehicles",
              std::to_string(opts.test_vehicles), "--histories", std::to_string(opts.histories),
              "--horizon", std::to_string(opts.horizon), "--sigma", fmt(opts.sigma),
              "--pretrain-epochs", std::to_string(opts.pretrain_epochs), "--finetune-epochs",
              std::to_string(opts.finetune_epochs), "--batch", std::to_string(opts.batch),
              "--pretrain-lr", fmt(opts.pretrain_lr), "--finetune-lr", fmt(opts.finetune_lr),
              "--seed", std::to_string(opts.seed), "--workers", std::to_string(opts.workers)};
    append_model_argv(m.argv, opts.model);
    m.config = {{"network", opts.network}, {"alphas", opts.alphas}};
    m.inputs[opts.network] = file_hash(opts.network);
    m.outputs = {"report.csv", "report_long.csv", "timings.csv"};
    finish_manifest(m, opts.out);

    std::cout << "e2e report:\nalpha,mae\n";
    for (const Row& row : rows) std::cout << alpha_label(row.alpha) << "," << fmt(row.mae_value) << "\n";
    return 0;
}

int cmd_ablate(const AblateOpts& opts) {
    ensure_dir(opts.out);

    struct Variant {
        std::string label;
        ModelOpts model;
    };
    std::vector<Variant> variants;
    const auto base = opts.model;
    if (opts.axis == "history") {
        Variant with{"with_history", base};
        Variant without{"without_history", base};
        without.model.no_history = true;
        variants = {with, without};
    } else if (opts.axis == "adjacency") {
        Variant with{"with_adjacency", base};
        Variant without{"without_adjacency", base};
        without.model.no_adjacency = true;
        variants = {with, without};
    } else if (opts.axis == "discretization") {
        for (int k : {0, 10, 20, 30}) {
            Variant v{k == 0 ? "mlp_tokenizer" : "K" + std::to_string(k), base};
            v.model.discretization = k;
            variants.push_back(v);
        }
    } else if (opts.axis == "pool_shape") {
        for (const char* pool : {"BV1C", "BVLC", "B11C"}) {
            Variant v{pool, base};
            v.model.pool = pool;
            variants.push_back(v);
        }
    } else if (opts.axis == "attention_type") {
        for (const char* mode : {"multi-query", "multi-head"}) {
            Variant v{mode, base};
            v.model.adj_attention = mode;
            variants.push_back(v);
        }
    } else {
        throw config_error("unknown ablation axis '" + opts.axis + "'");
    }

    SimulateOpts sim;
    sim.network = opts.network;
    sim.out = opts.out + "/sim";
    sim.vehicles = opts.vehicles;
    sim.histories = opts.histories;
    sim.horizon = opts.horizon;
    sim.sigma = opts.sigma;
    sim.seed = opts.seed;
    sim.workers = opts.workers;
    cmd_simulate(sim);

    SimulateOpts sim_test = sim;
    sim_test.out = opts.out + "/sim_test";
    sim_test.vehicles = opts.test_vehicles;
    sim_test.seed = mix_seed(opts.seed, 0x74657374ULL);
    cmd_simulate(sim_test);

    ExportOpts truth;
    truth.trajectories = sim_test.out + "/trajectories.txt";
    truth.network = opts.network;
    truth.out = opts.out + "/truth";
    cmd_export(truth);
    const VolumeTensor truth_vol = read_volume_csv(truth.out + "/vol.csv");

    struct Row {
        std::string label;
        double mae_value;
        double predict_seconds;
    };
    std::vector<Row> rows;
    for (const Variant& variant : variants) {
        TrainOpts ft;
        ft.network = opts.network;
        ft.data = sim.out + "/trajectories.txt";
        ft.out = opts.out + "/train_" + variant.label;
        ft.alpha = opts.alpha;
        ft.lr = opts.lr;
        ft.batch = opts.batch;
        ft.epochs = opts.epochs;
        ft.horizon = opts.horizon;
        ft.histories = opts.histories;
        ft.seed = opts.seed;
        ft.workers = opts.workers;
        ft.model = variant.model;
        cmd_finetune(ft);

        PredictOpts pr;
        pr.network = opts.network;
        pr.data = sim_test.out + "/trajectories.txt";
        pr.model = ft.out;
        pr.out = opts.out + "/predict_" + variant.label;
        pr.checkpoints = ft.out + "/checkpoints.txt";
        pr.alpha = opts.alpha;
        pr.batch = opts.batch;
        pr.seed = opts.seed;
        pr.workers = opts.workers;

        const RoadNetwork net = load_network(opts.network);
        std::vector<VehicleRecord> records = load_records(pr.data);
        const ModelConfig cfg = ModelConfig::from_file(ft.out + "/model.cfg");
        Model model(cfg, 0);
        std::vector<Parameter*> params = model.parameters();
        load_checkpoint(params, ft.out + "/model.ckpt");
        prepare_records(records, cfg.N, cfg.T, pr.seed);
        const AdjacencyTables tables = build_tables(net, cfg);
        const CheckpointSet cps = load_checkpoint_set(pr.checkpoints, cfg.V);
        const PredictionOutput pred =
            run_prediction(model, tables, records, &cps, false, pr.batch, net);
        ensure_dir(pr.out);
        write_volume_csv(pred.vol, pr.out + "/vol.csv");

        rows.push_back({variant.label, mae(pred.vol, truth_vol), pred.forward_seconds});
    }

    {
        std::ofstream out(opts.out + "/ablation.csv");
        out << "axis,variant,mae\n";
        for (const Row& row : rows) {
            out << opts.axis << "," << row.label << "," << fmt(row.mae_value) << "\n";
        }
    }
    {
        std::ofstream out(opts.out + "/ablation_timings.csv");
        out << "variant,predict_seconds\n";
        for (const Row& row : rows) out << row.label << "," << fmt(row.predict_seconds) << "\n";
    }

    RunManifest m = start_manifest("ablate", opts.seed, opts.workers);
    m.argv = {"ablate", "--network", opts.network, "--axis", opts.axis, "--out", opts.out,
              "--vehicles", std::to_string(opts.vehicles), "--test-vehicles",
              std::to_string(opts.test_vehicles), "--histories", std::to_string(opts.histories),
              "--horizon", std::to_string(opts.horizon), "--sigma", fmt(opts.sigma),
              "--alpha", fmt(opts.alpha), "--epochs", std::to_string(opts.epochs),
              "--batch", std::to_string(opts.batch), "--lr", fmt(opts.lr),
              "--seed", std::to_string(opts.seed), "--workers", std::to_string(opts.workers)};
    append_model_argv(m.argv, opts.model);
    m.config = {{"network", opts.network}, {"axis", opts.axis}};
    m.inputs[opts.network] = file_hash(opts.network);
    m.outputs = {"ablation.csv", "ablation_timings.csv"};
    finish_manifest(m, opts.out);

    std::cout << "ablation (" << opts.axis << "):\nvariant,mae,predict_seconds\n";
    for (const Row& row : rows) {
        std::cout << row.label << "," << fmt(row.mae_value) << "," << fmt(row.predict_seconds) << "\n";
    }
    return 0;
}

int cmd_rerun(const std::string& manifest_path, const std::string& out_override) {
    const RunManifest m = RunManifest::read(manifest_path);
    if (m.argv.empty()) throw validation_error("manifest has no stored invocation: " + manifest_path);
    std::vector<std::string> argv = m.argv;
    if (!out_override.empty()) {
        bool replaced = false;
        for (std::size_t i = 0; i + 1 < argv.size(); ++i) {
            if (argv[i] == "--out") {
                argv[i + 1] = out_override;
                replaced = true;
            }
        }
        if (!replaced) argv.insert(argv.end(), {"--out", out_override});
    }
    return dispatch(argv);
}

int dispatch(const std::vector<std::string>& args) {
    CLI::App app{"trajectory-probability traffic volume toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file with [command] sections");

    SimulateOpts sim;
    auto* sim_cmd = app.add_subcommand("simulate", "generate a synthetic vehicle fleet");
    sim_cmd->add_option("--network", sim.network, "road network file")->required();
    sim_cmd->add_option("--out", sim.out, "output directory")->required();
    sim_cmd->add_option("--vehicles", sim.vehicles, "fleet size");
    sim_cmd->add_option("--histories", sim.histories, "history trajectories per vehicle");
    sim_cmd->add_option("--horizon", sim.horizon, "time steps per trajectory");
    sim_cmd->add_option("--sigma", sim.sigma, "weight perturbation noise");
    sim_cmd->add_option("--speed-unit", sim.speed_unit, "weight units traversed per step");
    sim_cmd->add_option("--seed", sim.seed, "rng seed")->envname("TPPT_SEED");
    sim_cmd->add_option("--workers", sim.workers, "worker count (1 = deterministic)");

    const auto add_model_opts = [](CLI::App* cmd, ModelOpts& m) {
        cmd->add_option("--blocks", m.blocks, "multi-view attention blocks");
        cmd->add_option("--hidden", m.hidden, "hidden size C");
        cmd->add_option("--heads", m.heads, "attention heads H");
        cmd->add_option("--ffn-expansion", m.ffn_expansion, "FFN expansion factor");
        cmd->add_option("--discretization", m.discretization,
                        "feature bin count K; 0 uses the raw-value MLP tokenizer");
        cmd->add_option("--pool", m.pool, "adjacency pooling: BV1C, BVLC or B11C");
        cmd->add_option("--adj-attention", m.adj_attention, "multi-query or multi-head");
        cmd->add_option("--self-attention", m.self_attention, "multi-query or multi-head");
        cmd->add_flag("--no-history", m.no_history, "drop the history branch");
        cmd->add_flag("--no-adjacency", m.no_adjacency, "drop the road-network branch");
        cmd->add_option("--init-std", m.init_std, "weight init standard deviation");
    };

    const auto add_train_opts = [&add_model_opts](CLI::App* cmd, TrainOpts& t, double default_lr) {
        t.lr = default_lr;
        cmd->add_option("--network", t.network, "road network file")->required();
        cmd->add_option("--data", t.data, "trajectory file or sample shard")->required();
        cmd->add_option("--out", t.out, "output directory")->required();
        cmd->add_option("--alpha", t.alpha, "observation ratio");
        cmd->add_option("--lr", t.lr, "initial learning rate");
        cmd->add_option("--batch", t.batch, "batch size");
        cmd->add_option("--epochs", t.epochs, "training epochs");
        cmd->add_option("--eval-every", t.eval_every, "epochs between held-out evaluations");
        cmd->add_option("--horizon", t.horizon, "model horizon T");
        cmd->add_option("--histories", t.histories, "history count N (-1 infers from data)");
        cmd->add_option("--seed", t.seed, "rng seed")->envname("TPPT_SEED");
        cmd->add_option("--workers", t.workers, "worker count (1 = deterministic)");
        add_model_opts(cmd, t.model);
    };

    TrainOpts pre;
    auto* pre_cmd = app.add_subcommand("pretrain", "masked-reconstruction pretraining");
    add_train_opts(pre_cmd, pre, 0.01);

    TrainOpts fin;
    auto* fin_cmd = app.add_subcommand("finetune", "checkpoint-masked fine-tuning");
    add_train_opts(fin_cmd, fin, 0.001);
    fin_cmd->add_option("--init", fin.init, "directory with a pretrained model.cfg + model.ckpt");
    fin_cmd->add_flag("--backbone-only", fin.backbone_only,
                      "load only backbone weights from --init (city embeddings start fresh)");

    PredictOpts prd;
    auto* prd_cmd = app.add_subcommand("predict", "trajectory probabilities and volumes");
    prd_cmd->add_option("--network", prd.network, "road network file")->required();
    prd_cmd->add_option("--data", prd.data, "trajectory file or sample shard")->required();
    prd_cmd->add_option("--model", prd.model, "model directory")->required();
    prd_cmd->add_option("--out", prd.out, "output directory")->required();
    prd_cmd->add_option("--checkpoints", prd.checkpoints, "checkpoint-set file from fine-tuning");
    prd_cmd->add_option("--mask", prd.mask, "observation masking: checkpoint or none");
    prd_cmd->add_option("--alpha", prd.alpha, "observation ratio when drawing checkpoints");
    prd_cmd->add_flag("--exclude-offnetwork", prd.exclude_offnetwork,
                      "scale each vehicle's contribution by its on-network probability");
    prd_cmd->add_option("--batch", prd.batch, "batch size");
    prd_cmd->add_option("--seed", prd.seed, "rng seed")->envname("TPPT_SEED");
    prd_cmd->add_option("--workers", prd.workers, "worker count (1 = deterministic)");

    EvaluateOpts ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "MAE between two volume CSVs");
    ev_cmd->add_option("--pred", ev.pred, "predicted volume csv")->required();
    ev_cmd->add_option("--truth", ev.truth, "ground-truth volume csv")->required();
    ev_cmd->add_option("--out", ev.out, "optional output directory for mae.txt");

    ExportOpts ex;
    auto* ex_cmd = app.add_subcommand("export", "volume CSV/totals/GeoJSON artifacts");
    ex_cmd->add_option("--vol", ex.vol, "existing volume csv");
    ex_cmd->add_option("--from-trajectories", ex.trajectories, "count ground-truth trajectories instead");
    ex_cmd->add_option("--network", ex.network, "road network file")->required();
    ex_cmd->add_option("--coords", ex.coords, "node coordinates file for GeoJSON");
    ex_cmd->add_option("--out", ex.out, "output directory")->required();

    GradcheckOpts gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "finite-difference gradient verification");
    gc_cmd->add_option("--model-config", gc.model_config, "model config file")->required();
    gc_cmd->add_option("--batch", gc.batch, "synthetic batch size");
    gc_cmd->add_option("--step", gc.h, "central-difference step");
    gc_cmd->add_option("--tolerance", gc.tolerance, "max relative error to pass");
    gc_cmd->add_option("--seed", gc.seed, "rng seed")->envname("TPPT_SEED");

    E2eOpts e2;
    auto* e2_cmd = app.add_subcommand("e2e", "simulate - pretrain - finetune - predict - evaluate");
    e2_cmd->add_option("--network", e2.network, "road network file")->required();
    e2_cmd->add_option("--out", e2.out, "output directory")->required();
    e2_cmd->add_option("--alphas", e2.alphas, "comma-separated checkpoint ratios");
    e2_cmd->add_option("--vehicles", e2.vehicles, "training fleet size");
    e2_cmd->add_option("--test-vehicles", e2.test_vehicles, "evaluation fleet size");
    e2_cmd->add_option("--histories", e2.histories, "history trajectories per vehicle");
    e2_cmd->add_option("--horizon", e2.horizon, "time steps per trajectory");
    e2_cmd->add_option("--sigma", e2.sigma, "weight perturbation noise");
    e2_cmd->add_option("--pretrain-alpha", e2.pretrain_alpha, "pretraining observation ratio");
    e2_cmd->add_option("--pretrain-epochs", e2.pretrain_epochs, "pretraining epochs");
    e2_cmd->add_option("--finetune-epochs", e2.finetune_epochs, "fine-tuning epochs");
    e2_cmd->add_option("--batch", e2.batch, "batch size");
    e2_cmd->add_option("--pretrain-lr", e2.pretrain_lr, "pretraining learning rate");
    e2_cmd->add_option("--finetune-lr", e2.finetune_lr, "fine-tuning learning rate");
    e2_cmd->add_option("--seed", e2.seed, "rng seed")->envname("TPPT_SEED");
    e2_cmd->add_option("--workers", e2.workers, "worker count (1 = deterministic)");
    e2.model.blocks = 2;
    e2.model.hidden = 32;
    e2.model.heads = 4;
    add_model_opts(e2_cmd, e2.model);

    AblateOpts ab;
    auto* ab_cmd = app.add_subcommand("ablate", "paired runs along one structural axis");
    ab_cmd->add_option("--network", ab.network, "road network file")->required();
    ab_cmd->add_option("--axis", ab.axis,
                       "history, adjacency, discretization, pool_shape or attention_type")
        ->required();
    ab_cmd->add_option("--out", ab.out, "output directory")->required();
    ab_cmd->add_option("--vehicles", ab.vehicles, "training fleet size");
    ab_cmd->add_option("--test-vehicles", ab.test_vehicles, "evaluation fleet size");
    ab_cmd->add_option("--histories", ab.histories, "history trajectories per vehicle");
    ab_cmd->add_option("--horizon", ab.horizon, "time steps per trajectory");
    ab_cmd->add_option("--sigma", ab.sigma, "weight perturbation noise");
    ab_cmd->add_option("--alpha", ab.alpha, "observation ratio");
    ab_cmd->add_option("--epochs", ab.epochs, "training epochs per variant");
    ab_cmd->add_option("--batch", ab.batch, "batch size");
    ab_cmd->add_option("--lr", ab.lr, "learning rate");
    ab_cmd->add_option("--seed", ab.seed, "rng seed")->envname("TPPT_SEED");
    ab_cmd->add_option("--workers", ab.workers, "worker count (1 = deterministic)");
    ab.model.blocks = 2;
    ab.model.hidden = 32;
    ab.model.heads = 4;
    add_model_opts(ab_cmd, ab.model);

    std::string rerun_manifest;
    std::string rerun_out;
    auto* rr_cmd = app.add_subcommand("rerun", "re-execute a command from its manifest");
    rr_cmd->add_option("--manifest", rerun_manifest, "manifest.json path")->required();
    rr_cmd->add_option("--out", rerun_out, "override the output directory");

    try {
        // CLI11 parses argv-style in reverse order of a vector of strings.
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (sim_cmd->parsed()) return cmd_simulate(sim);
        if (pre_cmd->parsed()) return cmd_pretrain(pre);
        if (fin_cmd->parsed()) return cmd_finetune(fin);
        if (prd_cmd->parsed()) return cmd_predict(prd);
        if (ev_cmd->parsed()) return cmd_evaluate(ev);
        if (ex_cmd->parsed()) return cmd_export(ex);
        if (gc_cmd->parsed()) return cmd_gradcheck(gc);
        if (e2_cmd->parsed()) return cmd_e2e(e2);
        if (ab_cmd->parsed()) return cmd_ablate(ab);
        if (rr_cmd->parsed()) return cmd_rerun(rerun_manifest, rerun_out);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.kind() == ErrorKind::Runtime ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}

} // namespace tppt::cli
