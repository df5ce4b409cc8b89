#include "tppt/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "tppt/error.hpp"

namespace tppt {

CheckpointSet::CheckpointSet(std::vector<int> nodes, double alpha, int node_count)
    : nodes_(std::move(nodes)), alpha_(alpha) {
    std::sort(nodes_.begin(), nodes_.end());
    member_.assign(static_cast<std::size_t>(node_count) + 1, 0);
    for (int v : nodes_) {
        if (v < 1 || v > node_count) throw validation_error("checkpoint node id out of range");
        member_[static_cast<std::size_t>(v)] = 1;
    }
}

Trajectory rescale_trajectory(const Trajectory& traj, int T) {
    if (T < 1) throw validation_error("rescale target length must be positive");
    const int len = real_length(traj);
    if (len == 0) throw validation_error("cannot rescale an empty trajectory");
    Trajectory out(static_cast<std::size_t>(T), 0);
    for (int t = 0; t < T; ++t) {
        const auto src = static_cast<std::size_t>((static_cast<std::int64_t>(t) * len) / T);
        out[static_cast<std::size_t>(t)] = traj[src];
    }
    return out;
}

CheckpointSet select_checkpoints(const RoadNetwork& net, double alpha, Rng& rng) {
    if (!(alpha > 0.0) || alpha > 1.0) {
        throw validation_error("observation ratio alpha must be in (0, 1]");
    }
    const int V = net.node_count();
    const auto count = static_cast<std::size_t>(std::lround(alpha * V));
    const auto picks = rng.sample_without_replacement(static_cast<std::size_t>(V), count);
    std::vector<int> nodes;
    nodes.reserve(picks.size());
    for (std::size_t p : picks) nodes.push_back(static_cast<int>(p) + 1);
    return CheckpointSet(std::move(nodes), alpha, V);
}

Trajectory pretrain_mask(const Trajectory& traj, double alpha, Rng& rng) {
    Trajectory out = traj;
    for (auto& token : out) {
        if (token != 0 && rng.uniform01() >= alpha) token = 0;
    }
    return out;
}

Trajectory checkpoint_mask(const Trajectory& traj, const CheckpointSet& cps) {
    Trajectory out = traj;
    for (auto& token : out) {
        if (!cps.contains(token)) token = 0;
    }
    return out;
}

Trajectory finetune_mask(const Trajectory& traj, const CheckpointSet& cps) {
    const int last = real_length(traj) - 1;
    Trajectory out = checkpoint_mask(traj, cps);
    if (last >= 0) out[static_cast<std::size_t>(last)] = 0;
    return out;
}

std::pair<Trajectory, std::vector<Trajectory>> assemble_record(const std::vector<Trajectory>& trajs,
                                                               int N, Rng& rng) {
    if (trajs.empty()) throw validation_error("assemble_record requires at least one trajectory");
    const std::size_t n = trajs.size();
    const std::size_t obs = static_cast<std::size_t>(rng.below(n));
    std::vector<Trajectory> histories;
    histories.reserve(static_cast<std::size_t>(N));

    if (n >= static_cast<std::size_t>(N) + 1) {
        std::vector<std::size_t> rest;
        rest.reserve(n - 1);
        for (std::size_t i = 0; i < n; ++i) {
            if (i != obs) rest.push_back(i);
        }
        const auto picks = rng.sample_without_replacement(rest.size(), static_cast<std::size_t>(N));
        for (std::size_t p : picks) histories.push_back(trajs[rest[p]]);
    } else {
        for (int k = 0; k < N; ++k) histories.push_back(trajs[static_cast<std::size_t>(rng.below(n))]);
    }
    return {trajs[obs], std::move(histories)};
}

OneHotTarget one_hot_target(const Trajectory& traj, int V) {
    OneHotTarget target;
    target.T = static_cast<int>(traj.size());
    target.V = V;
    target.rows.assign(static_cast<std::size_t>(target.T) * (V + 1), 0.0);
    target.pad_mask.assign(static_cast<std::size_t>(target.T), 1.0);
    for (int t = 0; t < target.T; ++t) {
        const auto token = traj[static_cast<std::size_t>(t)];
        if (token < 0 || token > V) {
            throw validation_error("trajectory token " + std::to_string(token) + " exceeds node count " +
                                   std::to_string(V));
        }
        target.rows[static_cast<std::size_t>(t) * (V + 1) + token] = 1.0;
        if (token == 0) target.pad_mask[static_cast<std::size_t>(t)] = kPadLossWeight;
    }
    return target;
}

void save_checkpoint_set(const CheckpointSet& cps, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write checkpoint set: " + path);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", cps.alpha());
    out << "alpha " << buf << "\n";
    for (int v : cps.nodes()) out << v << "\n";
}

CheckpointSet load_checkpoint_set(const std::string& path, int node_count) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open checkpoint set: " + path);
    std::string key;
    double alpha = 0.0;
    if (!(in >> key >> alpha) || key != "alpha") {
        throw parse_error(path + ": expected 'alpha <value>' header");
    }
    std::vector<int> nodes;
    int v;
    while (in >> v) nodes.push_back(v);
    return CheckpointSet(std::move(nodes), alpha, node_count);
}

namespace {

void put_i32(std::ofstream& out, std::int32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::int32_t get_i32(std::ifstream& in, const std::string& path) {
    std::int32_t v = 0;
    if (!in.read(reinterpret_cast<char*>(&v), sizeof(v))) {
        throw parse_error("truncated sample shard: " + path);
    }
    return v;
}

void put_trajectory(std::ofstream& out, const Trajectory& traj) {
    out.write(reinterpret_cast<const char*>(traj.data()),
              static_cast<std::streamsize>(traj.size() * sizeof(std::int32_t)));
}

Trajectory get_trajectory(std::ifstream& in, int T, const std::string& path) {
    Trajectory traj(static_cast<std::size_t>(T));
    if (!in.read(reinterpret_cast<char*>(traj.data()),
                 static_cast<std::streamsize>(traj.size() * sizeof(std::int32_t)))) {
        throw parse_error("truncated sample shard: " + path);
    }
    return traj;
}

} // namespace

void write_sample_shard(const std::string& path, const std::vector<VehicleRecord>& records, int V) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw runtime_error("cannot write sample shard: " + path);
    const int T = records.empty() ? 0 : static_cast<int>(records.front().ground_truth.size());
    const int N = records.empty() ? 0 : static_cast<int>(records.front().histories.size());
    put_i32(out, static_cast<std::int32_t>(records.size()));
    put_i32(out, T);
    put_i32(out, N);
    put_i32(out, V);
    for (const VehicleRecord& rec : records) {
        if (static_cast<int>(rec.observation_source.size()) != T ||
            static_cast<int>(rec.ground_truth.size()) != T ||
            static_cast<int>(rec.histories.size()) != N) {
            throw validation_error("inconsistent record geometry in shard write");
        }
        put_trajectory(out, rec.observation_source);
        for (const Trajectory& h : rec.histories) put_trajectory(out, h);
        put_trajectory(out, rec.ground_truth);
    }
}

std::vector<VehicleRecord> read_sample_shard(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw parse_error("cannot open sample shard: " + path);
    const std::int32_t count = get_i32(in, path);
    const std::int32_t T = get_i32(in, path);
    const std::int32_t N = get_i32(in, path);
    const std::int32_t V = get_i32(in, path);
    if (count < 0 || T < 0 || N < 0 || V < 0) throw parse_error("corrupt sample shard header: " + path);

    std::vector<VehicleRecord> records;
    records.reserve(static_cast<std::size_t>(count));
    for (std::int32_t i = 0; i < count; ++i) {
        VehicleRecord rec;
        rec.vehicle_id = i;
        rec.observation_source = get_trajectory(in, T, path);
        for (std::int32_t h = 0; h < N; ++h) rec.histories.push_back(get_trajectory(in, T, path));
        rec.ground_truth = get_trajectory(in, T, path);
        const int len = real_length(rec.ground_truth);
        rec.od = {len > 0 ? rec.ground_truth.front() : 0,
                  len > 0 ? rec.ground_truth[static_cast<std::size_t>(len - 1)] : 0};
        records.push_back(std::move(rec));
    }
    return records;
}

} // namespace tppt
