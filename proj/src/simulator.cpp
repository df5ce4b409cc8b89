#include "tppt/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>
#include <sstream>

#include "tppt/error.hpp"

namespace tppt {

void SimConfig::validate() const {
    if (vehicle_count < 0) throw validation_error("vehicle_count must be non-negative");
    if (histories_per_vehicle < 0) throw validation_error("histories_per_vehicle must be non-negative");
    if (horizon < 2) throw validation_error("horizon must be at least 2");
    if (!(speed_unit > 0.0)) throw validation_error("speed_unit must be positive");
    if (weight_noise < 0.0) throw validation_error("weight_noise must be non-negative");
}

std::optional<ShortestPathResult> shortest_path(const RoadNetwork& net, int origin, int destination) {
    const int V = net.node_count();
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(static_cast<std::size_t>(V) + 1, kInf);
    std::vector<int> prev(static_cast<std::size_t>(V) + 1, 0);

    using Item = std::pair<double, int>; // (distance, node); node id orders ties
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[static_cast<std::size_t>(origin)] = 0.0;
    queue.emplace(0.0, origin);

    while (!queue.empty()) {
        const auto [d, u] = queue.top();
        queue.pop();
        if (d > dist[static_cast<std::size_t>(u)]) continue;
        if (u == destination) break;
        for (const auto& [v, ei] : net.out_edges(u)) {
            const double nd = d + net.edge(ei).weight;
            if (nd < dist[static_cast<std::size_t>(v)]) {
                dist[static_cast<std::size_t>(v)] = nd;
                prev[static_cast<std::size_t>(v)] = u;
                queue.emplace(nd, v);
            }
        }
    }

    if (dist[static_cast<std::size_t>(destination)] == kInf) return std::nullopt;

    ShortestPathResult result;
    result.cost = dist[static_cast<std::size_t>(destination)];
    for (int v = destination; v != origin; v = prev[static_cast<std::size_t>(v)]) {
        result.nodes.push_back(v);
    }
    result.nodes.push_back(origin);
    std::reverse(result.nodes.begin(), result.nodes.end());
    return result;
}

namespace {

// Reachable-node sets discovered on demand, one BFS per origin.
class ReachabilityCache {
public:
    explicit ReachabilityCache(const RoadNetwork& net)
        : net_(net), known_(static_cast<std::size_t>(net.node_count()) + 1) {}

    bool reachable(int origin, int destination) {
        auto& set = known_[static_cast<std::size_t>(origin)];
        if (set.empty()) {
            set.assign(static_cast<std::size_t>(net_.node_count()) + 1, 0);
            std::queue<int> frontier;
            frontier.push(origin);
            set[static_cast<std::size_t>(origin)] = 1;
            while (!frontier.empty()) {
                const int u = frontier.front();
                frontier.pop();
                for (const auto& [v, ei] : net_.out_edges(u)) {
                    (void)ei;
                    if (!set[static_cast<std::size_t>(v)]) {
                        set[static_cast<std::size_t>(v)] = 1;
                        frontier.push(v);
                    }
                }
            }
        }
        return set[static_cast<std::size_t>(destination)] != 0;
    }

private:
    const RoadNetwork& net_;
    std::vector<std::vector<char>> known_;
};

constexpr int kOdRetryCap = 100000;

std::pair<int, int> sample_one_od(const RoadNetwork& net, Rng& rng, ReachabilityCache& cache) {
    const int V = net.node_count();
    int last_origin = 0;
    for (int attempt = 0; attempt < kOdRetryCap; ++attempt) {
        const int o = static_cast<int>(rng.range(1, V));
        int d = static_cast<int>(rng.range(1, V - 1));
        if (d >= o) ++d; // uniform over destinations != origin
        last_origin = o;
        if (cache.reachable(o, d)) return {o, d};
    }
    throw runtime_error("OD sampling retry cap exceeded; origin " + std::to_string(last_origin) +
                        " cannot reach a sampled destination");
}

} // namespace

std::vector<std::pair<int, int>> sample_od_pairs(const RoadNetwork& net, int count, Rng& rng) {
    if (net.node_count() < 2) throw validation_error("OD sampling requires at least 2 nodes");
    ReachabilityCache cache(net);
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pairs.push_back(sample_one_od(net, rng, cache));
    return pairs;
}

RoadNetwork perturb_weights(const RoadNetwork& net, double sigma, Rng& rng) {
    if (sigma < 0.0) throw validation_error("sigma must be non-negative");
    std::vector<double> weights(static_cast<std::size_t>(net.edge_count()));
    for (int i = 0; i < net.edge_count(); ++i) {
        const double eps = (sigma == 0.0) ? 0.0 : rng.normal(0.0, sigma);
        weights[static_cast<std::size_t>(i)] = net.edge(i).weight * std::exp(eps);
    }
    return net.with_weights(weights);
}

EncodedTrajectory shortest_path_trajectory(const RoadNetwork& net, int origin, int destination,
                                           const SimConfig& config) {
    config.validate();
    const int T = config.horizon;
    EncodedTrajectory out;
    out.tokens.assign(static_cast<std::size_t>(T), 0);

    if (origin == destination) {
        out.tokens[0] = origin;
        return out;
    }

    const auto path = shortest_path(net, origin, destination);
    if (!path) {
        throw runtime_error("destination " + std::to_string(destination) + " unreachable from " +
                            std::to_string(origin));
    }
    out.path_cost = path->cost;

    int t = 0;
    const auto emit = [&](int token) {
        if (t < T) {
            out.tokens[static_cast<std::size_t>(t)] = token;
            ++t;
        } else {
            out.truncated = true;
        }
    };
    for (std::size_t i = 0; i + 1 < path->nodes.size(); ++i) {
        const int u = path->nodes[i];
        const int v = path->nodes[i + 1];
        const auto ei = net.find_edge(u, v);
        const double w = net.edge(*ei).weight;
        const long long steps = std::max<long long>(1, std::llround(w / config.speed_unit));
        for (long long s = 0; s < steps; ++s) emit(u);
    }
    emit(destination);
    return out;
}

std::vector<VehicleRecord> generate_fleet(const RoadNetwork& net, const SimConfig& config) {
    config.validate();
    const int N = config.histories_per_vehicle;
    std::vector<VehicleRecord> records;
    records.reserve(static_cast<std::size_t>(config.vehicle_count));

    ReachabilityCache cache(net);
    for (int vehicle = 0; vehicle < config.vehicle_count; ++vehicle) {
        Rng rng = derive_rng(config.seed, static_cast<std::uint64_t>(vehicle));
        VehicleRecord rec;
        rec.vehicle_id = vehicle;
        rec.od = sample_one_od(net, rng, cache);

        std::vector<Trajectory> trajs;
        std::vector<std::vector<double>> weights;
        trajs.reserve(static_cast<std::size_t>(N) + 1);
        for (int k = 0; k <= N; ++k) {
            const RoadNetwork perturbed = perturb_weights(net, config.weight_noise, rng);
            auto encoded = shortest_path_trajectory(perturbed, rec.od.first, rec.od.second, config);
            rec.truncated = rec.truncated || encoded.truncated;
            trajs.push_back(std::move(encoded.tokens));
            if (config.record_weights) {
                std::vector<double> w(static_cast<std::size_t>(perturbed.edge_count()));
                for (int i = 0; i < perturbed.edge_count(); ++i) w[static_cast<std::size_t>(i)] = perturbed.edge(i).weight;
                weights.push_back(std::move(w));
            }
        }

        const int obs_idx = static_cast<int>(rng.below(static_cast<std::uint64_t>(N) + 1));
        rec.observation_source = trajs[static_cast<std::size_t>(obs_idx)];
        rec.ground_truth = rec.observation_source;
        for (int k = 0; k <= N; ++k) {
            if (k != obs_idx) rec.histories.push_back(trajs[static_cast<std::size_t>(k)]);
        }
        if (config.record_weights) {
            rec.perturbed_weights.push_back(weights[static_cast<std::size_t>(obs_idx)]);
            for (int k = 0; k <= N; ++k) {
                if (k != obs_idx) rec.perturbed_weights.push_back(weights[static_cast<std::size_t>(k)]);
            }
        }
        records.push_back(std::move(rec));
    }

    std::sort(records.begin(), records.end(),
              [](const VehicleRecord& a, const VehicleRecord& b) { return a.vehicle_id < b.vehicle_id; });
    return records;
}

namespace {

void write_line(std::ofstream& out, int vehicle_id, const char* role, int index, const Trajectory& traj) {
    out << vehicle_id << ' ' << role << ' ' << index;
    for (const auto token : traj) out << ' ' << token;
    out << '\n';
}

} // namespace

void write_trajectory_file(const std::vector<VehicleRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write trajectory file: " + path);
    for (const VehicleRecord& rec : records) {
        write_line(out, rec.vehicle_id, "gt", 0, rec.ground_truth);
        write_line(out, rec.vehicle_id, "obs", 0, rec.observation_source);
        for (std::size_t h = 0; h < rec.histories.size(); ++h) {
            write_line(out, rec.vehicle_id, "his", static_cast<int>(h + 1), rec.histories[h]);
        }
    }
}

std::vector<VehicleRecord> read_trajectory_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open trajectory file: " + path);

    std::vector<VehicleRecord> records;
    std::unordered_map<int, std::size_t> by_id;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        int vehicle_id = 0, index = 0;
        std::string role;
        if (!(ss >> vehicle_id >> role >> index)) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": malformed trajectory line");
        }
        Trajectory traj;
        std::int32_t token;
        while (ss >> token) traj.push_back(token);
        if (traj.empty()) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": trajectory has no tokens");
        }

        auto [it, inserted] = by_id.emplace(vehicle_id, records.size());
        if (inserted) {
            records.emplace_back();
            records.back().vehicle_id = vehicle_id;
        }
        VehicleRecord& rec = records[it->second];
        if (role == "gt") {
            rec.ground_truth = std::move(traj);
        } else if (role == "obs") {
            rec.observation_source = std::move(traj);
        } else if (role == "his") {
            rec.histories.push_back(std::move(traj));
        } else {
            throw parse_error(path + ":" + std::to_string(line_no) + ": unknown role '" + role + "'");
        }
    }
    for (VehicleRecord& rec : records) {
        if (rec.ground_truth.empty() && !rec.observation_source.empty()) rec.ground_truth = rec.observation_source;
        if (rec.observation_source.empty() && !rec.ground_truth.empty()) rec.observation_source = rec.ground_truth;
        if (rec.ground_truth.empty()) {
            throw parse_error(path + ": vehicle " + std::to_string(rec.vehicle_id) + " has no gt/obs line");
        }
        const int len = real_length(rec.ground_truth);
        rec.od = {rec.ground_truth.front(),
                  len > 0 ? rec.ground_truth[static_cast<std::size_t>(len - 1)] : 0};
    }
    std::sort(records.begin(), records.end(),
              [](const VehicleRecord& a, const VehicleRecord& b) { return a.vehicle_id < b.vehicle_id; });
    return records;
}

} // namespace tppt
