#include "tppt/road_graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "tppt/error.hpp"

namespace tppt {

namespace {

std::int64_t pair_key(int o, int d, int v) {
    return static_cast<std::int64_t>(o) * (static_cast<std::int64_t>(v) + 1) + d;
}

} // namespace

RoadNetwork::RoadNetwork(int node_count, std::vector<Edge> edges)
    : node_count_(node_count), edges_(std::move(edges)) {
    if (node_count_ <= 0) {
        throw validation_error("node count must be positive, got " + std::to_string(node_count_));
    }
    feature_count_ = edges_.empty() ? 0 : static_cast<int>(edges_.front().features.size());
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const Edge& e = edges_[i];
        if (e.origin < 1 || e.origin > node_count_ || e.destination < 1 || e.destination > node_count_) {
            throw validation_error("edge " + std::to_string(i + 1) + ": node id out of range 1.." +
                                   std::to_string(node_count_) + " (0 is the reserved unobserved token)");
        }
        if (!(e.weight > 0.0)) {
            throw validation_error("edge " + std::to_string(i + 1) + ": non-positive weight");
        }
        if (static_cast<int>(e.features.size()) != feature_count_) {
            throw validation_error("edge " + std::to_string(i + 1) + ": inconsistent feature column count");
        }
    }
    index();
}

void RoadNetwork::index() {
    edge_index_.clear();
    out_.assign(static_cast<std::size_t>(node_count_) + 1, {});
    for (std::size_t i = 0; i < edges_.size(); ++i) {
        const Edge& e = edges_[i];
        const auto key = pair_key(e.origin, e.destination, node_count_);
        if (!edge_index_.emplace(key, static_cast<int>(i)).second) {
            throw validation_error("duplicate edge (" + std::to_string(e.origin) + "," +
                                   std::to_string(e.destination) + ")");
        }
        out_[static_cast<std::size_t>(e.origin)].emplace_back(e.destination, static_cast<int>(i));
    }
    max_out_degree_ = 0;
    for (auto& lst : out_) {
        std::sort(lst.begin(), lst.end());
        max_out_degree_ = std::max(max_out_degree_, static_cast<int>(lst.size()));
    }
}

std::optional<int> RoadNetwork::find_edge(int origin, int destination) const {
    const auto it = edge_index_.find(pair_key(origin, destination, node_count_));
    if (it == edge_index_.end()) return std::nullopt;
    return it->second;
}

RoadNetwork RoadNetwork::with_weights(const std::vector<double>& weights) const {
    if (weights.size() != edges_.size()) {
        throw validation_error("weight vector size does not match edge count");
    }
    std::vector<Edge> edges = edges_;
    for (std::size_t i = 0; i < edges.size(); ++i) edges[i].weight = weights[i];
    return RoadNetwork(node_count_, std::move(edges));
}

int discretize(double value, const DiscretizationSpec& spec) {
    if (!(spec.lo < spec.hi)) {
        throw validation_error("discretization spec requires lo < hi");
    }
    if (spec.K < 1) {
        throw validation_error("discretization spec requires K >= 1");
    }
    if (spec.policy == DiscretizationSpec::Policy::Passthrough) {
        const int bin = static_cast<int>(std::llround(value));
        return std::clamp(bin, 1, spec.K);
    }
    if (value < spec.lo) return 1;
    if (value > spec.hi) return spec.K;
    const double scaled = static_cast<double>(spec.K) * (value - spec.lo) / (spec.hi - spec.lo);
    return std::min(spec.K, 1 + static_cast<int>(std::floor(scaled)));
}

AdjacencyTables build_adjacency_tables(const RoadNetwork& net,
                                       const std::vector<DiscretizationSpec>& specs) {
    const int V = net.node_count();
    const int L = net.max_out_degree();
    const int feature_columns = 1 + net.feature_count(); // weight first, then extras

    if (!specs.empty() && static_cast<int>(specs.size()) != feature_columns) {
        throw validation_error("expected one discretization spec per feature (" +
                               std::to_string(feature_columns) + "), got " +
                               std::to_string(specs.size()));
    }

    AdjacencyTables t;
    t.V = V;
    t.L = L;
    t.a0.assign(static_cast<std::size_t>(V) * L, 0);
    t.raw.assign(static_cast<std::size_t>(feature_columns),
                 std::vector<double>(static_cast<std::size_t>(V) * L, 0.0));
    for (const auto& spec : specs) {
        AdjacencyTables::FeatureTable ft;
        ft.K = spec.K;
        ft.bins.assign(static_cast<std::size_t>(V) * L, 0);
        t.features.push_back(std::move(ft));
    }

    std::vector<std::size_t> clamped(specs.size(), 0);
    for (int v = 1; v <= V; ++v) {
        const auto& out = net.out_edges(v); // ascending destination id
        for (std::size_t l = 0; l < out.size(); ++l) {
            const std::size_t slot = static_cast<std::size_t>(v - 1) * L + l;
            const Edge& e = net.edge(out[l].second);
            t.a0[slot] = out[l].first;
            for (int f = 0; f < feature_columns; ++f) {
                const double value = (f == 0) ? e.weight : e.features[static_cast<std::size_t>(f - 1)];
                t.raw[static_cast<std::size_t>(f)][slot] = value;
                if (!specs.empty()) {
                    const auto& spec = specs[static_cast<std::size_t>(f)];
                    if (spec.policy == DiscretizationSpec::Policy::EqualWidth &&
                        (value < spec.lo || value > spec.hi)) {
                        ++clamped[static_cast<std::size_t>(f)];
                    }
                    t.features[static_cast<std::size_t>(f)].bins[slot] = discretize(value, spec);
                }
            }
        }
    }
    for (std::size_t f = 0; f < clamped.size(); ++f) {
        if (clamped[f] > 0) {
            std::cerr << "warning: feature " << f << ": " << clamped[f]
                      << " value(s) outside [lo,hi], clamped to nearest bin\n";
        }
    }
    return t;
}

namespace {

bool is_blank_or_comment(const std::string& line) {
    for (char c : line) {
        if (c == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(c))) return false;
    }
    return true;
}

} // namespace

RoadNetwork load_network(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open network file: " + path);

    std::string line;
    int line_no = 0;
    int V = -1, E = -1, F = 0;

    // header
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank_or_comment(line)) continue;
        int matched = std::sscanf(line.c_str(), "V=%d E=%d F=%d", &V, &E, &F);
        if (matched < 2) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": malformed header, expected 'V=<int> E=<int> [F=<int>]'");
        }
        if (matched == 2) F = 0;
        break;
    }
    if (V < 0 || E < 0) throw parse_error(path + ": missing header line");
    if (F < 0) throw parse_error(path + ": negative feature count");

    std::vector<Edge> edges;
    edges.reserve(static_cast<std::size_t>(E));
    while (std::getline(in, line) && static_cast<int>(edges.size()) < E) {
        ++line_no;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ss(line);
        Edge e;
        if (!(ss >> e.origin >> e.destination >> e.weight)) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": malformed edge line");
        }
        e.features.resize(static_cast<std::size_t>(F));
        for (int f = 0; f < F; ++f) {
            if (!(ss >> e.features[static_cast<std::size_t>(f)])) {
                throw parse_error(path + ":" + std::to_string(line_no) + ": expected " +
                                  std::to_string(F) + " feature column(s)");
            }
        }
        std::string trailing;
        if (ss >> trailing) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": unexpected trailing token '" + trailing + "'");
        }
        edges.push_back(std::move(e));
    }
    if (static_cast<int>(edges.size()) != E) {
        throw parse_error(path + ": expected " + std::to_string(E) + " edges, found " +
                          std::to_string(edges.size()));
    }
    return RoadNetwork(V, std::move(edges));
}

void save_network(const RoadNetwork& net, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write network file: " + path);
    out << "V=" << net.node_count() << " E=" << net.edge_count();
    if (net.feature_count() > 0) out << " F=" << net.feature_count();
    out << "\n";
    char buf[64];
    for (const Edge& e : net.edges()) {
        std::snprintf(buf, sizeof(buf), "%.17g", e.weight);
        out << e.origin << " " << e.destination << " " << buf;
        for (double f : e.features) {
            std::snprintf(buf, sizeof(buf), "%.17g", f);
            out << " " << buf;
        }
        out << "\n";
    }
}

std::vector<std::pair<double, double>> load_coordinates(const std::string& path, int node_count) {
    std::ifstream in(path);
    if (!in) throw parse_error("cannot open coordinates file: " + path);
    std::vector<std::pair<double, double>> xy(static_cast<std::size_t>(node_count) + 1, {0.0, 0.0});
    std::vector<bool> seen(static_cast<std::size_t>(node_count) + 1, false);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank_or_comment(line)) continue;
        std::istringstream ss(line);
        int node;
        double x, y;
        if (!(ss >> node >> x >> y)) {
            throw parse_error(path + ":" + std::to_string(line_no) + ": malformed coordinate line");
        }
        if (node < 1 || node > node_count) {
            throw validation_error(path + ":" + std::to_string(line_no) + ": node id out of range");
        }
        xy[static_cast<std::size_t>(node)] = {x, y};
        seen[static_cast<std::size_t>(node)] = true;
    }
    for (int v = 1; v <= node_count; ++v) {
        if (!seen[static_cast<std::size_t>(v)]) {
            throw validation_error(path + ": missing coordinates for node " + std::to_string(v));
        }
    }
    return xy;
}

RoadNetwork grid_network(int rows, int cols) {
    if (rows < 1 || cols < 1) throw validation_error("grid dimensions must be positive");
    const auto id = [cols](int r, int c) { return r * cols + c + 1; };
    std::vector<Edge> edges;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) {
                edges.push_back({id(r, c), id(r, c + 1), 1.0, {}});
                edges.push_back({id(r, c + 1), id(r, c), 1.0, {}});
            }
            if (r + 1 < rows) {
                edges.push_back({id(r, c), id(r + 1, c), 1.0, {}});
                edges.push_back({id(r + 1, c), id(r, c), 1.0, {}});
            }
        }
    }
    return RoadNetwork(rows * cols, std::move(edges));
}

} // namespace tppt
