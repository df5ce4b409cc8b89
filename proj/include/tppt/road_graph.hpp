#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace tppt {

// Directed road edge. Node ids are 1-based; id 0 is globally reserved as the
// unobserved/absent token, so it never appears as an endpoint.
struct Edge {
    int origin = 0;
    int destination = 0;
    double weight = 0.0;
    std::vector<double> features; // extra continuous columns from the file
};

class RoadNetwork {
public:
    RoadNetwork() = default;
    RoadNetwork(int node_count, std::vector<Edge> edges);

    int node_count() const { return node_count_; }
    int edge_count() const { return static_cast<int>(edges_.size()); }
    int feature_count() const { return feature_count_; } // extra columns, excluding weight

    const std::vector<Edge>& edges() const { return edges_; }
    const Edge& edge(int i) const { return edges_[static_cast<std::size_t>(i)]; }

    // 0-based edge index for (origin, destination); ordinals follow file order.
    std::optional<int> find_edge(int origin, int destination) const;

    // Out-neighbors of a node as (destination, edge index), ascending by destination.
    const std::vector<std::pair<int, int>>& out_edges(int node) const {
        return out_[static_cast<std::size_t>(node)];
    }

    int max_out_degree() const { return max_out_degree_; }

    // Same topology with new per-edge weights.
    RoadNetwork with_weights(const std::vector<double>& weights) const;

private:
    void index();

    int node_count_ = 0;
    int feature_count_ = 0;
    int max_out_degree_ = 0;
    std::vector<Edge> edges_;
    std::unordered_map<std::int64_t, int> edge_index_;
    std::vector<std::vector<std::pair<int, int>>> out_;
};

// Equal-width discretization of [lo, hi] onto bins {1..K}; bin 0 is reserved
// for absent slots. Passthrough treats values as pre-binned integers.
struct DiscretizationSpec {
    int K = 30;
    double lo = 0.0;
    double hi = 1.0;
    enum class Policy { EqualWidth, Passthrough } policy = Policy::EqualWidth;
};

int discretize(double value, const DiscretizationSpec& spec);

// Neighbor table plus aligned per-slot feature tables. Row-major V x L, with
// row v (1-based node id) stored at offset (v-1)*L. Slot order within a row is
// ascending destination id; trailing slots are 0-padded.
struct AdjacencyTables {
    int V = 0;
    int L = 0;
    std::vector<std::int32_t> a0; // neighbor node ids, 0 = no additional neighbors

    struct FeatureTable {
        int K = 0;
        std::vector<std::int32_t> bins; // in {0..K}, 0 = absent slot
    };
    std::vector<FeatureTable> features;      // discretized tables A_1..A_M
    std::vector<std::vector<double>> raw;    // raw per-slot values, aligned with a0

    int M() const { return static_cast<int>(raw.size()); }

    std::int32_t neighbor(int v, int l) const { return a0[static_cast<std::size_t>(v - 1) * L + l]; }
};

// Builds A0 plus one feature table per spec. Feature 0 is the edge weight,
// features 1..F the extra file columns. When specs is empty only raw tables
// are produced. Values outside a spec's [lo, hi] clamp to the nearest bin and
// are reported via a single warning per table.
AdjacencyTables build_adjacency_tables(const RoadNetwork& net,
                                       const std::vector<DiscretizationSpec>& specs);

// Text edge-list format: header "V=<int> E=<int> [F=<int>]", then E lines
// "o d l [f1 ... fF]"; '#' starts a comment.
RoadNetwork load_network(const std::string& path);
void save_network(const RoadNetwork& net, const std::string& path);

// Optional per-node coordinate annex: lines "node x y". Returned vector is
// indexed by node id (slot 0 unused).
std::vector<std::pair<double, double>> load_coordinates(const std::string& path, int node_count);

// Four-connected grid with bidirectional unit-weight edges; nodes are numbered
// row-major starting at 1.
RoadNetwork grid_network(int rows, int cols);

} // namespace tppt
