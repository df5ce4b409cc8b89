#pragma once

#include <string>
#include <vector>

#include "tppt/road_graph.hpp"
#include "tppt/tensor.hpp"
#include "tppt/trajectory.hpp"

namespace tppt {

// Per-vehicle edge-occupancy probabilities.
struct EdgeProbability {
    int B = 0;
    int T = 0;
    int E = 0;
    std::vector<double> v; // B x T x E row-major

    double at(int b, int t, int e) const {
        return v[(static_cast<std::size_t>(b) * T + t) * E + e];
    }
};

// Expected vehicle count per edge and time step.
struct VolumeTensor {
    int E = 0;
    int T = 0;
    std::vector<double> v; // E x T row-major

    double at(int e, int t) const { return v[static_cast<std::size_t>(e) * T + t]; }
    double& at(int e, int t) { return v[static_cast<std::size_t>(e) * T + t]; }
};

// Transition-plus-dwell edge probability. Y is (B, T, V+1); class 0 carries
// off-network mass and is excluded. The final step has no successor row and
// uses the dwell-only form Y[b,T,o_i]^2.
EdgeProbability edge_probability(const Tensor& Y, const RoadNetwork& net);

// Eq.-style per-vehicle normalization: each vehicle with any edge mass at a
// step contributes exactly one unit, split across edges. With
// exclude_offnetwork set, the unit is scaled by the vehicle's on-network
// probability (requires Y).
VolumeTensor volume(const EdgeProbability& dotY, bool exclude_offnetwork = false,
                    const Tensor* Y = nullptr);

// Brute-force counting on complete trajectories: a vehicle occupies edge
// (u, v) at step t iff token[t] = u and the next distinct token is v.
// Arrival and padding steps contribute nothing.
VolumeTensor volume_oracle(const std::vector<Trajectory>& trajectories, const RoadNetwork& net);

double mae(const VolumeTensor& pred, const VolumeTensor& truth);

// vol.csv (E rows x T columns, 6 decimals), totals.csv (one "t,total" row per
// step), and volumes.geojson with one LineString feature per edge when
// coordinates are available.
struct ExportPaths {
    std::string volume_csv;
    std::string totals_csv;
    std::string geojson; // empty when skipped
};

ExportPaths export_volumes(const VolumeTensor& vol, const RoadNetwork& net,
                           const std::vector<std::pair<double, double>>* coordinates,
                           const std::string& out_dir);

void write_volume_csv(const VolumeTensor& vol, const std::string& path);
VolumeTensor read_volume_csv(const std::string& path);

} // namespace tppt
