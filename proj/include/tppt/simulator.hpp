#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tppt/rng.hpp"
#include "tppt/road_graph.hpp"
#include "tppt/trajectory.hpp"

namespace tppt {

struct SimConfig {
    int vehicle_count = 0;
    int histories_per_vehicle = 0; // N
    int horizon = 60;              // T
    double weight_noise = 0.0;     // sigma of the log-normal weight perturbation
    double speed_unit = 1.0;       // weight units traversed per time step
    std::uint64_t seed = 0;
    bool record_weights = false;   // keep each trajectory's perturbed weights

    void validate() const;
};

struct VehicleRecord {
    int vehicle_id = 0;
    std::pair<int, int> od{0, 0};
    Trajectory ground_truth;        // observation_source before any masking
    Trajectory observation_source;
    std::vector<Trajectory> histories;
    bool truncated = false;         // some trajectory exceeded the horizon
    // Per-trajectory perturbed weights (observation first, then histories),
    // populated only when SimConfig::record_weights is set.
    std::vector<std::vector<double>> perturbed_weights;
};

struct ShortestPathResult {
    double cost = 0.0;
    std::vector<int> nodes; // origin..destination
};

// Minimum-weight path; equal-cost ties resolve toward smaller node ids.
std::optional<ShortestPathResult> shortest_path(const RoadNetwork& net, int origin, int destination);

// Uniform over ordered reachable pairs with origin != destination.
std::vector<std::pair<int, int>> sample_od_pairs(const RoadNetwork& net, int count, Rng& rng);

// Each weight becomes l*exp(eps), eps ~ Normal(0, sigma^2); topology unchanged.
RoadNetwork perturb_weights(const RoadNetwork& net, double sigma, Rng& rng);

struct EncodedTrajectory {
    Trajectory tokens;
    bool truncated = false;
    double path_cost = 0.0;
};

// Shortest o->d path encoded as dwell repeats: each path edge (u,v) emits u
// for max(1, round(l_uv / speed_unit)) steps, then d once, zero-padded to T.
EncodedTrajectory shortest_path_trajectory(const RoadNetwork& net, int origin, int destination,
                                           const SimConfig& config);

// One OD pair per vehicle; N+1 trajectories under independently perturbed
// weights, one designated uniformly as the observation source. Records come
// back sorted by vehicle_id and are reproducible per (seed, vehicle_id).
std::vector<VehicleRecord> generate_fleet(const RoadNetwork& net, const SimConfig& config);

// Text format: one line per trajectory, "vehicle_id role index t1 .. tT" with
// role in {gt, obs, his}.
void write_trajectory_file(const std::vector<VehicleRecord>& records, const std::string& path);
std::vector<VehicleRecord> read_trajectory_file(const std::string& path);

} // namespace tppt
