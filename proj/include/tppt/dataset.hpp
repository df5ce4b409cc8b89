#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "tppt/rng.hpp"
#include "tppt/road_graph.hpp"
#include "tppt/simulator.hpp"
#include "tppt/trajectory.hpp"

namespace tppt {

// Loss weight applied to padding steps so predictions may terminate there.
inline constexpr double kPadLossWeight = 0.0001;

// Observable intersections, fixed for an entire fine-tuning run.
class CheckpointSet {
public:
    CheckpointSet() = default;
    CheckpointSet(std::vector<int> nodes, double alpha, int node_count);

    bool contains(std::int32_t node) const {
        return node > 0 && node <= static_cast<std::int32_t>(member_.size()) - 1 &&
               member_[static_cast<std::size_t>(node)] != 0;
    }
    const std::vector<int>& nodes() const { return nodes_; }
    double alpha() const { return alpha_; }

private:
    std::vector<int> nodes_; // sorted
    std::vector<char> member_;
    double alpha_ = 0.0;
};

// Nearest-neighbor resampling of the non-padding prefix onto exactly T steps.
Trajectory rescale_trajectory(const Trajectory& traj, int T);

// Uniform sample of round(alpha*V) nodes, without replacement.
CheckpointSet select_checkpoints(const RoadNetwork& net, double alpha, Rng& rng);

// Each non-padding token is independently replaced by 0 with probability
// 1-alpha; padding steps are untouched.
Trajectory pretrain_mask(const Trajectory& traj, double alpha, Rng& rng);

// Keeps only tokens at observable checkpoints.
Trajectory checkpoint_mask(const Trajectory& traj, const CheckpointSet& cps);

// Checkpoint masking plus zeroing of the last non-padding position of the
// input trajectory.
Trajectory finetune_mask(const Trajectory& traj, const CheckpointSet& cps);

// Chooses the observation and N histories from the available trajectories:
// without replacement when enough are available, resampling with replacement
// otherwise.
std::pair<Trajectory, std::vector<Trajectory>> assemble_record(const std::vector<Trajectory>& trajs,
                                                               int N, Rng& rng);

struct OneHotTarget {
    int T = 0;
    int V = 0;
    std::vector<double> rows;     // T x (V+1), row-major
    std::vector<double> pad_mask; // 1.0 on real steps, kPadLossWeight on padding

    double at(int t, int v) const { return rows[static_cast<std::size_t>(t) * (V + 1) + v]; }
};

OneHotTarget one_hot_target(const Trajectory& traj, int V);

// Checkpoint-set text file: "alpha <value>" then one node id per line.
void save_checkpoint_set(const CheckpointSet& cps, const std::string& path);
CheckpointSet load_checkpoint_set(const std::string& path, int node_count);

// Binary sample shard: int32 header (record count, T, N, V), then per record
// the observation source, N histories, and target tokens as int32.
void write_sample_shard(const std::string& path, const std::vector<VehicleRecord>& records, int V);
std::vector<VehicleRecord> read_sample_shard(const std::string& path);

} // namespace tppt
