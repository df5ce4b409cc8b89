#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tppt/dataset.hpp"
#include "tppt/model.hpp"
#include "tppt/road_graph.hpp"
#include "tppt/simulator.hpp"

namespace tppt {

enum class TrainStage { Pretrain, Finetune };

struct TrainConfig {
    TrainStage stage = TrainStage::Pretrain;
    double alpha = 0.5;      // observation ratio; pretrain mask ratio is 1-alpha
    int batch_size = 50;
    double lr0 = 0.01;
    int epochs = 100;
    std::uint64_t seed = 0;
    std::string checkpoint_path;   // model file written every eval_every epochs and at the end
    int eval_every = 10;
    double clip_norm = 5.0;
    bool mask_final_step_pretrain = false; // the fine-tune final-step rule, optionally in pretraining

    void validate() const;
};

struct LossCurve {
    struct Entry {
        int epoch = 0;
        double train_loss = 0.0;
        std::optional<double> eval_loss;
        double lr = 0.0;
    };
    std::vector<Entry> entries;

    void write_csv(const std::string& path) const; // epoch,train_loss,eval_loss,lr
};

struct TrainResult {
    LossCurve curve;
    CheckpointSet checkpoints; // fine-tuning only
};

// Rescales trajectories to the horizon and fills in missing histories by
// resampling, so every record carries exactly N histories of length T.
void prepare_records(std::vector<VehicleRecord>& records, int N, int T, std::uint64_t seed);

// Vehicles whose id hashes into the held-out 2% slice.
bool is_held_out(int vehicle_id);

// The fine-tuning checkpoint draw; prediction uses the same (seed, alpha)
// stream so both sides see the same observability set.
CheckpointSet draw_checkpoint_set(int node_count, double alpha, std::uint64_t seed);

// Mean masked cross-entropy per real (weight-1) step over the batch.
double compute_loss(Model& model, const std::vector<const VehicleRecord*>& batch,
                    const std::vector<Trajectory>& masked_observations,
                    const AdjacencyTables& tables);

TrainResult pretrain(const std::vector<VehicleRecord>& records, Model& model,
                     const AdjacencyTables& tables, const TrainConfig& config);

TrainResult finetune(const std::vector<VehicleRecord>& records, Model& model,
                     const AdjacencyTables& tables, const TrainConfig& config);

} // namespace tppt
