#include "tppt/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "tppt/checkpoint.hpp"
#include "tppt/error.hpp"
#include "tppt/optim.hpp"

namespace tppt {

namespace {

constexpr std::uint64_t kMaskStream = 0x6d61736bULL;
constexpr std::uint64_t kShuffleStream = 0x73687566ULL;
constexpr std::uint64_t kCheckpointStream = 0x63686b70ULL;
constexpr std::uint64_t kHeldOutStream = 0x686f6c64ULL;

struct BatchLoss {
    double sum = 0.0;       // weighted cross-entropy sum
    std::int64_t real_steps = 0;
};

// Forward + cross entropy for one batch; optionally backpropagates.
BatchLoss run_batch(Model& model, const std::vector<const VehicleRecord*>& batch,
                    const std::vector<Trajectory>& masked_observations,
                    const AdjacencyTables& tables, bool backprop) {
    const ModelConfig& cfg = model.config();
    std::vector<std::vector<Trajectory>> histories;
    histories.reserve(batch.size());
    for (const VehicleRecord* rec : batch) histories.push_back(rec->histories);

    const BatchTokens tokens = make_batch(masked_observations, histories, cfg);

    std::vector<std::int32_t> targets;
    std::vector<double> weights;
    targets.reserve(batch.size() * static_cast<std::size_t>(cfg.T));
    weights.reserve(targets.capacity());
    BatchLoss result;
    for (const VehicleRecord* rec : batch) {
        for (int t = 0; t < cfg.T; ++t) {
            const std::int32_t token = rec->ground_truth[static_cast<std::size_t>(t)];
            targets.push_back(token);
            const double w = (token == 0) ? kPadLossWeight : 1.0;
            weights.push_back(w);
            if (w == 1.0) ++result.real_steps;
        }
    }

    Tape tape;
    const int probs = model.forward(tape, tokens, tables);
    const int ce = tape.cross_entropy_sum(probs, targets, weights);
    result.sum = tape.value(ce)[0];
    if (backprop) {
        // Optimize the per-real-step mean so step sizes are batch-size stable.
        const int loss = tape.scale(ce, result.real_steps > 0 ? 1.0 / static_cast<double>(result.real_steps) : 1.0);
        tape.backward(loss);
    }
    return result;
}

Trajectory mask_observation(const VehicleRecord& rec, const TrainConfig& config,
                            const CheckpointSet* cps, int epoch) {
    if (config.stage == TrainStage::Finetune) {
        return finetune_mask(rec.observation_source, *cps);
    }
    Rng rng = derive_rng(mix_seed(config.seed, kMaskStream),
                         static_cast<std::uint64_t>(epoch),
                         static_cast<std::uint64_t>(rec.vehicle_id));
    Trajectory masked = pretrain_mask(rec.observation_source, config.alpha, rng);
    if (config.mask_final_step_pretrain) {
        const int last = real_length(rec.observation_source) - 1;
        if (last >= 0) masked[static_cast<std::size_t>(last)] = 0;
    }
    return masked;
}

double evaluate_loss(Model& model, const std::vector<const VehicleRecord*>& held_out,
                     const AdjacencyTables& tables, const TrainConfig& config,
                     const CheckpointSet* cps, int epoch) {
    if (held_out.empty()) return std::nan("");
    BatchLoss total;
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < held_out.size(); start += bs) {
        const std::size_t end = std::min(start + bs, held_out.size());
        std::vector<const VehicleRecord*> batch(held_out.begin() + static_cast<std::ptrdiff_t>(start),
                                                held_out.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<Trajectory> masked;
        masked.reserve(batch.size());
        for (const VehicleRecord* rec : batch) masked.push_back(mask_observation(*rec, config, cps, epoch));
        const BatchLoss part = run_batch(model, batch, masked, tables, false);
        total.sum += part.sum;
        total.real_steps += part.real_steps;
    }
    return total.real_steps > 0 ? total.sum / static_cast<double>(total.real_steps) : 0.0;
}

TrainResult train_loop(const std::vector<VehicleRecord>& records, Model& model,
                       const AdjacencyTables& tables, const TrainConfig& config) {
    config.validate();
    if (records.empty()) throw validation_error("training requires a non-empty dataset");

    std::vector<const VehicleRecord*> train_set;
    std::vector<const VehicleRecord*> held_out;
    for (const VehicleRecord& rec : records) {
        (is_held_out(rec.vehicle_id) ? held_out : train_set).push_back(&rec);
    }
    if (train_set.empty()) train_set.swap(held_out);

    TrainResult result;
    const CheckpointSet* cps = nullptr;
    if (config.stage == TrainStage::Finetune) {
        // One checkpoint draw per run, fixed across all epochs.
        result.checkpoints = draw_checkpoint_set(model.config().V, config.alpha, config.seed);
        cps = &result.checkpoints;
    }

    std::vector<Parameter*> params = model.parameters();
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = cosine_lr(epoch, config.epochs, config.lr0);

        std::vector<const VehicleRecord*> order = train_set;
        Rng shuffle_rng = derive_rng(mix_seed(config.seed, kShuffleStream),
                                     static_cast<std::uint64_t>(epoch));
        shuffle_rng.shuffle(order);

        BatchLoss epoch_total;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t end = std::min(start + bs, order.size());
            std::vector<const VehicleRecord*> batch(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                    order.begin() + static_cast<std::ptrdiff_t>(end));
            std::vector<Trajectory> masked;
            masked.reserve(batch.size());
            for (const VehicleRecord* rec : batch) masked.push_back(mask_observation(*rec, config, cps, epoch));

            const BatchLoss part = run_batch(model, batch, masked, tables, true);
            if (!std::isfinite(part.sum)) {
                std::ostringstream ids;
                for (const VehicleRecord* rec : batch) ids << " " << rec->vehicle_id;
                throw runtime_error("non-finite loss at epoch " + std::to_string(epoch) +
                                    "; batch vehicle ids:" + ids.str());
            }
            epoch_total.sum += part.sum;
            epoch_total.real_steps += part.real_steps;

            clip_grad_norm(params, config.clip_norm);
            sgd_step(params, lr);
        }

        LossCurve::Entry entry;
        entry.epoch = epoch;
        entry.train_loss = epoch_total.real_steps > 0
                               ? epoch_total.sum / static_cast<double>(epoch_total.real_steps)
                               : 0.0;
        entry.lr = lr;

        const bool eval_now = config.eval_every > 0 &&
                              ((epoch + 1) % config.eval_every == 0 || epoch + 1 == config.epochs);
        if (eval_now && !held_out.empty()) {
            entry.eval_loss = evaluate_loss(model, held_out, tables, config, cps, epoch);
        }
        if (eval_now && !config.checkpoint_path.empty()) {
            std::vector<const Parameter*> cparams(params.begin(), params.end());
            save_checkpoint(cparams, config.checkpoint_path);
        }
        result.curve.entries.push_back(entry);
    }

    if (!config.checkpoint_path.empty()) {
        std::vector<const Parameter*> cparams(params.begin(), params.end());
        save_checkpoint(cparams, config.checkpoint_path);
    }
    return result;
}

} // namespace

void TrainConfig::validate() const {
    if (!(alpha > 0.0) || alpha > 1.0) throw validation_error("alpha must be in (0, 1]");
    if (!(lr0 > 0.0)) throw validation_error("lr0 must be positive");
    if (batch_size < 1) throw validation_error("batch_size must be positive");
    if (epochs < 1) throw validation_error("epochs must be positive");
    if (clip_norm <= 0.0) throw validation_error("clip_norm must be positive");
}

void LossCurve::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw runtime_error("cannot write loss curve: " + path);
    out << "epoch,train_loss,eval_loss,lr\n";
    char buf[64];
    for (const Entry& e : entries) {
        out << e.epoch << ",";
        std::snprintf(buf, sizeof(buf), "%.9g", e.train_loss);
        out << buf << ",";
        if (e.eval_loss.has_value()) {
            std::snprintf(buf, sizeof(buf), "%.9g", *e.eval_loss);
            out << buf;
        }
        std::snprintf(buf, sizeof(buf), "%.9g", e.lr);
        out << "," << buf << "\n";
    }
}

void prepare_records(std::vector<VehicleRecord>& records, int N, int T, std::uint64_t seed) {
    for (VehicleRecord& rec : records) {
        if (static_cast<int>(rec.ground_truth.size()) != T) {
            rec.ground_truth = rescale_trajectory(rec.ground_truth, T);
        }
        if (rec.observation_source.empty()) rec.observation_source = rec.ground_truth;
        if (static_cast<int>(rec.observation_source.size()) != T) {
            rec.observation_source = rescale_trajectory(rec.observation_source, T);
        }
        for (Trajectory& h : rec.histories) {
            if (static_cast<int>(h.size()) != T) h = rescale_trajectory(h, T);
        }
        if (static_cast<int>(rec.histories.size()) != N) {
            std::vector<Trajectory> pool = rec.histories;
            pool.push_back(rec.observation_source);
            Rng rng = derive_rng(seed, kMaskStream, static_cast<std::uint64_t>(rec.vehicle_id));
            auto [obs, his] = assemble_record(pool, N, rng);
            rec.observation_source = obs;
            rec.ground_truth = obs; // targets follow the designated observation
            rec.histories = std::move(his);
        }
    }
}

bool is_held_out(int vehicle_id) {
    return mix_seed(kHeldOutStream, static_cast<std::uint64_t>(vehicle_id)) % 50 == 0;
}

CheckpointSet draw_checkpoint_set(int node_count, double alpha, std::uint64_t seed) {
    if (!(alpha > 0.0) || alpha > 1.0) throw validation_error("alpha must be in (0, 1]");
    Rng rng = derive_rng(seed, kCheckpointStream);
    const auto count = static_cast<std::size_t>(std::lround(alpha * node_count));
    const auto picks = rng.sample_without_replacement(static_cast<std::size_t>(node_count), count);
    std::vector<int> nodes;
    nodes.reserve(picks.size());
    for (std::size_t p : picks) nodes.push_back(static_cast<int>(p) + 1);
    return CheckpointSet(std::move(nodes), alpha, node_count);
}

double compute_loss(Model& model, const std::vector<const VehicleRecord*>& batch,
                    const std::vector<Trajectory>& masked_observations,
                    const AdjacencyTables& tables) {
    if (batch.empty()) throw validation_error("compute_loss: empty batch");
    const BatchLoss loss = run_batch(model, batch, masked_observations, tables, false);
    return loss.real_steps > 0 ? loss.sum / static_cast<double>(loss.real_steps) : 0.0;
}

TrainResult pretrain(const std::vector<VehicleRecord>& records, Model& model,
                     const AdjacencyTables& tables, const TrainConfig& config) {
    TrainConfig cfg = config;
    cfg.stage = TrainStage::Pretrain;
    return train_loop(records, model, tables, cfg);
}

TrainResult finetune(const std::vector<VehicleRecord>& records, Model& model,
                     const AdjacencyTables& tables, const TrainConfig& config) {
    TrainConfig cfg = config;
    cfg.stage = TrainStage::Finetune;
    return train_loop(records, model, tables, cfg);
}

} // namespace tppt
