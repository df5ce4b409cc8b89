#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace tppt::cli {

struct ModelOpts {
    int blocks = 8;
    int hidden = 64;
    int heads = 16;
    int ffn_expansion = 2;
    int discretization = 0; // bin count; 0 selects the raw-value MLP tokenizer
    std::string pool = "BV1C";
    std::string adj_attention = "multi-query";
    std::string self_attention = "multi-query";
    bool no_history = false;
    bool no_adjacency = false;
    double init_std = 0.05;
};

struct SimulateOpts {
    std::string network;
    std::string out;
    int vehicles = 500;
    int histories = 4;
    int horizon = 60;
    double sigma = 0.1;
    double speed_unit = 1.0;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct TrainOpts {
    std::string network;
    std::string data;
    std::string out;
    std::string init;        // directory holding model.cfg + model.ckpt
    bool backbone_only = false;
    double alpha = 0.5;
    double lr = 0.01;
    int batch = 50;
    int epochs = 100;
    int eval_every = 10;
    int horizon = 60;
    int histories = -1;      // -1: infer from the data
    std::uint64_t seed = 0;
    int workers = 1;
    ModelOpts model;
};

struct PredictOpts {
    std::string network;
    std::string data;
    std::string model;       // directory holding model.cfg + model.ckpt
    std::string out;
    std::string checkpoints; // checkpoint-set file; empty draws from (seed, alpha)
    std::string mask = "checkpoint"; // or "none"
    double alpha = 0.5;
    bool exclude_offnetwork = false;
    int batch = 50;
    std::uint64_t seed = 0;
    int workers = 1;
};

struct EvaluateOpts {
    std::string pred;
    std::string truth;
    std::string out; // optional; writes mae.txt + manifest when set
};

struct ExportOpts {
    std::string vol;          // existing volume csv, or
    std::string trajectories; // trajectory file counted with the ground-truth oracle
    std::string network;
    std::string coords;
    std::string out;
};

struct GradcheckOpts {
    std::string model_config;
    int batch = 2;
    double h = 1e-4;
    double tolerance = 1e-3;
    std::uint64_t seed = 0;
};

struct E2eOpts {
    std::string network;
    std::string out;
    std::string alphas = "0.1,0.2,0.3,0.5";
    int vehicles = 300;
    int test_vehicles = 100;
    int histories = 2;
    int horizon = 16;
    double sigma = 0.1;
    double speed_unit = 1.0;
    double pretrain_alpha = 0.5;
    int pretrain_epochs = 15;
    int finetune_epochs = 15;
    int batch = 50;
    double pretrain_lr = 0.01;
    double finetune_lr = 0.001;
    std::uint64_t seed = 0;
    int workers = 1;
    ModelOpts model;
};

struct AblateOpts {
    std::string network;
    std::string out;
    std::string axis; // history | adjacency | discretization | pool_shape | attention_type
    int vehicles = 300;
    int test_vehicles = 100;
    int histories = 2;
    int horizon = 16;
    double sigma = 0.1;
    double alpha = 0.5;
    int epochs = 10;
    int batch = 50;
    double lr = 0.001;
    std::uint64_t seed = 0;
    int workers = 1;
    ModelOpts model;
};

int cmd_simulate(const SimulateOpts& opts);
int cmd_pretrain(const TrainOpts& opts);
int cmd_finetune(const TrainOpts& opts);
int cmd_predict(const PredictOpts& opts);
int cmd_evaluate(const EvaluateOpts& opts);
int cmd_export(const ExportOpts& opts);
int cmd_gradcheck(const GradcheckOpts& opts);
int cmd_e2e(const E2eOpts& opts);
int cmd_ablate(const AblateOpts& opts);
int cmd_rerun(const std::string& manifest_path, const std::string& out_override);

// Full argument parse + dispatch; args excludes the program name.
int dispatch(const std::vector<std::string>& args);

} // namespace tppt::cli
