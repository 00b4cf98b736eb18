#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pnhf/core.hpp"
#include "pnhf/flow.hpp"
#include "pnhf/nn.hpp"

namespace pnhf {

struct TrainConfig {
    int epochs = 200;
    int batch_size = 128;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    FlowConfig flow;
    int checkpoint_every = 0;   // 0 disables periodic checkpoints
    double clip_norm = 0.0;     // 0 disables the global-norm divergence guard
};

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long step = 0;

    static AdamState zeros(Eigen::Index n) { return {Eigen::VectorXd::Zero(n), Eigen::VectorXd::Zero(n), 0}; }
};

// Standard bias-corrected Adam:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g.^2
//   params -= lr * (m/(1-b1^t)) ./ (sqrt(v/(1-b2^t)) + eps)
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& cfg);

// What the flow consumes from a dataset example: the final snapshot and the
// base-distribution parameters. Initial particle realizations are not used.
struct TrainExample {
    ParticleSystem final_state;
    GaussianInitSpec spec;
};

std::vector<TrainExample> to_train_examples(const std::vector<SnapshotSeries>& dataset);

struct EpochMetrics {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double a = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    DeepSetPotential params;   // best-validation model
    KineticScale kinetic;
    std::vector<EpochMetrics> log;
    double initial_val_loss = 0.0;
    int best_epoch = 0;
    long skipped_examples = 0;
};

// Minibatch Adam over the pull-back NLL. Epoch shuffling is a seeded
// permutation; the batch gradient is the mean of per-example gradients
// reduced in example order. Divergent examples are skipped and counted;
// more than 10% of a batch diverging aborts with an error. The model with
// the lowest validation NLL is returned. When `checkpoint_dir` is
// non-empty, best.pnhw (and every checkpoint_every epochs, epoch_N.pnhw)
// are written there.
TrainResult train(const std::vector<TrainExample>& train_set, const std::vector<TrainExample>& val_set,
                  const DeepSetPotential& model_init, const KineticScale& kinetic_init,
                  const TrainConfig& cfg, const std::string& checkpoint_dir = "");

std::string metrics_csv(const std::vector<EpochMetrics>& log);

// Expected architecture for checkpoint validation.
struct ModelDims {
    int phi_hidden = 0;
    int phi_out = 0;
    int psi_hidden = 0;
};

struct Checkpoint {
    DeepSetPotential params;
    KineticScale kinetic;
    std::optional<AdamState> adam;
};

// Round-trips every parameter bit. Tensors: phi.<i>.W / phi.<i>.b,
// psi.<i>.W / psi.<i>.b, log_a, and optionally adam.m / adam.v / adam.step.
void save_checkpoint(const DeepSetPotential& params, const KineticScale& kinetic,
                     const AdamState* adam, const std::string& path);
Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelDims>& expect = std::nullopt);

}  // namespace pnhf
