#pragma once

#include <span>
#include <string>
#include <vector>

#include "pnhf/core.hpp"
#include "pnhf/flow.hpp"
#include "pnhf/nn.hpp"

namespace pnhf {

// Sorted one-dimensional Wasserstein-1 distance, normalized per particle:
//   W1 = (1/N) sum_j |b_(j) - a_(j)|
double wasserstein1(std::span<const double> a, std::span<const double> b);

struct EvalReport {
    std::vector<double> times;
    std::vector<double> w1_q;  // mean over the split, per time
    std::vector<double> w1_p;
    int n_examples = 0;
    int steps = 0;
    double dt = 0.0;
    std::string model_id;
};

// For every test example: draw a fresh initial state from its Gaussian spec
// (seed fixed per example index), integrate forward, and compare the states
// at the requested times against the matching simulator snapshots. Times
// must land on the flow step grid and exist in the ground-truth ladder.
EvalReport evaluate_flow(const DeepSetPotential& params, const KineticScale& kinetic,
                         const std::vector<SnapshotSeries>& test_set, const FlowConfig& cfg,
                         std::span<const double> times, std::uint64_t eval_seed,
                         const std::string& model_id = "flow");

// Direct phase-space regressor used for comparison: two MLPs with two
// hidden layers each; input is sorted initial positions concatenated with
// sorted initial momenta (length 2N), targets are the sorted final
// positions (mlp_q) and sorted final momenta (mlp_p). MSE loss.
struct BaselineModel {
    Mlp mlp_q;
    Mlp mlp_p;

    std::size_t param_count() const { return mlp_q.param_count() + mlp_p.param_count(); }
};

struct BaselineConfig {
    int hidden1 = 64;
    int hidden2 = 128;
    int epochs = 200;
    int batch_size = 128;
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

BaselineModel init_baseline(Rng& rng, std::size_t n_particles, int hidden1, int hidden2);
BaselineModel train_baseline(const std::vector<SnapshotSeries>& train_set, const BaselineConfig& cfg);
EvalReport evaluate_baseline(const BaselineModel& model, const std::vector<SnapshotSeries>& test_set,
                             const std::string& model_id = "baseline");

// Mean squared error of the baseline on a dataset; exposed for tests.
double baseline_mse(const BaselineModel& model, const std::vector<SnapshotSeries>& dataset);

// Empirical-CDF dump for one example: for each requested time and each
// marginal, the sorted truth and model samples. CSV columns:
// time,marginal,source,rank,value with N rows per (time,marginal,source).
void emit_histograms(const DeepSetPotential& params, const KineticScale& kinetic,
                     const SnapshotSeries& example, const FlowConfig& cfg, std::span<const double> times,
                     const std::string& path, std::uint64_t seed);

std::string eval_report_csv(const EvalReport& report);

}  // namespace pnhf
