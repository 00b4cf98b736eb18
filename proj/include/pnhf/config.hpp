#pragma once

#include <cstdint>
#include <string>

#include "pnhf/eval.hpp"
#include "pnhf/flow.hpp"
#include "pnhf/pic.hpp"
#include "pnhf/train.hpp"

namespace pnhf {

inline constexpr const char* kVersion = "0.1.0";

// Everything a run needs, parsed from a JSON file with a strict schema:
// unknown keys are rejected so typos in physics parameters cannot pass
// silently. Missing keys fall back to the defaults below (the full-scale
// reference experiment).
struct RunConfig {
    std::uint64_t seed = 1234;
    std::uint64_t eval_seed = 9001;
    int n_particles = 256;

    GridSpec grid;          // 128 cells, box 128
    PhysicsParams physics;  // charge 0.1, eps0 1, dt 0.04
    double mu_q = 64.0;     // box center
    double mu_p = 0.0;

    struct DatasetCounts {
        int train = 20000;
        int val = 6384;
        int test = 6384;
        int steps = 25;
        int snapshot_stride = 5;
    } dataset;

    struct ModelDimsCfg {
        int phi_hidden = 256;
        int phi_out = 250;
        int psi_hidden = 256;
        double init_a = 0.5;
    } model;

    FlowConfig flow;  // 25 steps, dt 0.04

    struct TrainCfg {
        int epochs = 200;
        int batch_size = 128;
        double learning_rate = 3e-4;
        double beta1 = 0.9;
        double beta2 = 0.999;
        double epsilon = 1e-8;
        int checkpoint_every = 0;
        double clip_norm = 0.0;
    } train;

    struct BaselineCfg {
        int hidden1 = 64;
        int hidden2 = 128;
        int epochs = 200;
        int batch_size = 128;
        double learning_rate = 3e-4;
    } baseline;

    std::string out_dir = "runs/out";

    TrainConfig train_config() const;
    BaselineConfig baseline_config() const;
    ModelDims model_dims() const { return {model.phi_hidden, model.phi_out, model.psi_hidden}; }
    void validate() const;
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);

// Canonical serialization; its FNV-1a hash stamps run metadata.
std::string run_config_json(const RunConfig& cfg);

}  // namespace pnhf
