#include "pnhf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pnhf/io.hpp"

namespace pnhf {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamState& state,
               const TrainConfig& cfg) {
    if (params.size() != grads.size() || params.size() != state.m.size() || params.size() != state.v.size())
        throw std::invalid_argument("adam shapes mismatch");

    state.step += 1;
    state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grads;
    state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grads.cwiseProduct(grads);
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
    const Eigen::VectorXd mhat = state.m / bc1;
    const Eigen::VectorXd vhat = state.v / bc2;
    params -= cfg.learning_rate * mhat.cwiseQuotient(vhat.cwiseSqrt().array().matrix() +
                                                     Eigen::VectorXd::Constant(params.size(), cfg.epsilon));
}

std::vector<TrainExample> to_train_examples(const std::vector<SnapshotSeries>& dataset) {
    std::vector<TrainExample> out;
    out.reserve(dataset.size());
    for (const auto& ex : dataset) out.push_back({ex.states.back(), ex.spec});
    return out;
}

namespace {

double mean_validation_loss(const std::vector<TrainExample>& vals, const DeepSetPotential& params,
                            const KineticScale& kinetic, const FlowConfig& flow, long* skipped) {
    double sum = 0.0;
    long count = 0;
    for (const auto& ex : vals) {
        try {
            sum += nll_loss(ex.final_state, ex.spec, params, kinetic, flow).first;
            ++count;
        } catch (const FlowDivergedError&) {
            if (skipped) ++*skipped;
        }
    }
    if (count == 0) throw std::runtime_error("validation failed: every example diverged");
    return sum / static_cast<double>(count);
}

// Fisher-Yates with the shared deterministic generator.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
    for (std::size_t i = idx.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.next_u64() % i);
        std::swap(idx[i - 1], idx[j]);
    }
}

}  // namespace

TrainResult train(const std::vector<TrainExample>& train_set, const std::vector<TrainExample>& val_set,
                  const DeepSetPotential& model_init, const KineticScale& kinetic_init,
                  const TrainConfig& cfg, const std::string& checkpoint_dir) {
    if (train_set.empty() || val_set.empty()) throw std::invalid_argument("datasets must be non-empty");
    if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (!(cfg.learning_rate >= 0.0)) throw std::invalid_argument("learning_rate must be >= 0");

    DeepSetPotential params = model_init;
    KineticScale kinetic = kinetic_init;
    params.validate();

    Eigen::VectorXd flat = flatten(params, kinetic);
    AdamState adam = AdamState::zeros(flat.size());
    Rng rng(cfg.seed);

    TrainResult result;
    result.initial_val_loss = mean_validation_loss(val_set, params, kinetic, cfg.flow, nullptr);

    DeepSetPotential best_params = params;
    KineticScale best_kinetic = kinetic;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;

    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);

    const auto t_start = std::chrono::steady_clock::now();
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        shuffle_indices(order, rng);

        double epoch_loss_sum = 0.0;
        long epoch_loss_count = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            Eigen::VectorXd grad_sum = Eigen::VectorXd::Zero(flat.size());
            double loss_sum = 0.0;
            long valid = 0;
            long diverged = 0;
            for (std::size_t k = begin; k < end; ++k) {
                const auto& ex = train_set[order[k]];
                try {
                    LossGrad lg = nll_loss_grad(ex.final_state, ex.spec, params, kinetic, cfg.flow);
                    grad_sum += flatten_grad(lg.grads);
                    loss_sum += lg.loss;
                    ++valid;
                } catch (const FlowDivergedError& e) {
                    ++diverged;
                    ++result.skipped_examples;
                    std::cerr << "train: skipping diverged example " << order[k] << " (" << e.what() << ")\n";
                }
            }
            const long batch_n = static_cast<long>(end - begin);
            if (diverged * 10 > batch_n)
                throw std::runtime_error("training aborted: " + std::to_string(diverged) + " of " +
                                         std::to_string(batch_n) + " examples in a batch diverged");
            if (valid == 0) continue;

            Eigen::VectorXd grad = grad_sum / static_cast<double>(valid);
            if (cfg.clip_norm > 0.0) {
                const double norm = grad.norm();
                if (norm > cfg.clip_norm) grad *= cfg.clip_norm / norm;
            }
            adam_step(flat, grad, adam, cfg);
            unflatten(flat, params, kinetic);

            epoch_loss_sum += loss_sum;
            epoch_loss_count += valid;
        }

        const double val_loss = mean_validation_loss(val_set, params, kinetic, cfg.flow, nullptr);
        EpochMetrics m;
        m.epoch = epoch;
        m.train_loss = epoch_loss_count > 0 ? epoch_loss_sum / static_cast<double>(epoch_loss_count)
                                            : std::numeric_limits<double>::quiet_NaN();
        m.val_loss = val_loss;
        m.a = kinetic.a();
        m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
        result.log.push_back(m);

        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = params;
            best_kinetic = kinetic;
            best_epoch = epoch;
        }
        if (!checkpoint_dir.empty() && cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            save_checkpoint(params, kinetic, &adam,
                            (std::filesystem::path(checkpoint_dir) / ("epoch_" + std::to_string(epoch) + ".pnhw"))
                                .string());
        }
    }

    result.params = std::move(best_params);
    result.kinetic = best_kinetic;
    result.best_epoch = best_epoch;
    if (!checkpoint_dir.empty())
        save_checkpoint(result.params, result.kinetic, nullptr,
                        (std::filesystem::path(checkpoint_dir) / "best.pnhw").string());
    return result;
}

std::string metrics_csv(const std::vector<EpochMetrics>& log) {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss,a,wall_seconds\n";
    for (const auto& m : log) {
        out << m.epoch << ',' << io::format_double(m.train_loss) << ',' << io::format_double(m.val_loss)
            << ',' << io::format_double(m.a) << ',' << io::format_double(m.wall_seconds) << '\n';
    }
    return out.str();
}

namespace {

io::NamedTensor tensor_from_matrix(const std::string& name, const Eigen::MatrixXd& m) {
    io::NamedTensor t;
    t.name = name;
    t.dims = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
    t.data.resize(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c)
            t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);  // row-major on disk
    return t;
}

io::NamedTensor tensor_from_vector(const std::string& name, const Eigen::VectorXd& v) {
    io::NamedTensor t;
    t.name = name;
    t.dims = {static_cast<std::uint32_t>(v.size())};
    t.data.assign(v.data(), v.data() + v.size());
    return t;
}

void append_mlp_tensors(const std::string& prefix, const Mlp& mlp, std::vector<io::NamedTensor>& out) {
    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
        out.push_back(tensor_from_matrix(prefix + "." + std::to_string(l) + ".W", mlp.layers[l].W));
        out.push_back(tensor_from_vector(prefix + "." + std::to_string(l) + ".b", mlp.layers[l].b));
    }
}

const io::NamedTensor& find_tensor(const std::map<std::string, const io::NamedTensor*>& by_name,
                                   const std::string& name) {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::runtime_error("corrupt checkpoint: missing tensor " + name);
    return *it->second;
}

Mlp mlp_from_tensors(const std::string& prefix, const std::map<std::string, const io::NamedTensor*>& by_name) {
    Mlp mlp;
    for (std::size_t l = 0;; ++l) {
        const std::string wname = prefix + "." + std::to_string(l) + ".W";
        if (by_name.find(wname) == by_name.end()) break;
        const auto& wt = find_tensor(by_name, wname);
        const auto& bt = find_tensor(by_name, prefix + "." + std::to_string(l) + ".b");
        if (wt.dims.size() != 2) throw std::runtime_error("corrupt checkpoint: " + wname + " is not rank 2");
        if (bt.dims.size() != 1)
            throw std::runtime_error("corrupt checkpoint: " + prefix + "." + std::to_string(l) + ".b is not rank 1");
        Layer layer;
        layer.W.resize(wt.dims[0], wt.dims[1]);
        for (std::uint32_t r = 0; r < wt.dims[0]; ++r)
            for (std::uint32_t c = 0; c < wt.dims[1]; ++c) layer.W(r, c) = wt.data[r * wt.dims[1] + c];
        layer.b = Eigen::Map<const Eigen::VectorXd>(bt.data.data(), static_cast<Eigen::Index>(bt.data.size()));
        mlp.layers.push_back(std::move(layer));
    }
    if (mlp.layers.empty()) throw std::runtime_error("corrupt checkpoint: no tensors for " + prefix);
    // Softplus on hidden layers, identity output; implied by position.
    for (std::size_t l = 0; l < mlp.layers.size(); ++l)
        mlp.layers[l].softplus_act = (l + 1 < mlp.layers.size());
    return mlp;
}

}  // namespace

void save_checkpoint(const DeepSetPotential& params, const KineticScale& kinetic,
                     const AdamState* adam, const std::string& path) {
    std::vector<io::NamedTensor> tensors;
    append_mlp_tensors("phi", params.phi, tensors);
    append_mlp_tensors("psi", params.psi, tensors);
    tensors.push_back({"log_a", {1}, {kinetic.log_a}});
    if (adam) {
        tensors.push_back(tensor_from_vector("adam.m", adam->m));
        tensors.push_back(tensor_from_vector("adam.v", adam->v));
        tensors.push_back({"adam.step", {1}, {static_cast<double>(adam->step)}});
    }
    io::write_tensor_file(path, tensors);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelDims>& expect) {
    const auto tensors = io::read_tensor_file(path);
    std::map<std::string, const io::NamedTensor*> by_name;
    for (const auto& t : tensors) by_name[t.name] = &t;

    Checkpoint ckpt;
    ckpt.params.phi = mlp_from_tensors("phi", by_name);
    ckpt.params.psi = mlp_from_tensors("psi", by_name);
    ckpt.params.validate();

    const auto& log_a = find_tensor(by_name, "log_a");
    if (log_a.data.size() != 1) throw std::runtime_error("corrupt checkpoint: log_a must hold one value");
    ckpt.kinetic.log_a = log_a.data[0];

    if (expect) {
        const auto check = [](const std::string& what, int got, int want) {
            if (got != want)
                throw std::runtime_error("checkpoint architecture mismatch: " + what + " is " +
                                         std::to_string(got) + ", expected " + std::to_string(want));
        };
        check("phi hidden width", static_cast<int>(ckpt.params.phi.layers[0].W.rows()), expect->phi_hidden);
        check("phi output dim", ckpt.params.phi.output_dim(), expect->phi_out);
        check("psi hidden width", static_cast<int>(ckpt.params.psi.layers[0].W.rows()), expect->psi_hidden);
    }

    if (by_name.count("adam.m")) {
        AdamState adam;
        const auto& m = find_tensor(by_name, "adam.m");
        const auto& v = find_tensor(by_name, "adam.v");
        const auto& step = find_tensor(by_name, "adam.step");
        adam.m = Eigen::Map<const Eigen::VectorXd>(m.data.data(), static_cast<Eigen::Index>(m.data.size()));
        adam.v = Eigen::Map<const Eigen::VectorXd>(v.data.data(), static_cast<Eigen::Index>(v.data.size()));
        if (step.data.size() != 1) throw std::runtime_error("corrupt checkpoint: adam.step must hold one value");
        adam.step = static_cast<long>(step.data[0]);
        const auto n = static_cast<Eigen::Index>(ckpt.params.param_count()) + 1;
        if (adam.m.size() != n || adam.v.size() != n)
            throw std::runtime_error("corrupt checkpoint: adam moment size does not match parameters");
        ckpt.adam = std::move(adam);
    }
    return ckpt;
}

}  // namespace pnhf
