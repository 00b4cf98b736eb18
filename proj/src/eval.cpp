#include "pnhf/eval.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "pnhf/io.hpp"
#include "pnhf/train.hpp"

namespace pnhf {

double wasserstein1(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("wasserstein1: length mismatch");
    if (a.empty()) throw std::invalid_argument("wasserstein1: empty input");
    std::vector<double> sa(a.begin(), a.end());
    std::vector<double> sb(b.begin(), b.end());
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());
    double sum = 0.0;
    for (std::size_t j = 0; j < sa.size(); ++j) sum += std::abs(sb[j] - sa[j]);
    return sum / static_cast<double>(sa.size());
}

namespace {

constexpr double kTimeTol = 1e-9;

// Maps a requested time onto the flow's step grid, or reports the two
// nearest representable times.
int resolve_flow_index(double t, const FlowConfig& cfg) {
    const double raw = t / cfg.dt;
    const long k = std::lround(raw);
    if (k >= 0 && k <= cfg.steps && std::abs(k * cfg.dt - t) <= kTimeTol) return static_cast<int>(k);
    const double lo = std::floor(raw) * cfg.dt;
    const double hi = std::ceil(raw) * cfg.dt;
    throw std::invalid_argument("requested time " + io::format_double(t) +
                                " is not on the step grid (dt=" + io::format_double(cfg.dt) +
                                ", steps=" + std::to_string(cfg.steps) + "); nearest representable times are " +
                                io::format_double(lo) + " and " + io::format_double(hi));
}

std::size_t find_snapshot_index(const SnapshotSeries& series, double t) {
    for (std::size_t s = 0; s < series.times.size(); ++s)
        if (std::abs(series.times[s] - t) <= kTimeTol) return s;
    std::string available;
    for (std::size_t s = 0; s < series.times.size(); ++s) {
        if (s) available += ", ";
        available += io::format_double(series.times[s]);
    }
    throw std::invalid_argument("no ground-truth snapshot at time " + io::format_double(t) +
                                "; available times: " + available);
}

std::vector<double> sorted_copy(const std::vector<double>& v) {
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    return s;
}

}  // namespace

EvalReport evaluate_flow(const DeepSetPotential& params, const KineticScale& kinetic,
                         const std::vector<SnapshotSeries>& test_set, const FlowConfig& cfg,
                         std::span<const double> times, std::uint64_t eval_seed,
                         const std::string& model_id) {
    if (test_set.empty()) throw std::invalid_argument("test set is empty");
    if (times.empty()) throw std::invalid_argument("no evaluation times given");

    std::vector<int> flow_idx;
    for (double t : times) flow_idx.push_back(resolve_flow_index(t, cfg));

    EvalReport report;
    report.times.assign(times.begin(), times.end());
    report.w1_q.assign(times.size(), 0.0);
    report.w1_p.assign(times.size(), 0.0);
    report.n_examples = static_cast<int>(test_set.size());
    report.steps = cfg.steps;
    report.dt = cfg.dt;
    report.model_id = model_id;

    for (std::size_t i = 0; i < test_set.size(); ++i) {
        const auto& ex = test_set[i];
        Rng rng(Rng::derive(eval_seed, i));
        const ParticleSystem initial = sample_initial(ex.spec, ex.states.front().size(), rng);
        const FlowTrajectory traj = flow_forward(initial, params, kinetic, cfg);
        for (std::size_t ti = 0; ti < report.times.size(); ++ti) {
            const auto& truth = ex.states[find_snapshot_index(ex, report.times[ti])];
            const auto& model_state = traj.states[static_cast<std::size_t>(flow_idx[ti])];
            report.w1_q[ti] += wasserstein1(model_state.q, truth.q);
            report.w1_p[ti] += wasserstein1(model_state.p, truth.p);
        }
    }
    for (std::size_t ti = 0; ti < report.times.size(); ++ti) {
        report.w1_q[ti] /= report.n_examples;
        report.w1_p[ti] /= report.n_examples;
    }
    return report;
}

BaselineModel init_baseline(Rng& rng, std::size_t n_particles, int hidden1, int hidden2) {
    const int n = static_cast<int>(n_particles);
    BaselineModel model;
    model.mlp_q = make_mlp(rng, {2 * n, hidden1, hidden2, n});
    model.mlp_p = make_mlp(rng, {2 * n, hidden1, hidden2, n});
    return model;
}

namespace {

struct BaselineData {
    Eigen::MatrixXd X;   // 2N x M sorted initial phase-space coordinates
    Eigen::MatrixXd Yq;  // N x M sorted final positions
    Eigen::MatrixXd Yp;  // N x M sorted final momenta
};

BaselineData baseline_data(const std::vector<SnapshotSeries>& dataset) {
    if (dataset.empty()) throw std::invalid_argument("dataset is empty");
    const std::size_t n = dataset.front().states.front().size();
    const std::size_t m = dataset.size();
    BaselineData d;
    d.X.resize(2 * n, m);
    d.Yq.resize(n, m);
    d.Yp.resize(n, m);
    for (std::size_t i = 0; i < m; ++i) {
        const auto& ex = dataset[i];
        const auto q0 = sorted_copy(ex.states.front().q);
        const auto p0 = sorted_copy(ex.states.front().p);
        const auto qT = sorted_copy(ex.states.back().q);
        const auto pT = sorted_copy(ex.states.back().p);
        for (std::size_t j = 0; j < n; ++j) {
            d.X(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = q0[j];
            d.X(static_cast<Eigen::Index>(n + j), static_cast<Eigen::Index>(i)) = p0[j];
            d.Yq(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = qT[j];
            d.Yp(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = pT[j];
        }
    }
    return d;
}

// One Adam pass of MSE regression for a single net.
void baseline_train_net(Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                        const BaselineConfig& cfg, Rng& rng) {
    TrainConfig adam_cfg;
    adam_cfg.learning_rate = cfg.learning_rate;
    adam_cfg.beta1 = cfg.beta1;
    adam_cfg.beta2 = cfg.beta2;
    adam_cfg.epsilon = cfg.epsilon;

    Eigen::VectorXd flat = flatten_mlp(mlp);
    AdamState adam = AdamState::zeros(flat.size());
    const Eigen::Index m = X.cols();
    const Eigen::Index n_out = Y.rows();

    std::vector<Eigen::Index> order(static_cast<std::size_t>(m));
    std::iota(order.begin(), order.end(), 0);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.next_u64() % i)]);
        for (Eigen::Index begin = 0; begin < m; begin += cfg.batch_size) {
            const Eigen::Index bsz = std::min<Eigen::Index>(cfg.batch_size, m - begin);
            Eigen::MatrixXd Xb(X.rows(), bsz), Yb(n_out, bsz);
            for (Eigen::Index k = 0; k < bsz; ++k) {
                Xb.col(k) = X.col(order[static_cast<std::size_t>(begin + k)]);
                Yb.col(k) = Y.col(order[static_cast<std::size_t>(begin + k)]);
            }
            MlpBatchCache cache;
            const Eigen::MatrixXd Yhat = mlp_forward_batch(mlp, Xb, &cache);
            const Eigen::MatrixXd Ybar =
                2.0 * (Yhat - Yb) / static_cast<double>(n_out) / static_cast<double>(bsz);
            MlpGrad grad = MlpGrad::zeros_like(mlp);
            mlp_backward_batch(mlp, cache, Ybar, &grad);
            adam_step(flat, flatten_mlp_grad(grad), adam, adam_cfg);
            unflatten_mlp(flat, mlp);
        }
    }
}

}  // namespace

BaselineModel train_baseline(const std::vector<SnapshotSeries>& train_set, const BaselineConfig& cfg) {
    const BaselineData d = baseline_data(train_set);
    Rng rng(cfg.seed);
    BaselineModel model = init_baseline(rng, train_set.front().states.front().size(), cfg.hidden1, cfg.hidden2);
    Rng shuffle_q(Rng::derive(cfg.seed, 1));
    Rng shuffle_p(Rng::derive(cfg.seed, 2));
    baseline_train_net(model.mlp_q, d.X, d.Yq, cfg, shuffle_q);
    baseline_train_net(model.mlp_p, d.X, d.Yp, cfg, shuffle_p);
    return model;
}

EvalReport evaluate_baseline(const BaselineModel& model, const std::vector<SnapshotSeries>& test_set,
                             const std::string& model_id) {
    const BaselineData d = baseline_data(test_set);
    const Eigen::MatrixXd Pq = mlp_forward_batch(model.mlp_q, d.X, nullptr);
    const Eigen::MatrixXd Pp = mlp_forward_batch(model.mlp_p, d.X, nullptr);

    EvalReport report;
    report.times = {test_set.front().times.back()};
    report.w1_q = {0.0};
    report.w1_p = {0.0};
    report.n_examples = static_cast<int>(test_set.size());
    report.model_id = model_id;

    const auto n = d.Yq.rows();
    for (Eigen::Index i = 0; i < d.X.cols(); ++i) {
        report.w1_q[0] += wasserstein1(std::span<const double>(Pq.col(i).data(), n),
                                       std::span<const double>(d.Yq.col(i).data(), n));
        report.w1_p[0] += wasserstein1(std::span<const double>(Pp.col(i).data(), n),
                                       std::span<const double>(d.Yp.col(i).data(), n));
    }
    report.w1_q[0] /= report.n_examples;
    report.w1_p[0] /= report.n_examples;
    return report;
}

double baseline_mse(const BaselineModel& model, const std::vector<SnapshotSeries>& dataset) {
    const BaselineData d = baseline_data(dataset);
    const Eigen::MatrixXd Rq = mlp_forward_batch(model.mlp_q, d.X, nullptr) - d.Yq;
    const Eigen::MatrixXd Rp = mlp_forward_batch(model.mlp_p, d.X, nullptr) - d.Yp;
    const double n = static_cast<double>(d.Yq.rows());
    const double m = static_cast<double>(d.X.cols());
    return (Rq.squaredNorm() + Rp.squaredNorm()) / (2.0 * n * m);
}

void emit_histograms(const DeepSetPotential& params, const KineticScale& kinetic,
                     const SnapshotSeries& example, const FlowConfig& cfg, std::span<const double> times,
                     const std::string& path, std::uint64_t seed) {
    std::vector<int> flow_idx;
    for (double t : times) flow_idx.push_back(resolve_flow_index(t, cfg));

    Rng rng(seed);
    const ParticleSystem initial = sample_initial(example.spec, example.states.front().size(), rng);
    const FlowTrajectory traj = flow_forward(initial, params, kinetic, cfg);

    std::ostringstream out;
    out << "time,marginal,source,rank,value\n";
    const auto emit_group = [&](double t, const char* marginal, const char* source,
                                const std::vector<double>& values) {
        const auto sorted = sorted_copy(values);
        for (std::size_t r = 0; r < sorted.size(); ++r)
            out << io::format_double(t) << ',' << marginal << ',' << source << ',' << r << ','
                << io::format_double(sorted[r]) << '\n';
    };
    for (std::size_t ti = 0; ti < times.size(); ++ti) {
        const double t = times[ti];
        const auto& truth = example.states[find_snapshot_index(example, t)];
        const auto& model_state = traj.states[static_cast<std::size_t>(flow_idx[ti])];
        emit_group(t, "q", "truth", truth.q);
        emit_group(t, "q", "model", model_state.q);
        emit_group(t, "p", "truth", truth.p);
        emit_group(t, "p", "model", model_state.p);
    }
    io::atomic_write_text(path, out.str());
}

std::string eval_report_csv(const EvalReport& report) {
    std::ostringstream out;
    out << "time,w1_q,w1_p,n_examples,L,dt,model_id\n";
    for (std::size_t i = 0; i < report.times.size(); ++i) {
        out << io::format_double(report.times[i]) << ',' << io::format_double(report.w1_q[i]) << ','
            << io::format_double(report.w1_p[i]) << ',' << report.n_examples << ',' << report.steps << ','
            << io::format_double(report.dt) << ',' << report.model_id << '\n';
    }
    return out.str();
}

}  // namespace pnhf
