#include "pnhf/nn.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>

namespace pnhf {

namespace {

Eigen::MatrixXd softplus_mat(const Eigen::MatrixXd& z) {
    return z.unaryExpr([](double x) { return softplus(x); });
}

Eigen::MatrixXd logistic_mat(const Eigen::MatrixXd& z) {
    return z.unaryExpr([](double x) { return logistic(x); });
}

void require_finite_input(std::span<const double> q) {
    if (q.empty()) throw std::invalid_argument("invalid state");
    if (!all_finite(q)) throw std::invalid_argument("invalid state");
}

// Stable argsort by value; ties keep original order so equal coordinates
// stay interchangeable bit for bit.
std::vector<std::size_t> argsort(std::span<const double> q) {
    std::vector<std::size_t> idx(q.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });
    return idx;
}

// Centered coordinates in sorted order. The sequential mean over sorted
// values makes the whole evaluation independent of the input permutation.
struct SortedCentered {
    std::vector<std::size_t> perm;  // perm[j] = original index of sorted slot j
    Eigen::MatrixXd X0;             // 1 x N centered coordinates
};

SortedCentered center_sorted(std::span<const double> q) {
    SortedCentered sc;
    sc.perm = argsort(q);
    const std::size_t n = q.size();
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += q[sc.perm[j]];
    const double mean = sum / static_cast<double>(n);
    sc.X0.resize(1, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) sc.X0(0, static_cast<Eigen::Index>(j)) = q[sc.perm[j]] - mean;
    return sc;
}

}  // namespace

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += static_cast<std::size_t>(l.W.size()) + static_cast<std::size_t>(l.b.size());
    return n;
}

void Mlp::validate() const {
    if (layers.empty()) throw std::invalid_argument("mlp has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.W.rows() != layer.b.size())
            throw std::invalid_argument("mlp layer " + std::to_string(l) + " bias length mismatch");
        if (l > 0 && layers[l - 1].W.rows() != layer.W.cols())
            throw std::invalid_argument("mlp layer " + std::to_string(l) + " input dim mismatch");
        if (!layer.W.allFinite() || !layer.b.allFinite())
            throw std::invalid_argument("mlp layer " + std::to_string(l) + " has non-finite parameters");
    }
}

Mlp make_mlp(Rng& rng, const std::vector<int>& dims) {
    if (dims.size() < 2) throw std::invalid_argument("mlp needs at least input and output dims");
    Mlp mlp;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l];
        const int out = dims[l + 1];
        if (in < 1 || out < 1) throw std::invalid_argument("mlp dims must be >= 1");
        Layer layer;
        layer.W.resize(out, in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (int r = 0; r < out; ++r)
            for (int c = 0; c < in; ++c) layer.W(r, c) = rng.normal(0.0, scale);
        layer.b = Eigen::VectorXd::Zero(out);
        layer.softplus_act = (l + 2 < dims.size());  // linear output layer
        mlp.layers.push_back(std::move(layer));
    }
    return mlp;
}

MlpGrad MlpGrad::zeros_like(const Mlp& mlp) {
    MlpGrad g;
    for (const auto& l : mlp.layers) {
        g.W.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
        g.b.push_back(Eigen::VectorXd::Zero(l.b.size()));
    }
    return g;
}

void MlpGrad::add_scaled(const MlpGrad& other, double scale) {
    for (std::size_t l = 0; l < W.size(); ++l) {
        W[l] += scale * other.W[l];
        b[l] += scale * other.b[l];
    }
}

Eigen::MatrixXd mlp_forward_batch(const Mlp& mlp, const Eigen::MatrixXd& X, MlpBatchCache* cache) {
    Eigen::MatrixXd cur = X;
    if (cache) {
        cache->act.clear();
        cache->pre.clear();
        cache->act.push_back(cur);
    }
    for (const auto& layer : mlp.layers) {
        Eigen::MatrixXd z = (layer.W * cur).colwise() + layer.b;
        Eigen::MatrixXd a = layer.softplus_act ? softplus_mat(z) : z;
        if (cache) {
            cache->pre.push_back(std::move(z));
            cache->act.push_back(a);
        }
        cur = std::move(a);
    }
    return cur;
}

Eigen::MatrixXd mlp_backward_batch(const Mlp& mlp, const MlpBatchCache& cache,
                                   const Eigen::MatrixXd& Ybar, MlpGrad* grad) {
    Eigen::MatrixXd abar = Ybar;
    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        const auto& layer = mlp.layers[l];
        Eigen::MatrixXd zbar =
            layer.softplus_act ? abar.cwiseProduct(logistic_mat(cache.pre[l])).eval() : std::move(abar);
        if (grad) {
            grad->W[l] += zbar * cache.act[l].transpose();
            grad->b[l] += zbar.rowwise().sum();
        }
        abar = layer.W.transpose() * zbar;
    }
    return abar;
}

Eigen::MatrixXd mlp_forward_dual(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xdot,
                                 MlpDualCache& cache, Eigen::MatrixXd& Ydot) {
    Eigen::MatrixXd cur = X;
    Eigen::MatrixXd cur_dot = Xdot;
    cache.act.assign(1, cur);
    cache.act_dot.assign(1, cur_dot);
    cache.pre.clear();
    cache.pre_dot.clear();
    for (const auto& layer : mlp.layers) {
        Eigen::MatrixXd z = (layer.W * cur).colwise() + layer.b;
        Eigen::MatrixXd zdot = layer.W * cur_dot;
        Eigen::MatrixXd a, adot;
        if (layer.softplus_act) {
            a = softplus_mat(z);
            adot = logistic_mat(z).cwiseProduct(zdot);
        } else {
            a = z;
            adot = zdot;
        }
        cache.pre.push_back(std::move(z));
        cache.pre_dot.push_back(std::move(zdot));
        cache.act.push_back(a);
        cache.act_dot.push_back(adot);
        cur = std::move(a);
        cur_dot = std::move(adot);
    }
    Ydot = cur_dot;
    return cur;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd> mlp_backward_dual(const Mlp& mlp, const MlpDualCache& cache,
                                                              const Eigen::MatrixXd& Ybar,
                                                              const Eigen::MatrixXd& Ybar_dot,
                                                              MlpGrad* grad) {
    Eigen::MatrixXd abar = Ybar;
    Eigen::MatrixXd abar_dot = Ybar_dot;
    for (std::size_t l = mlp.layers.size(); l-- > 0;) {
        const auto& layer = mlp.layers[l];
        Eigen::MatrixXd zbar, zbar_dot;
        if (layer.softplus_act) {
            const Eigen::MatrixXd sig = logistic_mat(cache.pre[l]);
            const Eigen::MatrixXd sigp = sig.cwiseProduct(Eigen::MatrixXd::Ones(sig.rows(), sig.cols()) - sig);
            // a = softplus(z), adot = sig(z).*zdot:
            //   dS/dz gets sig from the primal branch and sig'.*zdot from
            //   the tangent branch; dS/dzdot only sees sig.
            zbar = abar.cwiseProduct(sig) + abar_dot.cwiseProduct(sigp).cwiseProduct(cache.pre_dot[l]);
            zbar_dot = abar_dot.cwiseProduct(sig);
        } else {
            zbar = std::move(abar);
            zbar_dot = std::move(abar_dot);
        }
        if (grad) {
            grad->W[l] += zbar * cache.act[l].transpose() + zbar_dot * cache.act_dot[l].transpose();
            grad->b[l] += zbar.rowwise().sum();
        }
        abar = layer.W.transpose() * zbar;
        abar_dot = layer.W.transpose() * zbar_dot;
    }
    return {std::move(abar), std::move(abar_dot)};
}

void DeepSetPotential::validate() const {
    phi.validate();
    psi.validate();
    if (phi.input_dim() != 1) throw std::invalid_argument("phi input dim must be 1");
    if (psi.output_dim() != 1) throw std::invalid_argument("psi output dim must be 1");
    if (phi.output_dim() != psi.input_dim())
        throw std::invalid_argument("phi output dim must equal psi input dim");
}

ParamGradient ParamGradient::zeros_like(const DeepSetPotential& params) {
    return {MlpGrad::zeros_like(params.phi), MlpGrad::zeros_like(params.psi), 0.0};
}

void ParamGradient::add_scaled(const ParamGradient& other, double scale) {
    phi.add_scaled(other.phi, scale);
    psi.add_scaled(other.psi, scale);
    log_a += scale * other.log_a;
}

double deepset_value(std::span<const double> q, const DeepSetPotential& params) {
    require_finite_input(q);
    const auto sc = center_sorted(q);
    const Eigen::MatrixXd features = mlp_forward_batch(params.phi, sc.X0, nullptr);
    const Eigen::MatrixXd pooled = features.rowwise().sum();
    const Eigen::MatrixXd v = mlp_forward_batch(params.psi, pooled, nullptr);
    return v(0, 0);
}

std::vector<double> deepset_grad_q(std::span<const double> q, const DeepSetPotential& params) {
    require_finite_input(q);
    const auto sc = center_sorted(q);
    const std::size_t n = q.size();

    MlpBatchCache phi_cache, psi_cache;
    const Eigen::MatrixXd features = mlp_forward_batch(params.phi, sc.X0, &phi_cache);
    const Eigen::MatrixXd pooled = features.rowwise().sum();
    mlp_forward_batch(params.psi, pooled, &psi_cache);

    // r = dV/ds, broadcast to every particle through the sum node
    const Eigen::MatrixXd r = mlp_backward_batch(params.psi, psi_cache, Eigen::MatrixXd::Ones(1, 1), nullptr);
    const Eigen::MatrixXd gtilde =
        mlp_backward_batch(params.phi, phi_cache, r.replicate(1, static_cast<Eigen::Index>(n)), nullptr);

    // centering Jacobian (I - ones/N): subtract the mean of the raw gradient
    double gsum = 0.0;
    for (std::size_t j = 0; j < n; ++j) gsum += gtilde(0, static_cast<Eigen::Index>(j));
    const double gmean = gsum / static_cast<double>(n);

    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[sc.perm[j]] = gtilde(0, static_cast<Eigen::Index>(j)) - gmean;
    return out;
}

GradPullback deepset_grad_pullback(std::span<const double> q, const DeepSetPotential& params,
                                   std::span<const double> u) {
    require_finite_input(q);
    if (u.size() != q.size()) throw std::invalid_argument("direction length mismatch");
    if (!all_finite(u)) throw std::invalid_argument("non-finite direction");
    const std::size_t n = q.size();

    // Forward-mode directional derivative S = u^T grad_q V computed as the
    // tangent of V along u; reverse mode over that program then yields
    // dS/dq = H u and dS/dtheta = (d grad_q V / d theta)^T u exactly.
    const auto sc = center_sorted(q);
    double usum = 0.0;
    for (std::size_t j = 0; j < n; ++j) usum += u[sc.perm[j]];
    const double umean = usum / static_cast<double>(n);
    Eigen::MatrixXd X0dot(1, static_cast<Eigen::Index>(n));
    for (std::size_t j = 0; j < n; ++j) X0dot(0, static_cast<Eigen::Index>(j)) = u[sc.perm[j]] - umean;

    MlpDualCache phi_cache, psi_cache;
    Eigen::MatrixXd features_dot;
    const Eigen::MatrixXd features = mlp_forward_dual(params.phi, sc.X0, X0dot, phi_cache, features_dot);
    const Eigen::MatrixXd pooled = features.rowwise().sum();
    const Eigen::MatrixXd pooled_dot = features_dot.rowwise().sum();
    Eigen::MatrixXd vdot;
    mlp_forward_dual(params.psi, pooled, pooled_dot, psi_cache, vdot);

    GradPullback result;
    result.hparams = ParamGradient::zeros_like(params);

    // seed: S = Vdot, so Vbar = 0 and Vdot_bar = 1
    const auto [pooled_bar, pooled_dot_bar] = mlp_backward_dual(
        params.psi, psi_cache, Eigen::MatrixXd::Zero(1, 1), Eigen::MatrixXd::Ones(1, 1), &result.hparams.psi);
    const auto [x0_bar, x0_dot_bar] =
        mlp_backward_dual(params.phi, phi_cache, pooled_bar.replicate(1, static_cast<Eigen::Index>(n)),
                          pooled_dot_bar.replicate(1, static_cast<Eigen::Index>(n)), &result.hparams.phi);
    (void)x0_dot_bar;  // X0dot depends on u only, not on q

    double xbar_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) xbar_sum += x0_bar(0, static_cast<Eigen::Index>(j));
    const double xbar_mean = xbar_sum / static_cast<double>(n);

    result.hq.resize(n);
    for (std::size_t j = 0; j < n; ++j)
        result.hq[sc.perm[j]] = x0_bar(0, static_cast<Eigen::Index>(j)) - xbar_mean;
    return result;
}

DeepSetPotential init_params(Rng& rng, int phi_hidden, int phi_out, int psi_hidden) {
    DeepSetPotential params;
    params.phi = make_mlp(rng, {1, phi_hidden, phi_out});
    params.psi = make_mlp(rng, {phi_out, psi_hidden, 1});
    params.validate();
    return params;
}

namespace {

void copy_mlp_into(const Mlp& mlp, Eigen::VectorXd& v, Eigen::Index& offset) {
    for (const auto& l : mlp.layers) {
        std::copy(l.W.data(), l.W.data() + l.W.size(), v.data() + offset);
        offset += l.W.size();
        std::copy(l.b.data(), l.b.data() + l.b.size(), v.data() + offset);
        offset += l.b.size();
    }
}

void copy_mlp_from(const Eigen::VectorXd& v, Mlp& mlp, Eigen::Index& offset) {
    for (auto& l : mlp.layers) {
        std::copy(v.data() + offset, v.data() + offset + l.W.size(), l.W.data());
        offset += l.W.size();
        std::copy(v.data() + offset, v.data() + offset + l.b.size(), l.b.data());
        offset += l.b.size();
    }
}

void copy_grad_into(const MlpGrad& g, Eigen::VectorXd& v, Eigen::Index& offset) {
    for (std::size_t l = 0; l < g.W.size(); ++l) {
        std::copy(g.W[l].data(), g.W[l].data() + g.W[l].size(), v.data() + offset);
        offset += g.W[l].size();
        std::copy(g.b[l].data(), g.b[l].data() + g.b[l].size(), v.data() + offset);
        offset += g.b[l].size();
    }
}

}  // namespace

Eigen::VectorXd flatten(const DeepSetPotential& params, const KineticScale& kinetic) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(params.param_count()) + 1);
    Eigen::Index offset = 0;
    copy_mlp_into(params.phi, v, offset);
    copy_mlp_into(params.psi, v, offset);
    v(offset) = kinetic.log_a;
    return v;
}

void unflatten(const Eigen::VectorXd& v, DeepSetPotential& params, KineticScale& kinetic) {
    if (v.size() != static_cast<Eigen::Index>(params.param_count()) + 1)
        throw std::invalid_argument("flat parameter vector size mismatch");
    Eigen::Index offset = 0;
    copy_mlp_from(v, params.phi, offset);
    copy_mlp_from(v, params.psi, offset);
    kinetic.log_a = v(offset);
}

Eigen::VectorXd flatten_grad(const ParamGradient& grad) {
    Eigen::Index total = 1;
    for (const auto& w : grad.phi.W) total += w.size();
    for (const auto& b : grad.phi.b) total += b.size();
    for (const auto& w : grad.psi.W) total += w.size();
    for (const auto& b : grad.psi.b) total += b.size();
    Eigen::VectorXd v(total);
    Eigen::Index offset = 0;
    copy_grad_into(grad.phi, v, offset);
    copy_grad_into(grad.psi, v, offset);
    v(offset) = grad.log_a;
    return v;
}

Eigen::VectorXd flatten_mlp(const Mlp& mlp) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(mlp.param_count()));
    Eigen::Index offset = 0;
    copy_mlp_into(mlp, v, offset);
    return v;
}

void unflatten_mlp(const Eigen::VectorXd& v, Mlp& mlp) {
    if (v.size() != static_cast<Eigen::Index>(mlp.param_count()))
        throw std::invalid_argument("flat parameter vector size mismatch");
    Eigen::Index offset = 0;
    copy_mlp_from(v, mlp, offset);
}

Eigen::VectorXd flatten_mlp_grad(const MlpGrad& grad) {
    Eigen::Index total = 0;
    for (const auto& w : grad.W) total += w.size();
    for (const auto& b : grad.b) total += b.size();
    Eigen::VectorXd v(total);
    Eigen::Index offset = 0;
    copy_grad_into(grad, v, offset);
    return v;
}

}  // namespace pnhf
