#pragma once

#define EIGEN_DONT_PARALLELIZE
#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "pnhf/core.hpp"

namespace pnhf {

// Overflow-safe softplus ln(1+e^x); softplus' = logistic, softplus'' =
// logistic*(1-logistic).
inline double softplus(double x) {
    if (x > 30.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline double logistic(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// One affine layer, optionally followed by Softplus. W is out x in.
struct Layer {
    Eigen::MatrixXd W;
    Eigen::VectorXd b;
    bool softplus_act = true;
};

struct Mlp {
    std::vector<Layer> layers;

    int input_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.front().W.cols()); }
    int output_dim() const { return layers.empty() ? 0 : static_cast<int>(layers.back().W.rows()); }
    std::size_t param_count() const;
    void validate() const;  // throws on broken dimension chain / non-finite weights
};

// Hidden layers get Softplus, the output layer is linear. Weights are
// N(0, 1/fan_in), biases zero.
Mlp make_mlp(Rng& rng, const std::vector<int>& dims);

// Gradient storage congruent with an Mlp.
struct MlpGrad {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    static MlpGrad zeros_like(const Mlp& mlp);
    void add_scaled(const MlpGrad& other, double scale);
};

// Caches for reverse mode through a column-batched forward pass.
struct MlpBatchCache {
    std::vector<Eigen::MatrixXd> act;  // act[0] = input, act[l+1] = layer l output
    std::vector<Eigen::MatrixXd> pre;  // pre[l] = layer l pre-activation
};

// X has one column per batch element. `cache` may be null when only the
// value is needed.
Eigen::MatrixXd mlp_forward_batch(const Mlp& mlp, const Eigen::MatrixXd& X, MlpBatchCache* cache);

// Given dL/dY, returns dL/dX; accumulates parameter gradients when
// `grad` is non-null.
Eigen::MatrixXd mlp_backward_batch(const Mlp& mlp, const MlpBatchCache& cache,
                                   const Eigen::MatrixXd& Ybar, MlpGrad* grad);

// Primal + tangent (dual number) pass, needed for exact second-order
// pullbacks: reverse mode over this program yields Hessian-vector products.
struct MlpDualCache {
    std::vector<Eigen::MatrixXd> act, act_dot;
    std::vector<Eigen::MatrixXd> pre, pre_dot;
};

Eigen::MatrixXd mlp_forward_dual(const Mlp& mlp, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Xdot,
                                 MlpDualCache& cache, Eigen::MatrixXd& Ydot);

// Adjoint of the dual program. Returns (Xbar, Xdot_bar); parameter adjoints
// accumulate into `grad` when non-null.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd> mlp_backward_dual(const Mlp& mlp, const MlpDualCache& cache,
                                                              const Eigen::MatrixXd& Ybar,
                                                              const Eigen::MatrixXd& Ybar_dot,
                                                              MlpGrad* grad);

// Permutation- and translation-invariant potential V(q) = psi(sum_j
// phi(q_j - mean(q))). phi maps a single centered coordinate to a feature
// vector, psi maps the pooled features to a scalar.
struct DeepSetPotential {
    Mlp phi;
    Mlp psi;

    std::size_t param_count() const { return phi.param_count() + psi.param_count(); }
    void validate() const;
};

// Learnable kinetic scale, stored as log a to keep a > 0.
struct KineticScale {
    double log_a = 0.0;

    double a() const { return std::exp(log_a); }
    static KineticScale from_a(double a) { return {std::log(a)}; }
};

// Gradient congruent with (DeepSetPotential, KineticScale).
struct ParamGradient {
    MlpGrad phi, psi;
    double log_a = 0.0;

    static ParamGradient zeros_like(const DeepSetPotential& params);
    void add_scaled(const ParamGradient& other, double scale);
};

// V(q). Coordinates are centered by their mean and reduced in sorted order,
// so permuting the input reproduces the value bit for bit.
double deepset_value(std::span<const double> q, const DeepSetPotential& params);

// grad_q V(q), exact reverse mode including the centering Jacobian
// (I - ones/N). Components always sum to zero.
std::vector<double> deepset_grad_q(std::span<const double> q, const DeepSetPotential& params);

struct GradPullback {
    std::vector<double> hq;  // H(q) * u, the Hessian-vector product
    ParamGradient hparams;   // (d grad_q V / d theta)^T u; log_a stays 0
};

// Exact pullback of grad_q V: reverse mode over the forward-mode directional
// derivative u^T grad_q V (no finite differences anywhere).
GradPullback deepset_grad_pullback(std::span<const double> q, const DeepSetPotential& params,
                                   std::span<const double> u);

// phi: 1 -> phi_hidden -> phi_out, psi: phi_out -> psi_hidden -> 1.
// Defaults follow the reference experiment (~130k parameters with the
// kinetic scale included).
DeepSetPotential init_params(Rng& rng, int phi_hidden = 256, int phi_out = 250, int psi_hidden = 256);

// Flat parameter vector for the optimizer: phi layers (W column-major, then
// b) in order, psi layers, then log_a.
Eigen::VectorXd flatten(const DeepSetPotential& params, const KineticScale& kinetic);
void unflatten(const Eigen::VectorXd& v, DeepSetPotential& params, KineticScale& kinetic);
Eigen::VectorXd flatten_grad(const ParamGradient& grad);

Eigen::VectorXd flatten_mlp(const Mlp& mlp);
void unflatten_mlp(const Eigen::VectorXd& v, Mlp& mlp);
Eigen::VectorXd flatten_mlp_grad(const MlpGrad& grad);

}  // namespace pnhf
