#include "pnhf/flow.hpp"

#include <cmath>

namespace pnhf {

namespace {

struct StepResult {
    ParticleSystem state;
    std::vector<double> grad_begin;
    std::vector<double> grad_end;
};

StepResult leapfrog_step_traced(const ParticleSystem& state, const DeepSetPotential& params,
                                const KineticScale& kinetic, double dt) {
    const double a2 = kinetic.a() * kinetic.a();
    StepResult r;
    r.state = state;

    r.grad_begin = deepset_grad_q(r.state.q, params);
    for (std::size_t j = 0; j < r.state.size(); ++j) r.state.p[j] -= 0.5 * dt * r.grad_begin[j];
    for (std::size_t j = 0; j < r.state.size(); ++j) r.state.q[j] += dt * a2 * r.state.p[j];
    r.grad_end = deepset_grad_q(r.state.q, params);
    for (std::size_t j = 0; j < r.state.size(); ++j) r.state.p[j] -= 0.5 * dt * r.grad_end[j];
    return r;
}

FlowTrajectory integrate(const ParticleSystem& start, const DeepSetPotential& params,
                         const KineticScale& kinetic, int steps, double dt) {
    if (steps < 1) throw std::invalid_argument("flow steps must be >= 1");
    require_valid_state(start);
    params.validate();

    FlowTrajectory traj;
    traj.states.reserve(steps + 1);
    traj.states.push_back(start);
    for (int i = 0; i < steps; ++i) {
        StepResult r = leapfrog_step_traced(traj.states.back(), params, kinetic, dt);
        if (!all_finite(r.state.q) || !all_finite(r.state.p))
            throw FlowDivergedError(i, "diverged at step " + std::to_string(i));
        traj.kick_grad_begin.push_back(std::move(r.grad_begin));
        traj.kick_grad_end.push_back(std::move(r.grad_end));
        traj.states.push_back(std::move(r.state));
    }
    return traj;
}

}  // namespace

ParticleSystem leapfrog_step(const ParticleSystem& state, const DeepSetPotential& params,
                             const KineticScale& kinetic, double dt) {
    require_valid_state(state);
    StepResult r = leapfrog_step_traced(state, params, kinetic, dt);
    if (!all_finite(r.state.q) || !all_finite(r.state.p)) throw FlowDivergedError(0, "diverged");
    return r.state;
}

FlowTrajectory flow_forward(const ParticleSystem& initial_state, const DeepSetPotential& params,
                            const KineticScale& kinetic, const FlowConfig& cfg) {
    return integrate(initial_state, params, kinetic, cfg.steps, cfg.dt);
}

FlowTrajectory flow_inverse(const ParticleSystem& final_state, const DeepSetPotential& params,
                            const KineticScale& kinetic, const FlowConfig& cfg) {
    return integrate(final_state, params, kinetic, cfg.steps, -cfg.dt);
}

std::pair<double, FlowTrajectory> nll_loss(const ParticleSystem& final_state, const GaussianInitSpec& spec,
                                           const DeepSetPotential& params, const KineticScale& kinetic,
                                           const FlowConfig& cfg) {
    FlowTrajectory traj = flow_inverse(final_state, params, kinetic, cfg);
    const double loss = -gaussian_log_density(traj.states.back(), spec);
    return {loss, std::move(traj)};
}

LossGrad nll_loss_grad(const ParticleSystem& final_state, const GaussianInitSpec& spec,
                       const DeepSetPotential& params, const KineticScale& kinetic, const FlowConfig& cfg) {
    const auto [loss, traj] = nll_loss(final_state, spec, params, kinetic, cfg);
    const std::size_t n = final_state.size();
    const double h = -cfg.dt;  // timestep the inverse trajectory was run with
    const double a2 = kinetic.a() * kinetic.a();

    LossGrad out;
    out.loss = loss;
    out.grads = ParamGradient::zeros_like(params);

    // seed: loss = -ln N(base | spec) at the reconstructed initial state
    const ParticleSystem& base = traj.states.back();
    std::vector<double> qbar(n), pbar(n);
    for (std::size_t j = 0; j < n; ++j) {
        qbar[j] = (base.q[j] - spec.mu_q) / (spec.sigma_q * spec.sigma_q);
        pbar[j] = (base.p[j] - spec.mu_p) / (spec.sigma_p * spec.sigma_p);
    }

    std::vector<double> u(n), p_half(n);
    for (int i = cfg.steps - 1; i >= 0; --i) {
        const ParticleSystem& before = traj.states[i];
        const ParticleSystem& after = traj.states[i + 1];
        // recompute the half-kick momentum exactly as the forward pass did
        for (std::size_t j = 0; j < n; ++j) p_half[j] = before.p[j] - 0.5 * h * traj.kick_grad_begin[i][j];

        // second kick: p' = p_half - (h/2) g(q'); backflow through g adds
        // -(h/2) H(q') pbar to the adjoint of q'
        for (std::size_t j = 0; j < n; ++j) u[j] = -0.5 * h * pbar[j];
        {
            GradPullback pb = deepset_grad_pullback(after.q, params, u);
            for (std::size_t j = 0; j < n; ++j) qbar[j] += pb.hq[j];
            out.grads.add_scaled(pb.hparams, 1.0);
        }

        // drift: q' = q + h a^2 p_half; log a gradient via d(a^2)/d(log a) = 2 a^2
        double qdotp = 0.0;
        for (std::size_t j = 0; j < n; ++j) qdotp += qbar[j] * p_half[j];
        out.grads.log_a += 2.0 * a2 * h * qdotp;
        for (std::size_t j = 0; j < n; ++j) pbar[j] += h * a2 * qbar[j];

        // first kick: p_half = p - (h/2) g(q)
        for (std::size_t j = 0; j < n; ++j) u[j] = -0.5 * h * pbar[j];
        {
            GradPullback pb = deepset_grad_pullback(before.q, params, u);
            for (std::size_t j = 0; j < n; ++j) qbar[j] += pb.hq[j];
            out.grads.add_scaled(pb.hparams, 1.0);
        }
    }
    return out;
}

double flow_energy(const ParticleSystem& state, const DeepSetPotential& params, const KineticScale& kinetic) {
    require_valid_state(state);
    double kinetic_term = 0.0;
    for (double pj : state.p) kinetic_term += pj * pj;
    const double a2 = kinetic.a() * kinetic.a();
    return deepset_value(state.q, params) + 0.5 * a2 * kinetic_term;
}

}  // namespace pnhf
