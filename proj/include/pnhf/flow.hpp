#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "pnhf/core.hpp"
#include "pnhf/nn.hpp"

namespace pnhf {

struct FlowConfig {
    int steps = 25;
    double dt = 0.04;
};

// Every intermediate leapfrog state plus the two potential gradients used by
// the half-kicks of each step. Kept so the adjoint pass pairs bit-exactly
// with the forward integration.
struct FlowTrajectory {
    std::vector<ParticleSystem> states;                 // size steps + 1
    std::vector<std::vector<double>> kick_grad_begin;   // grad V at states[i].q
    std::vector<std::vector<double>> kick_grad_end;     // grad V at states[i+1].q
};

// Raised when an integration produces a non-finite coordinate.
class FlowDivergedError : public std::runtime_error {
  public:
    FlowDivergedError(int step, const std::string& what) : std::runtime_error(what), step_(step) {}
    int step() const { return step_; }

  private:
    int step_;
};

// One kick-drift-kick step of the learned Hamiltonian
// H = V(q) + (a^2/2) sum p^2:
//   p -= (dt/2) grad V(q); q += dt a^2 p; p -= (dt/2) grad V(q).
// No positional wrapping: the potential lives on the whole line.
ParticleSystem leapfrog_step(const ParticleSystem& state, const DeepSetPotential& params,
                             const KineticScale& kinetic, double dt);

// cfg.steps leapfrog steps with +dt from the initial state.
FlowTrajectory flow_forward(const ParticleSystem& initial_state, const DeepSetPotential& params,
                            const KineticScale& kinetic, const FlowConfig& cfg);

// cfg.steps leapfrog steps with -dt from the final state; states.back() is
// the reconstructed initial state.
FlowTrajectory flow_inverse(const ParticleSystem& final_state, const DeepSetPotential& params,
                            const KineticScale& kinetic, const FlowConfig& cfg);

// Exact pull-back negative log-likelihood: integrate the final state
// backward and evaluate the Gaussian base density there. The flow is
// volume-preserving, so there is no Jacobian term.
std::pair<double, FlowTrajectory> nll_loss(const ParticleSystem& final_state, const GaussianInitSpec& spec,
                                           const DeepSetPotential& params, const KineticScale& kinetic,
                                           const FlowConfig& cfg);

struct LossGrad {
    double loss = 0.0;
    ParamGradient grads;  // d loss / d(theta, log a)
};

// Adjoint (reverse) differentiation of nll_loss through the stored
// trajectory. Kicks consume deepset_grad_pullback; drifts accumulate the
// kinetic-scale gradient.
LossGrad nll_loss_grad(const ParticleSystem& final_state, const GaussianInitSpec& spec,
                       const DeepSetPotential& params, const KineticScale& kinetic, const FlowConfig& cfg);

// Learned Hamiltonian V(q) + (a^2/2) sum p^2, used by conservation tests.
double flow_energy(const ParticleSystem& state, const DeepSetPotential& params, const KineticScale& kinetic);

}  // namespace pnhf
