#pragma once

#include <complex>
#include <vector>

#include "pnhf/core.hpp"

namespace pnhf {

// Periodic 1D grid. dx is derived so it can never disagree with the fields.
struct GridSpec {
    int cells = 128;           // power of two >= 2
    double box_length = 128.0;

    double dx() const { return box_length / cells; }
};

struct PhysicsParams {
    double charge = 0.1;  // per-particle charge c_p
    double eps0 = 1.0;
    double dt = 0.04;
};

// Scalar field sampled at the grid points (density rho_i or force F_i).
struct GridField {
    std::vector<double> values;
};

// Unnormalized forward DFT, X_k = sum_n x_n exp(-2*pi*i*k*n/N).
// Inverse applies the +i kernel and 1/N, so fft_inverse(fft_forward(v)) == v.
// Length must be a power of two (radix-2).
std::vector<std::complex<double>> fft_forward(std::span<const double> values);
std::vector<std::complex<double>> fft_inverse_complex(std::span<const std::complex<double>> spectrum);
std::vector<double> fft_inverse(std::span<const std::complex<double>> spectrum);

// Cloud-In-Cell deposit: with i = floor(q/dx) and delta = q/dx - i,
//   rho_i      += (c_p/dx) * (1 - delta)
//   rho_{i+1}  += (c_p/dx) * delta        (periodic wrap)
// Positions are wrapped into [0, box_length) internally.
GridField cic_deposit(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys);

// Grid-to-particle interpolation with the same kernel as the deposit
// (matched kernels conserve total momentum with the spectral solve below).
std::vector<double> cic_gather(const ParticleSystem& state, const GridField& force, const GridSpec& grid);

// Spectral Poisson solve on the periodic grid. With k = 2*pi*m/box_length,
// m in {-cells/2, ..., cells/2 - 1}:
//   F_hat_k = -i rho_hat_k / (eps0 * k)   for k != 0
//   F_hat_0 = 0 (neutralizing background), Nyquist mode zeroed.
GridField solve_force(const GridField& density, const GridSpec& grid, const PhysicsParams& phys);

// Potential counterpart, V_hat_k = rho_hat_k / (eps0 k^2), zero mode and
// Nyquist dropped. Used by the energy diagnostic.
GridField solve_potential(const GridField& density, const GridSpec& grid, const PhysicsParams& phys);

// One kick-drift-kick leapfrog step: half-kick with the self-consistent
// force at the current positions, drift q += dt*p wrapped mod box_length,
// half-kick with the force recomputed at the new positions. Unit mass; the
// gathered force includes each particle's own deposited contribution.
// `wrap_events`, when given, counts drift crossings of the periodic box.
ParticleSystem pic_step(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys,
                        long* wrap_events = nullptr);

struct SimulateStats {
    long wrap_events = 0;
};

// Samples the initial state from `spec`, runs `steps` leapfrog steps and
// records the state every `snapshot_stride` steps (including t=0);
// times[i] = i * snapshot_stride * dt. snapshot_stride must divide steps.
SnapshotSeries simulate(const GaussianInitSpec& spec, std::size_t n_particles, int steps,
                        const GridSpec& grid, const PhysicsParams& phys, int snapshot_stride,
                        Rng& rng, SimulateStats* stats = nullptr);

// H = sum_j p_j^2 / 2 + (1/2) sum_i rho_i V_i dx. Diagnostic only.
double total_energy(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys);

}  // namespace pnhf
