#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace pnhf {

// Positions and momenta of an N-particle system in 1D phase space. Both the
// simulator and the flow evolve values of this type.
struct ParticleSystem {
    std::vector<double> q;  // positions, grid units
    std::vector<double> p;  // momenta, grid units per time unit

    ParticleSystem() = default;
    ParticleSystem(std::vector<double> q_in, std::vector<double> p_in)
        : q(std::move(q_in)), p(std::move(p_in)) {}

    std::size_t size() const { return q.size(); }
};

// Parameters of the factorized Gaussian base distribution in phase space.
struct GaussianInitSpec {
    double mu_q = 64.0;
    double sigma_q = 1.0;
    double mu_p = 0.0;
    double sigma_p = 1.0;
};

// Phase-space states at a fixed ladder of times, plus the Gaussian the
// initial state was drawn from. The dataset example payload.
struct SnapshotSeries {
    std::vector<double> times;
    std::vector<ParticleSystem> states;
    GaussianInitSpec spec;
};

bool all_finite(std::span<const double> xs);

// True when q/p lengths match, N >= 1, and every entry is finite.
bool state_is_valid(const ParticleSystem& state);

// Throws std::invalid_argument("invalid state") / ("invalid spec").
void require_valid_state(const ParticleSystem& state);
void require_valid_spec(const GaussianInitSpec& spec);

// Deterministic pseudorandom stream. Uniforms take the top 53 bits of an
// mt19937_64 word; normals use the Box-Muller cosine branch, consuming
// exactly two uniforms per draw (the sine value is discarded so draws are
// position-independent). Identical seed => identical stream within a build.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }
    double uniform01();  // [0, 1)
    double normal(double mu, double sigma);

    // Derives an independent per-task seed from a master seed (splitmix64
    // finalizer). Parallel work must use one derived seed per example.
    static std::uint64_t derive(std::uint64_t master, std::uint64_t index);

  private:
    std::mt19937_64 gen_;
};

// ln of the factorized Gaussian density of `state` under `spec`:
//   sum_j [ -ln(2*pi)/2 - ln(sigma_q) - (q_j-mu_q)^2/(2 sigma_q^2) ]
// + sum_j [ -ln(2*pi)/2 - ln(sigma_p) - (p_j-mu_p)^2/(2 sigma_p^2) ]
// Summation runs in index order, q block then p block.
double gaussian_log_density(const ParticleSystem& state, const GaussianInitSpec& spec);

// Draws q_j ~ N(mu_q, sigma_q^2), p_j ~ N(mu_p, sigma_p^2), all independent.
ParticleSystem sample_initial(const GaussianInitSpec& spec, std::size_t n_particles, Rng& rng);

// Two independent uniform draws on [0.5, 1.5]: (sigma_q, sigma_p).
std::pair<double, double> sample_sigma(Rng& rng);

}  // namespace pnhf
