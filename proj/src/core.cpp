#include "pnhf/core.hpp"

#include <cmath>
#include <stdexcept>

namespace pnhf {

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727417803297;  // ln(2*pi)/2
}

bool all_finite(std::span<const double> xs) {
    for (double x : xs) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool state_is_valid(const ParticleSystem& state) {
    return state.q.size() == state.p.size() && !state.q.empty() &&
           all_finite(state.q) && all_finite(state.p);
}

void require_valid_state(const ParticleSystem& state) {
    if (!state_is_valid(state)) throw std::invalid_argument("invalid state");
}

void require_valid_spec(const GaussianInitSpec& spec) {
    if (!(spec.sigma_q > 0.0) || !(spec.sigma_p > 0.0) ||
        !std::isfinite(spec.mu_q) || !std::isfinite(spec.mu_p) ||
        !std::isfinite(spec.sigma_q) || !std::isfinite(spec.sigma_p)) {
        throw std::invalid_argument("invalid spec");
    }
}

double Rng::uniform01() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mu, double sigma) {
    const double u1 = 1.0 - uniform01();  // (0, 1], keeps the log finite
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mu + sigma * r * std::cos(2.0 * M_PI * u2);
}

std::uint64_t Rng::derive(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double gaussian_log_density(const ParticleSystem& state, const GaussianInitSpec& spec) {
    require_valid_spec(spec);
    require_valid_state(state);

    const double log_sq = std::log(spec.sigma_q);
    const double log_sp = std::log(spec.sigma_p);
    double acc = 0.0;
    for (double qj : state.q) {
        const double z = (qj - spec.mu_q) / spec.sigma_q;
        acc += -kHalfLog2Pi - log_sq - 0.5 * z * z;
    }
    for (double pj : state.p) {
        const double z = (pj - spec.mu_p) / spec.sigma_p;
        acc += -kHalfLog2Pi - log_sp - 0.5 * z * z;
    }
    return acc;
}

ParticleSystem sample_initial(const GaussianInitSpec& spec, std::size_t n_particles, Rng& rng) {
    require_valid_spec(spec);
    if (n_particles < 1) throw std::invalid_argument("n_particles must be >= 1");

    ParticleSystem state;
    state.q.reserve(n_particles);
    state.p.reserve(n_particles);
    for (std::size_t j = 0; j < n_particles; ++j) state.q.push_back(rng.normal(spec.mu_q, spec.sigma_q));
    for (std::size_t j = 0; j < n_particles; ++j) state.p.push_back(rng.normal(spec.mu_p, spec.sigma_p));
    return state;
}

std::pair<double, double> sample_sigma(Rng& rng) {
    const double sq = 0.5 + rng.uniform01();
    const double sp = 0.5 + rng.uniform01();
    return {sq, sp};
}

}  // namespace pnhf
