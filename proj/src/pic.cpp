#include "pnhf/pic.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pnhf {

namespace {

using Complex = std::complex<double>;

bool is_pow2(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

void require_grid(const GridSpec& grid) {
    if (!is_pow2(static_cast<std::size_t>(grid.cells)))
        throw std::invalid_argument("grid cells must be a power of two >= 2");
    if (!(grid.box_length > 0.0)) throw std::invalid_argument("box_length must be > 0");
}

// In-place iterative radix-2 Cooley-Tukey; sign = -1 forward, +1 inverse.
void fft_in_place(std::vector<Complex>& x, int sign) {
    const std::size_t n = x.size();
    if (!is_pow2(n)) throw std::invalid_argument("fft length must be a power of two");

    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(x[i], x[j]);
    }

    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = sign * 2.0 * M_PI / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                // direct twiddle evaluation keeps round-off flat across stages
                const Complex w = std::polar(1.0, ang * static_cast<double>(k));
                const Complex u = x[i + k];
                const Complex v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
            }
        }
    }
}

// Wraps into [0, L). fmod can return L itself after rounding, fold that back.
double wrap_position(double q, double box_length) {
    double x = std::fmod(q, box_length);
    if (x < 0.0) x += box_length;
    if (x >= box_length) x -= box_length;
    return x;
}

struct CicWeights {
    int left;
    double delta;  // in [0, 1)
};

CicWeights cic_weights(double q, const GridSpec& grid) {
    const double x = wrap_position(q, grid.box_length);
    const double s = x / grid.dx();
    int i = static_cast<int>(s);
    if (i >= grid.cells) i = grid.cells - 1;  // guard against s == cells from rounding
    return {i, s - i};
}

}  // namespace

std::vector<Complex> fft_forward(std::span<const double> values) {
    std::vector<Complex> x(values.begin(), values.end());
    fft_in_place(x, -1);
    return x;
}

std::vector<Complex> fft_inverse_complex(std::span<const std::complex<double>> spectrum) {
    std::vector<Complex> x(spectrum.begin(), spectrum.end());
    fft_in_place(x, +1);
    const double inv_n = 1.0 / static_cast<double>(x.size());
    for (auto& v : x) v *= inv_n;
    return x;
}

std::vector<double> fft_inverse(std::span<const std::complex<double>> spectrum) {
    const auto x = fft_inverse_complex(spectrum);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i].real();
    return out;
}

GridField cic_deposit(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys) {
    require_grid(grid);
    require_valid_state(state);

    GridField rho;
    rho.values.assign(grid.cells, 0.0);
    const double amp = phys.charge / grid.dx();
    for (double q : state.q) {
        const auto [i, delta] = cic_weights(q, grid);
        rho.values[i] += amp * (1.0 - delta);
        rho.values[(i + 1) % grid.cells] += amp * delta;
    }
    return rho;
}

std::vector<double> cic_gather(const ParticleSystem& state, const GridField& force, const GridSpec& grid) {
    require_grid(grid);
    require_valid_state(state);
    if (force.values.size() != static_cast<std::size_t>(grid.cells))
        throw std::invalid_argument("force field length does not match grid");

    std::vector<double> out(state.size());
    for (std::size_t j = 0; j < state.size(); ++j) {
        const auto [i, delta] = cic_weights(state.q[j], grid);
        out[j] = (1.0 - delta) * force.values[i] + delta * force.values[(i + 1) % grid.cells];
    }
    return out;
}

GridField solve_force(const GridField& density, const GridSpec& grid, const PhysicsParams& phys) {
    require_grid(grid);
    if (density.values.size() != static_cast<std::size_t>(grid.cells))
        throw std::invalid_argument("density field length does not match grid");

    auto spectrum = fft_forward(density.values);
    const int n = grid.cells;
    spectrum[0] = 0.0;      // neutralizing background
    spectrum[n / 2] = 0.0;  // Nyquist has no well-defined sign for -i/k
    for (int m = 1; m < n; ++m) {
        if (m == n / 2) continue;
        const int mode = (m <= n / 2 - 1) ? m : m - n;
        const double k = 2.0 * M_PI * mode / grid.box_length;
        spectrum[m] *= Complex(0.0, -1.0) / (phys.eps0 * k);
    }
    GridField force;
    force.values = fft_inverse(spectrum);
    return force;
}

GridField solve_potential(const GridField& density, const GridSpec& grid, const PhysicsParams& phys) {
    require_grid(grid);
    if (density.values.size() != static_cast<std::size_t>(grid.cells))
        throw std::invalid_argument("density field length does not match grid");

    auto spectrum = fft_forward(density.values);
    const int n = grid.cells;
    spectrum[0] = 0.0;
    spectrum[n / 2] = 0.0;
    for (int m = 1; m < n; ++m) {
        if (m == n / 2) continue;
        const int mode = (m <= n / 2 - 1) ? m : m - n;
        const double k = 2.0 * M_PI * mode / grid.box_length;
        spectrum[m] /= phys.eps0 * k * k;
    }
    GridField pot;
    pot.values = fft_inverse(spectrum);
    return pot;
}

ParticleSystem pic_step(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys,
                        long* wrap_events) {
    require_grid(grid);
    require_valid_state(state);

    const double dt = phys.dt;
    ParticleSystem next = state;

    // first half-kick at current positions
    {
        const auto force = cic_gather(next, solve_force(cic_deposit(next, grid, phys), grid, phys), grid);
        for (std::size_t j = 0; j < next.size(); ++j) next.p[j] += 0.5 * dt * force[j];
    }

    // drift with periodic wrap
    for (std::size_t j = 0; j < next.size(); ++j) {
        const double moved = next.q[j] + dt * next.p[j];
        const double wrapped = wrap_position(moved, grid.box_length);
        if (wrap_events && wrapped != moved) ++*wrap_events;
        next.q[j] = wrapped;
    }

    // second half-kick at the new positions
    {
        const auto force = cic_gather(next, solve_force(cic_deposit(next, grid, phys), grid, phys), grid);
        for (std::size_t j = 0; j < next.size(); ++j) next.p[j] += 0.5 * dt * force[j];
    }
    return next;
}

SnapshotSeries simulate(const GaussianInitSpec& spec, std::size_t n_particles, int steps,
                        const GridSpec& grid, const PhysicsParams& phys, int snapshot_stride,
                        Rng& rng, SimulateStats* stats) {
    if (steps < 1) throw std::invalid_argument("steps must be >= 1");
    if (snapshot_stride < 1 || steps % snapshot_stride != 0)
        throw std::invalid_argument("snapshot_stride must divide steps");

    SnapshotSeries series;
    series.spec = spec;

    ParticleSystem state = sample_initial(spec, n_particles, rng);
    series.times.push_back(0.0);
    series.states.push_back(state);

    long wraps = 0;
    for (int i = 1; i <= steps; ++i) {
        state = pic_step(state, grid, phys, &wraps);
        if (i % snapshot_stride == 0) {
            series.times.push_back(i * phys.dt);
            series.states.push_back(state);
        }
    }
    if (stats) stats->wrap_events += wraps;
    return series;
}

double total_energy(const ParticleSystem& state, const GridSpec& grid, const PhysicsParams& phys) {
    require_valid_state(state);

    double kinetic = 0.0;
    for (double pj : state.p) kinetic += 0.5 * pj * pj;

    const auto rho = cic_deposit(state, grid, phys);
    const auto pot = solve_potential(rho, grid, phys);
    double potential = 0.0;
    for (int i = 0; i < grid.cells; ++i) potential += 0.5 * rho.values[i] * pot.values[i] * grid.dx();

    return kinetic + potential;
}

}  // namespace pnhf
