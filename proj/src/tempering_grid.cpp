#include "sfc/tempering_grid.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sfc {

TemperingGrid TemperingGrid::create(int n_cells, double length, double T_init,
                                    double diffusion) {
    if (n_cells < 10) throw std::invalid_argument("tempering grid needs >= 10 cells");
    TemperingGrid g;
    g.dz = length / n_cells;
    g.diffusion = diffusion;
    g.T.assign(static_cast<std::size_t>(n_cells), T_init);
    return g;
}

double weno5_face(double qm2, double qm1, double q0, double qp1, double qp2) {
    constexpr double eps = 1e-6;
    constexpr double c13 = 13.0 / 12.0;

    const double b0 = c13 * (qm2 - 2.0 * qm1 + q0) * (qm2 - 2.0 * qm1 + q0) +
                      0.25 * (qm2 - 4.0 * qm1 + 3.0 * q0) * (qm2 - 4.0 * qm1 + 3.0 * q0);
    const double b1 = c13 * (qm1 - 2.0 * q0 + qp1) * (qm1 - 2.0 * q0 + qp1) +
                      0.25 * (qm1 - qp1) * (qm1 - qp1);
    const double b2 = c13 * (q0 - 2.0 * qp1 + qp2) * (q0 - 2.0 * qp1 + qp2) +
                      0.25 * (3.0 * q0 - 4.0 * qp1 + qp2) * (3.0 * q0 - 4.0 * qp1 + qp2);

    double w0 = 0.1 / ((eps + b0) * (eps + b0));
    double w1 = 0.6 / ((eps + b1) * (eps + b1));
    double w2 = 0.3 / ((eps + b2) * (eps + b2));
    const double ws = w0 + w1 + w2;
    w0 /= ws;
    w1 /= ws;
    w2 /= ws;

    const double p0 = (2.0 * qm2 - 7.0 * qm1 + 11.0 * q0) / 6.0;
    const double p1 = (-qm1 + 5.0 * q0 + 2.0 * qp1) / 6.0;
    const double p2 = (2.0 * q0 + 5.0 * qp1 - qp2) / 6.0;

    return w0 * p0 + w1 * p1 + w2 * p2;
}

namespace {

// Cell value with 3-cell ghost padding; idx in [-3, n+2].
inline double padded(const std::vector<double>& T, long idx, GridBoundary bc,
                     double T_in) {
    const long n = static_cast<long>(T.size());
    if (bc == GridBoundary::periodic) {
        long k = idx % n;
        if (k < 0) k += n;
        return T[static_cast<std::size_t>(k)];
    }
    if (idx < 0) return T_in;
    if (idx >= n) return T.back();
    return T[static_cast<std::size_t>(idx)];
}

}  // namespace

void advect_diffuse_step(std::vector<double>& T, double v, double dt, double dz,
                         double diffusion, GridBoundary bc, double T_in) {
    if (v < 0.0) throw std::invalid_argument("grid step: flow must be co-current (v >= 0)");
    if (v * dt / dz > 1.0 + 1e-12) {
        throw std::runtime_error("grid step: CFL violated (v*dt/dz > 1)");
    }
    if (diffusion * dt / (dz * dz) > 0.5 + 1e-12) {
        throw std::runtime_error("grid step: diffusion number > 0.5");
    }

    const long n = static_cast<long>(T.size());
    std::vector<double> face(static_cast<std::size_t>(n) + 1);  // face i -> interface i-1/2
    for (long i = 0; i <= n; ++i) {
        face[static_cast<std::size_t>(i)] =
            weno5_face(padded(T, i - 3, bc, T_in), padded(T, i - 2, bc, T_in),
                       padded(T, i - 1, bc, T_in), padded(T, i, bc, T_in),
                       padded(T, i + 1, bc, T_in));
    }

    std::vector<double> out(T.size());
    const double adv = v * dt / dz;
    const double dif = diffusion * dt / (dz * dz);
    for (long i = 0; i < n; ++i) {
        const std::size_t k = static_cast<std::size_t>(i);
        double Ti = T[k] - adv * (face[k + 1] - face[k]);
        Ti += dif * (padded(T, i + 1, bc, T_in) - 2.0 * T[k] + padded(T, i - 1, bc, T_in));
        if (!std::isfinite(Ti)) throw std::runtime_error("grid step: nonfinite temperature");
        out[k] = Ti;
    }
    T.swap(out);
}

void heat_split(double z_start, double z_end, double duty_W,
                const TemperingGrid& grid, std::span<double> cell_W) {
    if (!(z_start < z_end)) {
        // degenerate interval: deposit into the containing cell
        const long n = static_cast<long>(grid.T.size());
        long k = static_cast<long>(std::floor(z_start / grid.dz));
        k = std::clamp(k, 0L, n - 1);
        cell_W[static_cast<std::size_t>(k)] += duty_W;
        return;
    }

    const long n = static_cast<long>(grid.T.size());
    const double total = z_end - z_start;
    const double lo = std::max(z_start, 0.0);
    const double hi = std::min(z_end, n * grid.dz);
    if (!(lo < hi)) return;  // interval entirely outside the grid

    const long k0 = std::clamp(static_cast<long>(std::floor(lo / grid.dz)), 0L, n - 1);
    const long k1 = std::clamp(static_cast<long>(std::floor(hi / grid.dz)), 0L, n - 1);
    const double per_length = duty_W / total;
    for (long k = k0; k <= k1; ++k) {
        const double cell_lo = k * grid.dz;
        const double cell_hi = cell_lo + grid.dz;
        const double overlap = std::min(hi, cell_hi) - std::max(lo, cell_lo);
        if (overlap > 0.0) cell_W[static_cast<std::size_t>(k)] += per_length * overlap;
    }
}

void tm_grid_step(TemperingGrid& grid, double v, double dt,
                  std::span<const double> slug_source_W, const PlantParams& p,
                  GridBoundary bc, double T_in) {
    if (slug_source_W.size() != grid.T.size()) {
        throw std::invalid_argument("tm_grid_step: source array size mismatch");
    }

    const double cell_volume = p.annulus_area_tm() * grid.dz;
    const double heat_cap = p.rho_tm * p.cp_tm * cell_volume;  // [J/K] per cell
    const double env_UA = p.U_tm_env * std::numbers::pi * p.D_a_tm * grid.dz;

    advect_diffuse_step(grid.T, v, dt, grid.dz, grid.diffusion, bc, T_in);

    for (std::size_t k = 0; k < grid.T.size(); ++k) {
        const double source = slug_source_W[k] + env_UA * (p.T_env - grid.T[k]);
        grid.T[k] += dt * source / heat_cap;
        if (!std::isfinite(grid.T[k])) {
            throw std::runtime_error("tm_grid_step: nonfinite temperature");
        }
    }
}

}  // namespace sfc
