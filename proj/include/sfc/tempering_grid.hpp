#pragma once

#include <span>
#include <vector>

#include "sfc/params.hpp"

namespace sfc {

enum class GridBoundary {
    inflow_outflow,  // fixed inlet temperature, zero-gradient outlet
    periodic,        // test harness only
};

// Eulerian finite-volume field of tempering-medium temperatures.
struct TemperingGrid {
    double dz = 0.0;
    double diffusion = 0.0;  // [m^2/s]
    std::vector<double> T;   // cell temperatures [K]

    static TemperingGrid create(int n_cells, double length, double T_init,
                                double diffusion);
};

// Left-biased WENO5 reconstruction of the interface value at i+1/2 from the
// five cell averages q_{i-2}..q_{i+2} (upwind for v > 0).
double weno5_face(double qm2, double qm1, double q0, double qp1, double qp2);

// One explicit Euler step of dT/dt = -v dT/dz + D d2T/dz2 on the grid.
// Enforces v*dt/dz <= 1 and D*dt/dz^2 <= 0.5.
void advect_diffuse_step(std::vector<double>& T, double v, double dt, double dz,
                         double diffusion, GridBoundary bc, double T_in);

// Distributes a heat duty [W] over the grid cells overlapped by
// [z_start, z_end], proportionally to overlap length. Intervals outside the
// grid are clipped; a degenerate interval lands fully in its containing cell.
// Contributions are accumulated into cell_W.
void heat_split(double z_start, double z_end, double duty_W,
                const TemperingGrid& grid, std::span<double> cell_W);

// Full grid update: WENO5 convection, central diffusion, slug heat sources,
// and heat loss to the environment, all explicit Euler.
void tm_grid_step(TemperingGrid& grid, double v, double dt,
                  std::span<const double> slug_source_W, const PlantParams& p,
                  GridBoundary bc, double T_in);

}  // namespace sfc
