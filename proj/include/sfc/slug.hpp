#pragma once

#include <vector>

#include "sfc/params.hpp"
#include "sfc/rng.hpp"

namespace sfc {

// One Lagrangian liquid compartment traveling through the crystallizer.
// particles holds the characteristic lengths [m] of the Monte Carlo
// population carried by this slug.
struct Slug {
    double z = 0.0;     // position [m]
    double mass = 0.0;  // [kg]
    double conc = 0.0;  // [kg solute / kg solvent]
    double temp = 0.0;  // [K]
    std::vector<double> particles;

    double volume(const PlantParams& p) const { return mass / p.rho_pm; }

    // Lateral area of the liquid cylinder, used for PM->TM heat transfer.
    double heat_area(const PlantParams& p) const {
        const double slug_len = mass / (p.rho_pm * p.cross_section_pm());
        return std::numbers::pi * p.d_i_pm * slug_len;
    }
};

// New slug at the inlet: mass dt*rho_pm*Q_pm, feed state, and seed crystals
// sampled from the init distribution until the target crystal mass
// w_cryst * mdot_pm * dt is first reached.
Slug spawn_slug(const Inputs& u, const PlantParams& p, double dt, Rng& rng);

struct SlugOdeResult {
    double heat_into_slug_W = 0.0;  // U*A*(T_tm - T_pm), pre-update states
    double growth_rate = 0.0;       // growth applied this step (0 if clamped)
};

// Explicit Euler update of slug temperature and concentration against the
// local tempering temperature. Concentration consumption uses the second
// moment mu2 = sum(L^2) of the current population; if the step would drive
// c below zero, growth is suspended for this step and c is left unchanged.
SlugOdeResult slug_ode_step(Slug& s, double T_tm_local, double area, double dt,
                            const PlantParams& p);

struct McStepResult {
    int events = 0;
    bool pair_prob_warning = false;  // per-pair event probability >= 0.1
};

// Growth plus pairwise agglomeration. Every particle grows by G*dt; the
// number of agglomeration events is Poisson with mean
// beta*dt*N(N-1)/2*C_norm, each event merging a uniformly chosen pair into
// one particle of equal total volume.
McStepResult mc_population_step(Slug& s, double G, double beta_kernel, double dt,
                                const PlantParams& p, Rng& rng);

}  // namespace sfc
