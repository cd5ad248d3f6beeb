#include "sfc/slug.hpp"

#include <cmath>

#include "sfc/kinetics.hpp"

namespace sfc {

Slug spawn_slug(const Inputs& u, const PlantParams& p, double dt, Rng& rng) {
    if (!(dt > 0.0)) throw std::invalid_argument("spawn_slug: dt must be > 0");
    if (!(u.Q_pm > 0.0)) throw std::invalid_argument("spawn_slug: Q_pm must be > 0");
    if (u.w_cryst < 0.0) throw std::invalid_argument("spawn_slug: w_cryst must be >= 0");

    const double mdot_pm = p.rho_pm * u.Q_pm;

    Slug s;
    s.z = 0.0;
    s.mass = dt * mdot_pm;
    s.conc = p.c_in;
    s.temp = p.T_pm_in;

    const double target_mass = u.w_cryst * mdot_pm * dt;
    if (target_mass > 0.0) {
        const double coeff = p.k_v * p.rho_cryst;
        double mass = 0.0;
        // stop at the first crossing of the target mass
        while (mass < target_mass) {
            const double L = truncated_normal_positive(rng, p.mu_init, p.sigma_init);
            s.particles.push_back(L);
            mass += coeff * L * L * L;
            if (s.particles.size() > 2'000'000) {
                throw std::runtime_error(
                    "spawn_slug: particle count exceeded 2e6; check w_cryst and "
                    "init distribution");
            }
        }
    }
    return s;
}

SlugOdeResult slug_ode_step(Slug& s, double T_tm_local, double area, double dt,
                            const PlantParams& p) {
    if (!(dt > 0.0)) throw std::invalid_argument("slug_ode_step: dt must be > 0");
    if (!(s.mass > 0.0)) throw std::invalid_argument("slug_ode_step: slug mass must be > 0");
    if (!std::isfinite(s.temp) || !std::isfinite(s.conc) || !std::isfinite(T_tm_local)) {
        throw std::runtime_error("slug_ode_step: nonfinite state");
    }

    SlugOdeResult r;

    // all right-hand sides evaluated at the pre-update state
    const double G = growth_rate(supersaturation(s.conc, s.temp, p));
    r.heat_into_slug_W = p.U_pm_tm * area * (T_tm_local - s.temp);

    double mu2 = 0.0;
    for (double L : s.particles) mu2 += L * L;

    const double dc = -dt * 3.0 * p.rho_cryst * p.k_v * G * mu2 / s.mass;
    if (s.conc + dc >= 0.0) {
        s.conc += dc;
        r.growth_rate = G;
    } else {
        // not enough solute for a full step: suspend growth, keep c
        r.growth_rate = 0.0;
    }

    s.temp += dt * r.heat_into_slug_W / (s.mass * p.cp_pm);
    return r;
}

McStepResult mc_population_step(Slug& s, double G, double beta_kernel, double dt,
                                const PlantParams& p, Rng& rng) {
    McStepResult r;

    const double dL = G * dt;
    if (dL != 0.0) {
        for (double& L : s.particles) L += dL;
    }

    const std::size_t n = s.particles.size();
    if (n < 2 || beta_kernel <= 0.0) return r;

    double c_norm = p.agg_c_norm;
    if (p.agg_norm_per_volume) c_norm = 1.0 / s.volume(p);

    const double pair_prob = beta_kernel * dt * c_norm;
    r.pair_prob_warning = pair_prob >= 0.1;

    const double lambda = pair_prob * 0.5 * static_cast<double>(n) *
                          static_cast<double>(n - 1);
    std::poisson_distribution<long> pois(lambda);
    long events = pois(rng);
    if (events > static_cast<long>(n) - 1) events = static_cast<long>(n) - 1;

    for (long e = 0; e < events; ++e) {
        const std::size_t m = s.particles.size();
        std::uniform_int_distribution<std::size_t> pick_i(0, m - 1);
        std::uniform_int_distribution<std::size_t> pick_j(0, m - 2);
        const std::size_t i = pick_i(rng);
        std::size_t j = pick_j(rng);
        if (j >= i) ++j;

        const double Li = s.particles[i];
        const double Lj = s.particles[j];
        const double merged = std::cbrt(Li * Li * Li + Lj * Lj * Lj);

        // remove i and j (swap with back), then append the merged particle
        const std::size_t hi = std::max(i, j);
        const std::size_t lo = std::min(i, j);
        s.particles[hi] = s.particles.back();
        s.particles.pop_back();
        s.particles[lo] = s.particles.back();
        s.particles.pop_back();
        s.particles.push_back(merged);
        ++r.events;
    }
    return r;
}

}  // namespace sfc
