#include "sfc/simulator.hpp"

#include <algorithm>
#include <cmath>

#include "sfc/kinetics.hpp"

namespace sfc {

double characteristic_diameter(const std::vector<double>& lengths_sorted, double q) {
    if (lengths_sorted.empty()) return 0.0;

    double total = 0.0;
    for (double L : lengths_sorted) total += L * L * L;

    const double target = q * total;
    double before = 0.0;
    double result = lengths_sorted.front();
    for (double L : lengths_sorted) {
        const double vol = L * L * L;
        if (before + 0.5 * vol <= target) result = L;
        before += vol;
    }
    return result;
}

std::array<double, 3> characteristic_diameters(std::vector<double> lengths) {
    std::sort(lengths.begin(), lengths.end());
    return {characteristic_diameter(lengths, 0.10),
            characteristic_diameter(lengths, 0.50),
            characteristic_diameter(lengths, 0.90)};
}

Simulator::Simulator(const PlantParams& params, const SimSettings& settings,
                     std::uint64_t seed)
    : params_(params),
      settings_(settings),
      grid_(TemperingGrid::create(settings.n_cells, params.length, params.T_tm_in,
                                  params.diffusion_tm)),
      rng_(seed) {
    params_.validate();
    settings_.validate();
}

Measurement Simulator::measure_outlet(const Inputs& u) {
    // foremost exiting slug carries the outlet state
    const Slug& out = outlet_events_.back();

    Measurement m;
    m.t = t_;
    m.T_pm = out.temp;
    m.T_tm = grid_.T.back();
    m.c_pm = out.conc;

    std::vector<double> lengths = out.particles;
    if (lengths.empty()) {
        m.population_empty = true;
        return m;
    }

    // reduce to the crystal count of a single real slug
    const double v_sim = out.mass / params_.rho_pm;
    const double frac = params_.real_slug_volume() / v_sim;
    if (frac < 1.0) {
        std::size_t target = static_cast<std::size_t>(
            std::llround(frac * static_cast<double>(lengths.size())));
        target = std::clamp<std::size_t>(target, 1, lengths.size());
        // partial Fisher-Yates: the first `target` entries are a uniform subsample
        for (std::size_t i = 0; i < target; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, lengths.size() - 1);
            std::swap(lengths[i], lengths[pick(rng_)]);
        }
        lengths.resize(target);
    }

    const auto d = characteristic_diameters(std::move(lengths));
    m.d10 = d[0];
    m.d50 = d[1];
    m.d90 = d[2];
    (void)u;
    return m;
}

void Simulator::step(const Inputs& u) {
    u.validate();
    const FlowProfile profile(u, params_);
    const double dt = settings_.dt;
    const double L_sfc = params_.length;

    outlet_events_.clear();
    std::vector<double> sources(grid_.T.size(), 0.0);
    double heat_into_slugs = 0.0;
    double heat_comp = 0.0;  // Kahan compensation

    std::vector<Slug> kept;
    kept.reserve(slugs_.size() + 1);

    for (Slug& s : slugs_) {
        const double z_old = s.z;
        const double z_new = z_old + dt * profile.velocity(z_old);
        if (z_new > L_sfc) {
            s.z = z_new;
            outlet_events_.push_back(std::move(s));
            continue;
        }
        s.z = z_new;

        // heat exchange against the arrival cell (duty split over the
        // traversed cells below)
        long cell = static_cast<long>(std::floor(z_new / grid_.dz));
        cell = std::clamp(cell, 0L, static_cast<long>(grid_.T.size()) - 1);
        const double T_tm_local = grid_.T[static_cast<std::size_t>(cell)];

        const double area = s.heat_area(params_);
        const SlugOdeResult ode = slug_ode_step(s, T_tm_local, area, dt, params_);

        const double v_local = profile.velocity(z_new);
        const double beta = agglomeration_kernel(params_.beta0, ode.growth_rate, v_local);
        const McStepResult mc =
            mc_population_step(s, ode.growth_rate, beta, dt, params_, rng_);
        if (mc.pair_prob_warning) ++agg_warnings_;

        heat_split(z_old, z_new, -ode.heat_into_slug_W, grid_, sources);
        // Kahan sum of the slug-side duties
        const double y = ode.heat_into_slug_W - heat_comp;
        const double t = heat_into_slugs + y;
        heat_comp = (t - heat_into_slugs) - y;
        heat_into_slugs = t;

        kept.push_back(std::move(s));
    }

    // new slug enters at the inlet
    if (u.Q_pm > 0.0) {
        kept.insert(kept.begin(), spawn_slug(u, params_, dt, rng_));
    }
    slugs_ = std::move(kept);

    last_heat_into_slugs_W_ = heat_into_slugs;
    double grid_sum = 0.0, grid_comp = 0.0;
    for (double sW : sources) {
        const double y = sW - grid_comp;
        const double t = grid_sum + y;
        grid_comp = (t - grid_sum) - y;
        grid_sum = t;
    }
    last_heat_into_grid_W_ = grid_sum;

    tm_grid_step(grid_, tm_velocity(u, params_), dt, sources, params_,
                 GridBoundary::inflow_outflow, params_.T_tm_in);

    t_ += dt;

    if (!outlet_events_.empty()) {
        measurement_ = measure_outlet(u);
        has_measurement_ = true;
    }
}

void Simulator::run(const Inputs& u, int n_steps) {
    for (int i = 0; i < n_steps; ++i) step(u);
}

}  // namespace sfc
