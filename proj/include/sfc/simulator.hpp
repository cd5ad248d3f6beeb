#pragma once

#include <array>
#include <optional>
#include <vector>

#include "sfc/hydro.hpp"
#include "sfc/params.hpp"
#include "sfc/slug.hpp"
#include "sfc/tempering_grid.hpp"

namespace sfc {

// Outlet measurement vector y. Diameters are volume-weighted characteristic
// diameters of the (reduced) outlet population.
struct Measurement {
    double t = 0.0;
    double T_pm = 0.0;
    double T_tm = 0.0;
    double c_pm = 0.0;
    double d10 = 0.0;
    double d50 = 0.0;
    double d90 = 0.0;
    bool population_empty = false;

    std::array<double, 6> y() const { return {T_pm, T_tm, c_pm, d10, d50, d90}; }
};

// Volume-weighted characteristic diameter: the length of the last particle
// (ascending) whose mid-cumulative volume does not exceed the q-fraction of
// the total volume. lengths must be sorted ascending.
double characteristic_diameter(const std::vector<double>& lengths_sorted, double q);

// d10/d50/d90 of a population (unsorted input).
std::array<double, 3> characteristic_diameters(std::vector<double> lengths);

// Full plant state; owns its random stream.
class Simulator {
  public:
    Simulator(const PlantParams& params, const SimSettings& settings,
              std::uint64_t seed);

    // One dt step of the sequencing scheme: move slugs, emit outlet events,
    // update slug ODEs and populations, spawn the inlet slug, step the grid.
    void step(const Inputs& u);

    // Convenience: run n steps with fixed inputs.
    void run(const Inputs& u, int n_steps);

    double time() const { return t_; }
    double dt() const { return settings_.dt; }
    const PlantParams& params() const { return params_; }
    const SimSettings& settings() const { return settings_; }
    const std::vector<Slug>& slugs() const { return slugs_; }
    const TemperingGrid& grid() const { return grid_; }
    std::vector<Slug>& mutable_slugs() { return slugs_; }

    // Zero-order-hold measurement; updated whenever a slug exits.
    const Measurement& measurement() const { return measurement_; }
    bool has_measurement() const { return has_measurement_; }

    const std::vector<Slug>& last_outlet_events() const { return outlet_events_; }

    // Energy bookkeeping of the last step [W]: total heat into all slugs and
    // total slug-source heat injected into the grid.
    double last_heat_into_slugs_W() const { return last_heat_into_slugs_W_; }
    double last_heat_into_grid_W() const { return last_heat_into_grid_W_; }

    long agglomeration_warnings() const { return agg_warnings_; }

  private:
    Measurement measure_outlet(const Inputs& u);

    PlantParams params_;
    SimSettings settings_;
    std::vector<Slug> slugs_;  // ordered outlet -> inlet internally? kept inlet-last
    TemperingGrid grid_;
    double t_ = 0.0;
    Rng rng_;

    Measurement measurement_;
    bool has_measurement_ = false;
    std::vector<Slug> outlet_events_;
    double last_heat_into_slugs_W_ = 0.0;
    double last_heat_into_grid_W_ = 0.0;
    long agg_warnings_ = 0;
};

}  // namespace sfc
