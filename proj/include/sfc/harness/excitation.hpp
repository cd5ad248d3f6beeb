#pragma once

#include <array>

#include "sfc/params.hpp"
#include "sfc/rng.hpp"

#include <json.hpp>

namespace sfc::harness {

// Piecewise-constant random excitation: each channel holds its value for a
// geometrically distributed number of control periods (mean mean_hold) and
// then redraws uniformly from its range.
struct ExcitationPolicy {
    std::array<double, 4> lo{1.667e-8, 1.667e-8, 8.333e-7, 0.006};
    std::array<double, 4> hi{6.667e-8, 6.667e-8, 5.0e-6, 0.012};
    double mean_hold = 5.0;
    bool excite_w = true;
    double w_fixed = 0.01;

    void validate() const;
    static ExcitationPolicy from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

class ExcitationSignal {
  public:
    ExcitationSignal(const ExcitationPolicy& policy, std::uint64_t seed);

    // Input vector for control step k; call with consecutive k.
    Inputs next();

  private:
    ExcitationPolicy policy_;
    Rng rng_;
    std::array<double, 4> value_{};
    std::array<int, 4> hold_left_{};

    double draw(int c);
    int draw_hold();
};

}  // namespace sfc::harness
