#pragma once

#include "sfc/params.hpp"

namespace sfc {

// Pressure and velocity along the crystallizer for fixed inputs.
// Pressure falls linearly from p_in to p_out; the gas slugs expand by the
// ideal gas law, so the local velocity grows toward the outlet.
class FlowProfile {
  public:
    FlowProfile(const Inputs& u, const PlantParams& p)
        : q_pm_(u.Q_pm),
          q_air_out_(u.Q_air),
          p_out_(p.p_out),
          length_(p.length),
          area_(p.cross_section_pm()) {
        if (!(u.Q_pm + u.Q_air > 0.0)) {
            throw std::invalid_argument("flow profile requires Q_pm + Q_air > 0");
        }
        const double dp = p.dp_kappa0 + p.dp_kappa1 * (u.Q_pm + u.Q_air);
        p_in_ = p_out_ + dp;
        if (!(p_in_ > 0.0)) {
            throw std::invalid_argument("inlet pressure must be positive");
        }
    }

    double pressure(double z) const {
        return p_in_ + (p_out_ - p_in_) * (z / length_);
    }

    // Local slug velocity [m/s]; nondecreasing in z for dp >= 0.
    double velocity(double z) const {
        const double q_air_local = q_air_out_ * p_out_ / pressure(z);
        return (q_pm_ + q_air_local) / area_;
    }

    double inlet_pressure() const { return p_in_; }

  private:
    double q_pm_;
    double q_air_out_;  // air flow referenced to outlet pressure
    double p_out_;
    double p_in_;
    double length_;
    double area_;
};

// Tempering medium velocity in the annulus, co-current with the slugs.
inline double tm_velocity(const Inputs& u, const PlantParams& p) {
    return u.Q_tm / p.annulus_area_tm();
}

}  // namespace sfc
