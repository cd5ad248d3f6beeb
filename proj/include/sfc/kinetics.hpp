#pragma once

#include "sfc/params.hpp"

namespace sfc {

// L-alanine/water correlations. Temperatures are Kelvin at the interface;
// the solubility fit itself is parameterized in deg C by default.

// Saturation concentration c* [kg solute / kg solvent].
inline double solubility(double T_kelvin, const PlantParams& p) {
    const double T = p.solubility_in_celsius ? T_kelvin - 273.15 : T_kelvin;
    return 0.11238 * std::exp(9.0849e-3 * T);
}

// Relative supersaturation dS = (c - c*)/c*.
inline double supersaturation(double c, double T_kelvin, const PlantParams& p) {
    const double cs = solubility(T_kelvin, p);
    return (c - cs) / cs;
}

// Size-independent growth rate [m/s]. No dissolution: clamped to 0 for dS <= 0.
inline double growth_rate(double dS) {
    if (!(dS > 0.0)) return 0.0;
    return 5.857e-5 * dS * dS * std::tanh(0.913 / dS);
}

// Agglomeration kernel beta = beta0 * G^1 * v^1, independent of particle size.
inline double agglomeration_kernel(double beta0, double G, double v) {
    return beta0 * G * v;
}

}  // namespace sfc
