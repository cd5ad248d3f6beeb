#pragma once

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <json.hpp>

namespace sfc {

// Physical parameters of the crystallizer and the L-alanine/water system.
struct PlantParams {
    // crystallization kinetics
    double beta0 = 2.0e4;        // agglomeration prefactor [-]
    double mu_init = 2.5e-4;     // seed distribution mean [m]
    double sigma_init = 1.0e-4;  // seed distribution std [m]
    double k_v = std::numbers::pi / 6.0;  // volume shape factor [-]
    double rho_cryst = 1432.0;   // crystal density [kg/m^3]

    // process medium (inner tube)
    double rho_pm = 1000.0;      // [kg/m^3]
    double cp_pm = 4186.0;       // [J/(kg K)]
    double U_pm_tm = 9.25e2;     // PM -> TM heat transfer [W/(m^2 K)]

    // tempering medium (outer annulus)
    double rho_tm = 1000.0;
    double cp_tm = 4186.0;
    double U_tm_env = 8.27;      // TM -> environment [W/(m^2 K)]
    double diffusion_tm = 1.0e-5;  // axial diffusion in the TM [m^2/s]

    // geometry
    double length = 24.0;        // crystallizer length [m]
    double d_i_pm = 3.18e-3;     // PM tube inner diameter [m]
    double d_a_pm = 4.76e-3;     // PM tube outer diameter [m]
    double D_i_tm = 1.5e-2;      // TM tube inner diameter [m]
    double D_a_tm = 1.9e-2;      // TM tube outer diameter [m]

    // operating environment
    double p_out = 1.01e5;       // outlet pressure [Pa]
    double T_env = 293.15;       // ambient temperature [K]
    double T_pm_in = 308.15;     // PM feed temperature [K]
    double T_tm_in = 288.15;     // TM feed temperature [K]
    double c_in = 0.1545;        // feed concentration [kg solute / kg solvent]

    // pressure drop model: dp = kappa0 + kappa1*(Q_PM + Q_air)
    double dp_kappa0 = 1.0e4;    // [Pa]
    double dp_kappa1 = 2.45e11;  // [Pa s / m^3]

    // solubility correlation temperature unit
    bool solubility_in_celsius = true;

    // outlet population reduction: crystals of one real slug
    double real_slug_length = 8.0 * 3.18e-3;  // [m]

    // agglomeration event-count normalization: lambda = beta*dt*N(N-1)/2 * C
    // with C = agg_c_norm, or C = 1/V_slug when agg_norm_per_volume is set.
    double agg_c_norm = 1.0;
    bool agg_norm_per_volume = false;

    double cross_section_pm() const {
        return std::numbers::pi * d_i_pm * d_i_pm / 4.0;
    }
    double annulus_area_tm() const {
        return std::numbers::pi * (D_i_tm * D_i_tm - d_a_pm * d_a_pm) / 4.0;
    }
    double real_slug_volume() const { return cross_section_pm() * real_slug_length; }

    void validate() const;

    static PlantParams from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Manipulated/exogenous inputs to the plant.
struct Inputs {
    double Q_pm = 4.2e-8;    // process medium flow [m^3/s]
    double Q_air = 4.2e-8;   // air flow at outlet pressure [m^3/s]
    double Q_tm = 2.5e-6;    // tempering medium flow [m^3/s]
    double w_cryst = 0.01;   // inlet seed mass fraction [kg/kg slurry]

    void validate() const;

    static Inputs from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Numerical settings of the simulator.
struct SimSettings {
    double dt = 5.0;             // simulation time step [s]
    int n_cells = 120;           // TM grid cells
    double sample_period = 50.0; // measurement logging period [s]

    void validate() const;

    static SimSettings from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

}  // namespace sfc
