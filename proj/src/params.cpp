#include "sfc/params.hpp"

namespace sfc {
namespace {

void require_positive(double v, const char* name) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("plant parameter '") + name +
                                    "' must be strictly positive");
    }
}

void require_nonneg(double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string("input '") + name +
                                    "' must be nonnegative");
    }
}

// Overwrites dst only when the key is present; errors name the field.
void read(const nlohmann::json& j, const char* key, double& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<double>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config field '") + key +
                                    "' is not a number");
    }
}

void read(const nlohmann::json& j, const char* key, int& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<int>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config field '") + key +
                                    "' is not an integer");
    }
}

void read(const nlohmann::json& j, const char* key, bool& dst) {
    if (!j.contains(key)) return;
    try {
        dst = j.at(key).get<bool>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config field '") + key +
                                    "' is not a boolean");
    }
}

}  // namespace

void PlantParams::validate() const {
    if (!(beta0 >= 0.0) || !std::isfinite(beta0)) {
        throw std::invalid_argument("plant parameter 'beta0' must be >= 0");
    }
    require_positive(mu_init, "mu_init");
    require_positive(sigma_init, "sigma_init");
    require_positive(k_v, "k_v");
    require_positive(rho_cryst, "rho_cryst");
    require_positive(rho_pm, "rho_pm");
    require_positive(cp_pm, "cp_pm");
    require_positive(U_pm_tm, "U_pm_tm");
    require_positive(rho_tm, "rho_tm");
    require_positive(cp_tm, "cp_tm");
    require_positive(U_tm_env, "U_tm_env");
    require_positive(length, "length");
    require_positive(d_i_pm, "d_i_pm");
    require_positive(d_a_pm, "d_a_pm");
    require_positive(D_i_tm, "D_i_tm");
    require_positive(D_a_tm, "D_a_tm");
    require_positive(p_out, "p_out");
    require_positive(T_env, "T_env");
    require_positive(T_pm_in, "T_pm_in");
    require_positive(T_tm_in, "T_tm_in");
    require_positive(c_in, "c_in");
    require_positive(real_slug_length, "real_slug_length");
    if (!(diffusion_tm >= 0.0)) {
        throw std::invalid_argument("plant parameter 'diffusion_tm' must be >= 0");
    }
    if (!(dp_kappa0 >= 0.0) || !(dp_kappa1 >= 0.0)) {
        throw std::invalid_argument("plant parameters 'dp_kappa0'/'dp_kappa1' must be >= 0");
    }
    if (!(agg_c_norm >= 0.0)) {
        throw std::invalid_argument("plant parameter 'agg_c_norm' must be >= 0");
    }
    if (!(d_i_pm < d_a_pm && d_a_pm < D_i_tm && D_i_tm < D_a_tm)) {
        throw std::invalid_argument(
            "plant diameters must satisfy d_i_pm < d_a_pm < D_i_tm < D_a_tm");
    }
}

PlantParams PlantParams::from_json(const nlohmann::json& j) {
    PlantParams p;
    read(j, "beta0", p.beta0);
    read(j, "mu_init", p.mu_init);
    read(j, "sigma_init", p.sigma_init);
    read(j, "k_v", p.k_v);
    read(j, "rho_cryst", p.rho_cryst);
    read(j, "rho_pm", p.rho_pm);
    read(j, "cp_pm", p.cp_pm);
    read(j, "U_pm_tm", p.U_pm_tm);
    read(j, "rho_tm", p.rho_tm);
    read(j, "cp_tm", p.cp_tm);
    read(j, "U_tm_env", p.U_tm_env);
    read(j, "diffusion_tm", p.diffusion_tm);
    read(j, "length", p.length);
    read(j, "d_i_pm", p.d_i_pm);
    read(j, "d_a_pm", p.d_a_pm);
    read(j, "D_i_tm", p.D_i_tm);
    read(j, "D_a_tm", p.D_a_tm);
    read(j, "p_out", p.p_out);
    read(j, "T_env", p.T_env);
    read(j, "T_pm_in", p.T_pm_in);
    read(j, "T_tm_in", p.T_tm_in);
    read(j, "c_in", p.c_in);
    read(j, "dp_kappa0", p.dp_kappa0);
    read(j, "dp_kappa1", p.dp_kappa1);
    read(j, "solubility_in_celsius", p.solubility_in_celsius);
    read(j, "real_slug_length", p.real_slug_length);
    read(j, "agg_c_norm", p.agg_c_norm);
    read(j, "agg_norm_per_volume", p.agg_norm_per_volume);
    p.validate();
    return p;
}

nlohmann::json PlantParams::to_json() const {
    return {
        {"beta0", beta0},
        {"mu_init", mu_init},
        {"sigma_init", sigma_init},
        {"k_v", k_v},
        {"rho_cryst", rho_cryst},
        {"rho_pm", rho_pm},
        {"cp_pm", cp_pm},
        {"U_pm_tm", U_pm_tm},
        {"rho_tm", rho_tm},
        {"cp_tm", cp_tm},
        {"U_tm_env", U_tm_env},
        {"diffusion_tm", diffusion_tm},
        {"length", length},
        {"d_i_pm", d_i_pm},
        {"d_a_pm", d_a_pm},
        {"D_i_tm", D_i_tm},
        {"D_a_tm", D_a_tm},
        {"p_out", p_out},
        {"T_env", T_env},
        {"T_pm_in", T_pm_in},
        {"T_tm_in", T_tm_in},
        {"c_in", c_in},
        {"dp_kappa0", dp_kappa0},
        {"dp_kappa1", dp_kappa1},
        {"solubility_in_celsius", solubility_in_celsius},
        {"real_slug_length", real_slug_length},
        {"agg_c_norm", agg_c_norm},
        {"agg_norm_per_volume", agg_norm_per_volume},
    };
}

void Inputs::validate() const {
    require_nonneg(Q_pm, "Q_pm");
    require_nonneg(Q_air, "Q_air");
    require_nonneg(Q_tm, "Q_tm");
    require_nonneg(w_cryst, "w_cryst");
}

Inputs Inputs::from_json(const nlohmann::json& j) {
    Inputs u;
    read(j, "Q_pm", u.Q_pm);
    read(j, "Q_air", u.Q_air);
    read(j, "Q_tm", u.Q_tm);
    read(j, "w_cryst", u.w_cryst);
    u.validate();
    return u;
}

nlohmann::json Inputs::to_json() const {
    return {{"Q_pm", Q_pm}, {"Q_air", Q_air}, {"Q_tm", Q_tm}, {"w_cryst", w_cryst}};
}

void SimSettings::validate() const {
    require_positive(dt, "dt");
    require_positive(sample_period, "sample_period");
    if (n_cells < 10) {
        throw std::invalid_argument("sim setting 'n_cells' must be >= 10");
    }
}

SimSettings SimSettings::from_json(const nlohmann::json& j) {
    SimSettings s;
    read(j, "dt", s.dt);
    read(j, "n_cells", s.n_cells);
    read(j, "sample_period", s.sample_period);
    s.validate();
    return s;
}

nlohmann::json SimSettings::to_json() const {
    return {{"dt", dt}, {"n_cells", n_cells}, {"sample_period", sample_period}};
}

}  // namespace sfc
