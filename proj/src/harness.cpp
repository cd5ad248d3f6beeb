#include "sfc/harness/harness.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <iostream>

#include "sfc/surrogate/narx_dataset.hpp"

namespace sfc::harness {

namespace {

int steps_per_sample(const SimSettings& settings) {
    const double ratio = settings.sample_period / settings.dt;
    const int n = static_cast<int>(std::llround(ratio));
    if (std::abs(ratio - n) > 1e-9 || n < 1) {
        throw std::invalid_argument(
            "sample_period must be an integer multiple of dt");
    }
    return n;
}

Inputs nominal_inputs(const MpcConfig& cfg, double w) {
    Inputs u;
    u.Q_pm = 0.5 * (cfg.u_lo(0) + cfg.u_hi(0));
    u.Q_air = 0.5 * (cfg.u_lo(1) + cfg.u_hi(1));
    u.Q_tm = 0.5 * (cfg.u_lo(2) + cfg.u_hi(2));
    u.w_cryst = w;
    return u;
}

Eigen::VectorXd meas_vector(const Measurement& m) {
    Eigen::VectorXd y(6);
    const auto a = m.y();
    for (int c = 0; c < 6; ++c) y(c) = a[static_cast<std::size_t>(c)];
    return y;
}

Trajectory generate_one(const PlantParams& params, const SimSettings& settings,
                        const DataGenConfig& cfg, int n_samples, std::uint64_t seed) {
    Simulator sim(params, settings, split_seed(seed, 0x51ʍepsilon));
    return {};
}

}  // namespace

DataGenConfig DataGenConfig::from_json(const nlohmann::json& j) {
    DataGenConfig c;
    if (j.contains("n_samples")) c.n_samples = j.at("n_samples").get<int>();
    if (j.contains("n_trajectories")) c.n_trajectories = j.at("n_trajectories").get<int>();
    if (j.contains("warmup_s")) c.warmup_s = j.at("warmup_s").get<double>();
    if (j.contains("parallel")) c.parallel = j.at("parallel").get<bool>();
    if (j.contains("excitation")) c.excitation = ExcitationPolicy::from_json(j.at("excitation"));
    if (c.n_samples < 0 || c.n_trajectories < 1) {
        throw std::invalid_argument("data config needs n_samples >= 0, n_trajectories >= 1");
    }
    return c;
}

nlohmann::json DataGenConfig::to_json() const {
    return {{"n_samples", n_samples},
            {"n_trajectories", n_trajectories},
            {"warmup_s", warmup_s},
            {"parallel", parallel},
            {"excitation", excitation.to_json()}};
}

std::vector<Trajectory> generate_data(const PlantParams& params,
                                      const SimSettings& settings,
                                      const DataGenConfig& cfg, std::uint64_t seed) {
    const int per_sample = steps_per_sample(settings);
    const int n_traj = cfg.n_trajectories;
    const int base = cfg.n_samples / std::max(1, n_traj);
    const int extra = cfg.n_samples - base * n_traj;

    auto run_one = [&](int idx, int samples) {
        Trajectory tr;
        if (samples == 0) return tr;
        const std::uint64_t s = split_seed(seed, 0x9e0 + static_cast<std::uint64_t>(idx));
        Simulator sim(params, settings, s);
        ExcitationSignal sig(cfg.excitation, split_seed(seed, 0xe8c + static_cast<std::uint64_t>(idx)));

        // fill the crystallizer before logging
        Inputs warm = sig.next();
        const int warm_steps = static_cast<int>(std::ceil(cfg.warmup_s / settings.dt));
        sim.run(warm, warm_steps);

        for (int k = 0; k < samples; ++k) {
            const Inputs u = sig.next();
            const Measurement& m = sim.measurement();
            tr.push(sim.time(), {u.Q_pm, u.Q_air, u.Q_tm, u.w_cryst}, m.y());
            for (int i = 0; i < per_sample; ++i) sim.step(u);
        }
        return tr;
    };

    std::vector<Trajectory> out(static_cast<std::size_t>(n_traj));
    if (cfg.parallel && n_traj > 1) {
        std::vector<std::future<Trajectory>> futs;
        for (int i = 0; i < n_traj; ++i) {
            const int samples = base + (i < extra ? 1 : 0);
            futs.push_back(std::async(std::launch::async, run_one, i, samples));
        }
        for (int i = 0; i < n_traj; ++i) out[static_cast<std::size_t>(i)] = futs[static_cast<std::size_t>(i)].get();
    } else {
        for (int i = 0; i < n_traj; ++i) {
            out[static_cast<std::size_t>(i)] = run_one(i, base + (i < extra ? 1 : 0));
        }
    }
    std::erase_if(out, [](const Trajectory& t) { return t.size() == 0; });
    return out;
}

nlohmann::json CaseStudyReport::to_json() const {
    return {{"violation_pct", violation_pct},
            {"avg_rel_violation_pct", avg_rel_violation_pct},
            {"avg_scaled_cost", avg_scaled_cost},
            {"avg_solve_s", avg_solve_s},
            {"max_solve_s", max_solve_s},
            {"steps", steps},
            {"controller_failures", controller_failures}};
}

ClosedLoopConfig ClosedLoopConfig::from_json(const nlohmann::json& j) {
    ClosedLoopConfig c;
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("warmup_s")) c.warmup_s = j.at("warmup_s").get<double>();
    if (j.contains("disturbance_step")) c.disturbance_step = j.at("disturbance_step").get<int>();
    if (j.contains("w_before")) c.w_before = j.at("w_before").get<double>();
    if (j.contains("w_after")) c.w_after = j.at("w_after").get<double>();
    if (c.steps < 1) throw std::invalid_argument("closed-loop config needs steps >= 1");
    return c;
}

nlohmann::json ClosedLoopConfig::to_json() const {
    return {{"steps", steps},
            {"warmup_s", warmup_s},
            {"disturbance_step", disturbance_step},
            {"w_before", w_before},
            {"w_after", w_after}};
}

namespace {

// Shared receding-horizon loop; w_of_step supplies the disturbance.
ClosedLoopResult run_loop(const PlantParams& params, const SimSettings& settings,
                          const Surrogate& model, const MpcConfig& mpc_cfg,
                          int steps, double warmup_s,
                          const std::function<double(int)>& w_of_step,
                          std::uint64_t plant_seed) {
    const int per_sample = steps_per_sample(settings);
    if (std::abs(mpc_cfg.control_period - settings.sample_period) > 1e-9) {
        throw std::invalid_argument(
            "controller period must equal the measurement sample period");
    }

    Simulator sim(params, settings, plant_seed);
    Controller ctrl(model, mpc_cfg);
    const int lag = model.narx.lag;

    Inputs u_nom = nominal_inputs(mpc_cfg, w_of_step(0));
    const int warm_periods = lag + 2;
    const int pre_steps = std::max(
        0, static_cast<int>(std::ceil(warmup_s / settings.dt)) - warm_periods * per_sample);
    sim.run(u_nom, pre_steps);
    for (int k = 0; k < warm_periods; ++k) {
        sim.run(u_nom, per_sample);
        Eigen::VectorXd u_obs(4);
        u_obs << u_nom.Q_pm, u_nom.Q_air, u_nom.Q_tm, u_nom.w_cryst;
        ctrl.observe(meas_vector(sim.measurement()), u_obs);
    }

    ClosedLoopResult res;
    double cost_sum = 0.0, viol_sum = 0.0;
    int viol_count = 0;
    double solve_sum = 0.0, solve_max = 0.0;
    Eigen::Vector3d u_apply = Eigen::Vector3d(u_nom.Q_pm, u_nom.Q_air, u_nom.Q_tm);

    const Eigen::Vector3d width = mpc_cfg.u_hi - mpc_cfg.u_lo;
    for (int k = 0; k < steps; ++k) {
        const double w = w_of_step(k);
        const Measurement meas = sim.measurement();
        const Eigen::VectorXd y = meas_vector(meas);

        try {
            const auto& sol = ctrl.step(y, sim.time(), w);
            u_apply = sol.u_apply;
            solve_sum += sol.solve_time_s;
            solve_max = std::max(solve_max, sol.solve_time_s);
        } catch (const std::exception& e) {
            ++res.report.controller_failures;
            std::cerr << "controller failure at step " << k << ": " << e.what() << "\n";
            // hold the previous input
        }

        // metrics at the controller step
        if (meas.d90 > mpc_cfg.d90_max) ++viol_count;
        viol_sum += std::max(0.0, (meas.d90 - mpc_cfg.d90_max) / mpc_cfg.d90_max);
        const Eigen::Vector3d u_hat = (u_apply - mpc_cfg.u_lo).cwiseQuotient(width);
        cost_sum += -mpc_cfg.gamma1 * meas.d50 / mpc_cfg.d_scale -
                    mpc_cfg.gamma2 * u_hat(0) + mpc_cfg.gamma3 * u_hat(2);
        res.rms_d50_tracking_error +=
            (meas.d50 - mpc_cfg.d50_ref) * (meas.d50 - mpc_cfg.d50_ref);

        res.trajectory.push(sim.time(), {u_apply(0), u_apply(1), u_apply(2), w},
                            meas.y());

        Inputs u_plant;
        u_plant.Q_pm = u_apply(0);
        u_plant.Q_air = u_apply(1);
        u_plant.Q_tm = u_apply(2);
        u_plant.w_cryst = w;
        sim.run(u_plant, per_sample);
    }

    res.report.steps = steps;
    res.report.violation_pct = 100.0 * viol_count / steps;
    res.report.avg_rel_violation_pct = 100.0 * viol_sum / steps;
    res.report.avg_scaled_cost = cost_sum / steps;
    res.report.avg_solve_s = solve_sum / steps;
    res.report.max_solve_s = solve_max;
    res.rms_d50_tracking_error = std::sqrt(res.rms_d50_tracking_error / steps);
    res.mpc_log = ctrl.log_lines();
    return res;
}

}  // namespace

ClosedLoopResult run_closed_loop(const PlantParams& params, const SimSettings& settings,
                                 const Surrogate& model, const MpcConfig& mpc_cfg,
                                 const ClosedLoopConfig& cfg, std::uint64_t plant_seed) {
    auto w_of = [&](int k) {
        return (cfg.disturbance_step >= 0 && k >= cfg.disturbance_step) ? cfg.w_after
                                                                        : cfg.w_before;
    };
    return run_loop(params, settings, model, mpc_cfg, cfg.steps, cfg.warmup_s, w_of,
                    plant_seed);
}

std::map<std::string, ClosedLoopResult> case_study_1(
    const PlantParams& params, const SimSettings& settings,
    const std::map<std::string, Surrogate>& models, const MpcConfig& mpc_cfg,
    const ClosedLoopConfig& cfg, std::uint64_t plant_seed) {
    std::map<std::string, ClosedLoopResult> out;
    for (const auto& [name, model] : models) {
        MpcConfig mc = mpc_cfg;
        switch (model.kind) {
            case ModelKind::mlp: mc.mode = mpc::UncertaintyMode::nominal; break;
            case ModelKind::cqr: mc.mode = mpc::UncertaintyMode::cqr; break;
            case ModelKind::bll: mc.mode = mpc::UncertaintyMode::bll; break;
        }
        out.emplace(name, run_closed_loop(params, settings, model, mc, cfg, plant_seed));
    }
    return out;
}

nlohmann::json SweepCell::to_json() const {
    const Quartiles qv = quartiles(violation_pct);
    const Quartiles qc = quartiles(avg_cost);
    return {{"size", size},
            {"model", model},
            {"violation_pct", violation_pct},
            {"avg_cost", avg_cost},
            {"violation_quartiles",
             {{"median", qv.median}, {"q1", qv.q1}, {"q3", qv.q3}, {"lo", qv.lo}, {"hi", qv.hi}}},
            {"cost_quartiles",
             {{"median", qc.median}, {"q1", qc.q1}, {"q3", qc.q3}, {"lo", qc.lo}, {"hi", qc.hi}}}};
}

CaseStudy2Config CaseStudy2Config::from_json(const nlohmann::json& j) {
    CaseStudy2Config c;
    if (j.contains("sizes")) c.sizes = j.at("sizes").get<std::vector<int>>();
    if (j.contains("repetitions")) c.repetitions = j.at("repetitions").get<int>();
    if (j.contains("loop")) c.loop = ClosedLoopConfig::from_json(j.at("loop"));
    if (j.contains("data")) c.data = DataGenConfig::from_json(j.at("data"));
    if (j.contains("parallel")) c.parallel = j.at("parallel").get<bool>();
    if (c.sizes.empty() || c.repetitions < 1) {
        throw std::invalid_argument("case-study-2 config needs sizes and repetitions >= 1");
    }
    return c;
}

Quartiles quartiles(std::vector<double> v) {
    Quartiles q;
    if (v.empty()) return q;
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double h = p * (static_cast<double>(v.size()) - 1.0);
        const std::size_t i = static_cast<std::size_t>(h);
        const double frac = h - static_cast<double>(i);
        return i + 1 < v.size() ? v[i] * (1.0 - frac) + v[i + 1] * frac : v[i];
    };
    q.median = at(0.5);
    q.q1 = at(0.25);
    q.q3 = at(0.75);
    const double iqr = q.q3 - q.q1;
    q.lo = std::max(v.front(), q.q1 - 1.5 * iqr);
    q.hi = std::min(v.back(), q.q3 + 1.5 * iqr);
    return q;
}

std::vector<SweepCell> case_study_2(const PlantParams& params,
                                    const SimSettings& settings,
                                    const surrogate::SurrogateConfig& sur_cfg,
                                    const MpcConfig& mpc_cfg,
                                    const CaseStudy2Config& cfg, std::uint64_t seed) {
    struct CellRun {
        int size_idx;
        int rep;
        std::string model;
        double violation = 0.0;
        double cost = 0.0;
        bool ok = false;
    };

    const std::vector<std::string> names{"nn", "cqr", "bll"};
    std::vector<std::function<CellRun()>> jobs;
    for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
        for (int rep = 0; rep < cfg.repetitions; ++rep) {
            for (const std::string& name : names) {
                jobs.push_back([&, si, rep, name]() {
                    CellRun r;
                    r.size_idx = static_cast<int>(si);
                    r.rep = rep;
                    r.model = name;
                    try {
                        const std::uint64_t ds =
                            split_seed(seed, 1000 + 37 * si + static_cast<std::uint64_t>(rep));
                        DataGenConfig dc = cfg.data;
                        dc.n_samples = cfg.sizes[si];
                        dc.parallel = false;  // parallelism lives at the job level
                        const auto trajs = generate_data(params, settings, dc, ds);
                        const auto ds_built =
                            surrogate::build_narx_dataset(trajs, sur_cfg.narx, ds);
                        const Surrogate model = surrogate::train_surrogate(
                            surrogate::model_kind_from_string(name == "nn" ? "mlp" : name),
                            ds_built, sur_cfg, split_seed(ds, 7));
                        MpcConfig mc = mpc_cfg;
                        switch (model.kind) {
                            case ModelKind::mlp: mc.mode = mpc::UncertaintyMode::nominal; break;
                            case ModelKind::cqr: mc.mode = mpc::UncertaintyMode::cqr; break;
                            case ModelKind::bll: mc.mode = mpc::UncertaintyMode::bll; break;
                        }
                        const auto run = run_closed_loop(params, settings, model, mc,
                                                         cfg.loop, split_seed(ds, 11));
                        r.violation = run.report.violation_pct;
                        r.cost = run.report.avg_scaled_cost;
                        r.ok = true;
                    } catch (const std::exception& e) {
                        std::cerr << "case-study-2 cell failed (size " << cfg.sizes[si]
                                  << ", rep " << rep << ", " << name << "): " << e.what()
                                  << "\n";
                    }
                    return r;
                });
            }
        }
    }

    std::vector<CellRun> runs;
    if (cfg.parallel) {
        const std::size_t workers =
            std::min<std::size_t>(jobs.size(),
                                  std::max(1u, std::thread::hardware_concurrency()));
        std::vector<std::future<CellRun>> futs;
        std::size_t next = 0;
        while (next < jobs.size() || !futs.empty()) {
            while (next < jobs.size() && futs.size() < workers) {
                futs.push_back(std::async(std::launch::async, jobs[next]));
                ++next;
            }
            runs.push_back(futs.front().get());
            futs.erase(futs.begin());
        }
    } else {
        for (auto& job : jobs) runs.push_back(job());
    }

    std::vector<SweepCell> cells;
    for (std::size_t si = 0; si < cfg.sizes.size(); ++si) {
        for (const std::string& name : names) {
            SweepCell cell;
            cell.size = cfg.sizes[si];
            cell.model = name;
            for (const CellRun& r : runs) {
                if (r.ok && r.size_idx == static_cast<int>(si) && r.model == name) {
                    cell.violation_pct.push_back(r.violation);
                    cell.avg_cost.push_back(r.cost);
                }
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

double OpenClosedConfig::w_at(int step) const {
    double w = w_schedule.empty() ? 0.01 : w_schedule.front().second;
    for (const auto& [k, v] : w_schedule) {
        if (step >= k) w = v;
    }
    return w;
}

OpenClosedConfig OpenClosedConfig::from_json(const nlohmann::json& j) {
    OpenClosedConfig c;
    if (j.contains("steps")) c.steps = j.at("steps").get<int>();
    if (j.contains("warmup_s")) c.warmup_s = j.at("warmup_s").get<double>();
    if (j.contains("w_schedule")) {
        c.w_schedule.clear();
        for (const auto& e : j.at("w_schedule")) {
            c.w_schedule.emplace_back(e.at(0).get<int>(), e.at(1).get<double>());
        }
    }
    if (c.steps < 1) throw std::invalid_argument("open/closed config needs steps >= 1");
    return c;
}

nlohmann::json OpenClosedResult::to_json() const {
    return {{"open_loop_rms_m", open_loop_rms},
            {"closed_loop_rms_m", closed_loop_rms}};
}

OpenClosedResult open_vs_closed_loop(const PlantParams& params,
                                     const SimSettings& settings,
                                     const Surrogate& model, const MpcConfig& mpc_cfg,
                                     const OpenClosedConfig& cfg,
                                     std::uint64_t plant_seed) {
    if (!model.narx.use_disturbance) {
        throw std::invalid_argument(
            "open/closed-loop study needs a surrogate with the w_cryst channel");
    }
    if (!(mpc_cfg.gamma_track > 0.0)) {
        throw std::invalid_argument(
            "open/closed-loop study needs the d50 tracking cost (gamma_track > 0)");
    }

    OpenClosedResult out;

    // closed loop: receding horizon with the measured disturbance
    {
        auto w_of = [&](int k) { return cfg.w_at(k); };
        const auto run = run_loop(params, settings, model, mpc_cfg, cfg.steps,
                                  cfg.warmup_s, w_of, plant_seed);
        out.closed_loop_rms = run.rms_d50_tracking_error;
        out.closed_trajectory = run.trajectory;
    }

    // open loop: one plan from the initial state, full sequence applied
    {
        const int per_sample = steps_per_sample(settings);
        Simulator sim(params, settings, split_seed(plant_seed, 2));
        MpcConfig mc = mpc_cfg;
        mc.horizon = std::max(2, cfg.steps);
        Controller ctrl(model, mc);
        const int lag = model.narx.lag;

        Inputs u_nom = nominal_inputs(mpc_cfg, cfg.w_at(0));
        const int warm_periods = lag + 2;
        const int pre_steps =
            std::max(0, static_cast<int>(std::ceil(cfg.warmup_s / settings.dt)) -
                            warm_periods * per_sample);
        sim.run(u_nom, pre_steps);
        for (int k = 0; k < warm_periods; ++k) {
            sim.run(u_nom, per_sample);
            Eigen::VectorXd u_obs(4);
            u_obs << u_nom.Q_pm, u_nom.Q_air, u_nom.Q_tm, u_nom.w_cryst;
            ctrl.observe(meas_vector(sim.measurement()), u_obs);
        }

        // the plan only knows the disturbance value at planning time
        ctrl.state();  // warm
        const auto plan = [&] {
            // plan() expects a warm state; measurement already pushed via observe
            return ctrl.plan(cfg.steps, cfg.w_at(0));
        }();

        double se = 0.0;
        for (int k = 0; k < cfg.steps; ++k) {
            const Measurement meas = sim.measurement();
            const double w = cfg.w_at(k);
            Inputs u_plant;
            u_plant.Q_pm = plan.u_seq(k, 0);
            u_plant.Q_air = plan.u_seq(k, 1);
            u_plant.Q_tm = plan.u_seq(k, 2);
            u_plant.w_cryst = w;
            se += (meas.d50 - mpc_cfg.d50_ref) * (meas.d50 - mpc_cfg.d50_ref);
            out.open_trajectory.push(sim.time(), {u_plant.Q_pm, u_plant.Q_air,
                                                  u_plant.Q_tm, w},
                                     meas.y());
            sim.run(u_plant, per_sample);
        }
        out.open_loop_rms = std::sqrt(se / cfg.steps);
    }
    return out;
}

}  // namespace sfc::harness
