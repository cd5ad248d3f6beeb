#pragma once

#include <map>

#include "sfc/harness/excitation.hpp"
#include "sfc/mpc/controller.hpp"
#include "sfc/simulator.hpp"
#include "sfc/surrogate/surrogate.hpp"
#include "sfc/trajectory.hpp"

namespace sfc::harness {

using mpc::Controller;
using mpc::MpcConfig;
using surrogate::ModelKind;
using surrogate::Surrogate;

struct DataGenConfig {
    int n_samples = 12000;     // total across trajectories
    int n_trajectories = 4;
    double warmup_s = 4000.0;  // discarded before logging starts
    ExcitationPolicy excitation;
    bool parallel = true;

    static DataGenConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Open-loop excitation runs of the plant, logged at the NARX period.
std::vector<Trajectory> generate_data(const PlantParams& params,
                                      const SimSettings& settings,
                                      const DataGenConfig& cfg, std::uint64_t seed);

// Table-2-style metrics, computed at controller steps only. The scaled cost
// excludes the soft-constraint and input-move terms.
struct CaseStudyReport {
    double violation_pct = 0.0;
    double avg_rel_violation_pct = 0.0;
    double avg_scaled_cost = 0.0;
    double avg_solve_s = 0.0;
    double max_solve_s = 0.0;
    int steps = 0;
    int controller_failures = 0;

    nlohmann::json to_json() const;
};

struct ClosedLoopConfig {
    int steps = 120;
    double warmup_s = 7000.0;
    int disturbance_step = 35;   // < 0 disables the w_cryst step change
    double w_before = 0.01;
    double w_after = 0.001;

    static ClosedLoopConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

struct ClosedLoopResult {
    Trajectory trajectory;               // controller-period samples
    CaseStudyReport report;
    std::vector<std::string> mpc_log;
    double rms_d50_tracking_error = 0.0; // vs the config's d50 reference
};

ClosedLoopResult run_closed_loop(const PlantParams& params, const SimSettings& settings,
                                 const Surrogate& model, const MpcConfig& mpc_cfg,
                                 const ClosedLoopConfig& cfg, std::uint64_t plant_seed);

// Case study 1: identical scenario for the three model families.
std::map<std::string, ClosedLoopResult> case_study_1(
    const PlantParams& params, const SimSettings& settings,
    const std::map<std::string, Surrogate>& models, const MpcConfig& mpc_cfg,
    const ClosedLoopConfig& cfg, std::uint64_t plant_seed);

// Case study 2: dataset-size sweep with repetitions; box-plot statistics.
struct SweepCell {
    int size = 0;
    std::string model;
    std::vector<double> violation_pct;
    std::vector<double> avg_cost;

    nlohmann::json to_json() const;  // includes quartile summaries
};

struct CaseStudy2Config {
    std::vector<int> sizes{1500, 3000, 6000};
    int repetitions = 3;
    ClosedLoopConfig loop;
    DataGenConfig data;
    bool parallel = true;

    static CaseStudy2Config from_json(const nlohmann::json& j);
};

std::vector<SweepCell> case_study_2(const PlantParams& params,
                                    const SimSettings& settings,
                                    const surrogate::SurrogateConfig& sur_cfg,
                                    const MpcConfig& mpc_cfg,
                                    const CaseStudy2Config& cfg, std::uint64_t seed);

// Open- vs closed-loop comparison under a measured w_cryst disturbance with
// the d50 tracking cost.
struct OpenClosedConfig {
    int steps = 60;
    double warmup_s = 7000.0;
    // piecewise-constant schedule: (step, w) pairs, sorted by step
    std::vector<std::pair<int, double>> w_schedule{{0, 0.010}, {20, 0.004}, {40, 0.012}};

    double w_at(int step) const;
    static OpenClosedConfig from_json(const nlohmann::json& j);
};

struct OpenClosedResult {
    double open_loop_rms = 0.0;
    double closed_loop_rms = 0.0;
    Trajectory open_trajectory;
    Trajectory closed_trajectory;

    nlohmann::json to_json() const;
};

OpenClosedResult open_vs_closed_loop(const PlantParams& params,
                                     const SimSettings& settings,
                                     const Surrogate& model, const MpcConfig& mpc_cfg,
                                     const OpenClosedConfig& cfg,
                                     std::uint64_t plant_seed);

// box-plot statistics helper
struct Quartiles {
    double median = 0.0, q1 = 0.0, q3 = 0.0, lo = 0.0, hi = 0.0;
};
Quartiles quartiles(std::vector<double> v);

}  // namespace sfc::harness
