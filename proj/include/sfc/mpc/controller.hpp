#pragma once

#include <deque>
#include <filesystem>
#include <optional>

#include "sfc/mpc/box_lbfgs.hpp"
#include "sfc/surrogate/surrogate.hpp"

namespace sfc::mpc {

using surrogate::Surrogate;

enum class UncertaintyMode { nominal, cqr, bll };

std::string to_string(UncertaintyMode m);
UncertaintyMode mode_from_string(const std::string& s);

struct MpcConfig {
    int horizon = 10;           // prediction steps
    double gamma1 = 1.0;        // d50 reward
    double gamma2 = 1.0;        // Q_pm reward
    double gamma3 = 0.5;        // Q_tm penalty
    double gamma4 = 10.0;       // input-move penalty
    double d90_max = 8.0e-4;    // [m]
    double rho_soft = 100.0;    // soft-constraint weight
    double d_scale = 1.0e-4;    // [m] per cost unit for diameters
    Eigen::Vector3d u_lo{1.667e-8, 1.667e-8, 8.333e-7};   // Q_pm, Q_air, Q_tm
    Eigen::Vector3d u_hi{6.667e-8, 6.667e-8, 5.0e-6};
    UncertaintyMode mode = UncertaintyMode::nominal;
    double m_sigma = 2.0;       // BLL branch width
    double alpha = 0.05;        // CQR miscoverage (metadata; offsets live in the model)
    double control_period = 50.0;  // [s]
    int max_iterations = 120;
    double tolerance = 1e-8;
    // d50 tracking variant (open/closed-loop study); 0 disables
    double gamma_track = 0.0;
    double d50_ref = 5.0e-4;    // [m]

    void validate() const;
    static MpcConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Ring buffer of the measurement/input history that seeds the NARX window.
class NarxState {
  public:
    NarxState() = default;
    explicit NarxState(int lag) : lag_(lag) {}

    // Records a measurement together with the input that was applied over
    // the interval ending at it.
    void push(const Eigen::VectorXd& y_meas, const Eigen::VectorXd& u_applied);
    bool warm() const;
    int lag() const { return lag_; }

    // newest first, length lag+1 once warm
    const std::deque<Eigen::VectorXd>& y_history() const { return y_; }
    // newest first: inputs applied at the current and previous steps
    const std::deque<Eigen::VectorXd>& u_history() const { return u_; }

  private:
    int lag_ = 4;
    std::deque<Eigen::VectorXd> y_;
    std::deque<Eigen::VectorXd> u_;
};

// Branched normalized state trajectories sharing one input sequence.
struct ScenarioTree {
    // branch -> (horizon+1) x 6 normalized measurements; row 0 is the
    // current measurement, identical across branches
    std::vector<Eigen::MatrixXd> branches;
    int n_branches() const { return static_cast<int>(branches.size()); }
};

struct MpcSolution {
    Eigen::Vector3d u_apply;            // first input, physical units
    Eigen::MatrixXd u_seq;              // horizon x 3, physical units
    ScenarioTree tree;                  // predicted trajectories
    double objective = 0.0;
    double objective_initial = 0.0;     // at the warm-started first iterate
    double solve_time_s = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
    double max_slack = 0.0;             // scaled d90 units
    Eigen::Vector3d d90_first;          // predicted d90 at k=1 per branch [m]
};

// One-step branch generation at the current NARX window (normalized in/out).
// Order follows the scenario-tree definition: upper, mid, lower.
std::vector<Eigen::VectorXd> branch(const Surrogate& model,
                                    const Eigen::VectorXd& xn, UncertaintyMode mode,
                                    double m_sigma);

class Controller {
  public:
    Controller(Surrogate model, MpcConfig config);

    const MpcConfig& config() const { return cfg_; }
    const Surrogate& model() const { return model_; }
    NarxState& state() { return state_; }
    const NarxState& state() const { return state_; }

    // Warm-up bookkeeping before the first solve. u_applied is the input
    // active over the interval that ended at this measurement; it also
    // seeds the previous-input reference of the move penalty.
    void observe(const Eigen::VectorXd& y_meas, const Eigen::VectorXd& u_applied);

    void set_previous_input(const Eigen::Vector3d& u);

    // Receding-horizon step: push the measurement, solve, apply the first
    // input. w_current is the measured disturbance (used only when the
    // model has a disturbance channel).
    const MpcSolution& step(const Eigen::VectorXd& y_meas, double t,
                            double w_current = 0.0);

    // One open-loop plan of `horizon` steps from the current state without
    // advancing the controller; w_forecast is held over the horizon.
    MpcSolution plan(int horizon, double w_current = 0.0) const;

    const MpcSolution& last_solution() const { return last_; }
    const std::vector<std::string>& log_lines() const { return log_; }
    void write_log(const std::filesystem::path& path) const;

    // Objective and gradient over the normalized input sequence; exposed
    // for the gradient oracle tests.
    double objective_and_grad(const Eigen::VectorXd& u_flat_norm,
                              Eigen::VectorXd* grad, int horizon,
                              double w_current) const;

    // Forward-only tree evaluation for a given physical input sequence.
    ScenarioTree rollout(const Eigen::MatrixXd& u_seq_phys, double w_current) const;
    double objective(const ScenarioTree& tree, const Eigen::MatrixXd& u_seq_phys) const;

  private:
    MpcSolution solve(int horizon, double w_current) const;

    Surrogate model_;
    MpcConfig cfg_;
    NarxState state_;
    Eigen::Vector3d prev_u_;
    bool have_prev_u_ = false;
    mutable std::optional<Eigen::VectorXd> warm_start_;  // normalized flat
    MpcSolution last_;
    std::vector<std::string> log_;
};

inline constexpr const char* kMpcLogHeader =
    "t,Q_PM,Q_air,Q_TM,d90_b1,d90_b2,d90_b3,slack,objective,solve_time_s,status";

}  // namespace sfc::mpc
