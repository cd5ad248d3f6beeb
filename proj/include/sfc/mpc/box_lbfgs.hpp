#pragma once

#include <Eigen/Dense>
#include <functional>

namespace sfc::mpc {

struct BoxSolverOptions {
    int max_iter = 200;
    double tol = 1e-9;        // projected-gradient infinity norm
    int memory = 10;          // L-BFGS pairs
    int max_linesearch = 40;
    double armijo_c1 = 1e-4;
    // invoked after every accepted step with (iteration, f)
    std::function<void(int, double)> on_iterate;
};

struct BoxSolverResult {
    Eigen::VectorXd x;
    double f = 0.0;
    double f_initial = 0.0;
    int iterations = 0;
    int evaluations = 0;
    bool converged = false;
};

// Objective with gradient: returns f(x) and fills grad.
using BoxObjective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

// Projected L-BFGS with Armijo backtracking on the projection arc.
// Iterates are always feasible; accepted steps strictly decrease f.
BoxSolverResult minimize_box(const BoxObjective& f, Eigen::VectorXd x0,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const BoxSolverOptions& opts);

}  // namespace sfc::mpc
