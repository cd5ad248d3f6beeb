#pragma once

#include "sfc/surrogate/narx_dataset.hpp"
#include "sfc/surrogate/training.hpp"

namespace sfc::surrogate {

// Conformalized quantile regression: lower/upper quantile heads at alpha/2
// and 1-alpha/2, a median (MAE) head, and per-output conformal offsets from
// a held-out calibration set. All three nets operate on normalized data.
struct CqrModel {
    MlpModel lo, mid, up;
    double alpha = 0.05;
    Eigen::VectorXd offsets;  // per output channel; empty until calibrated
    bool calibrated() const { return offsets.size() > 0; }

    struct Triple {
        Eigen::VectorXd lo, mid, up;
    };
    // Conformalized interval with the (lo, mid, up) triple sorted per output.
    Triple predict(const Eigen::VectorXd& x) const;
    // Batch version; rows are samples.
    void predict(const Eigen::MatrixXd& X, Eigen::MatrixXd& lo_out,
                 Eigen::MatrixXd& mid_out, Eigen::MatrixXd& up_out) const;
};

// Per-output conformity scores E_i = max(lo(X_i)-Y_i, Y_i-up(X_i)), offsets
// as the ceil((1-alpha)(n+1))-th order statistic. Requires >= 20 samples.
Eigen::VectorXd conformalize(CqrModel& model, const Eigen::MatrixXd& Xcal,
                             const Eigen::MatrixXd& Ycal);

// Conformity scores of one channel pair of predictions, exposed for tests.
double conformal_quantile(std::vector<double> scores, double alpha);

}  // namespace sfc::surrogate
