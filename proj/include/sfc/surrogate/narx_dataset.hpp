#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sfc/rng.hpp"
#include "sfc/trajectory.hpp"

namespace sfc::surrogate {

inline constexpr int kNumMeasurements = 6;  // T_PM, T_TM, c_PM, d10, d50, d90

// Per-channel z-score statistics, computed on the training split only.
// Labels share the measurement-channel statistics.
struct Normalization {
    Eigen::VectorXd y_mean, y_std;  // size 6
    Eigen::VectorXd u_mean, u_std;  // size n_u

    Eigen::VectorXd standardize_y(const Eigen::VectorXd& y) const {
        return (y - y_mean).cwiseQuotient(y_std);
    }
    Eigen::VectorXd destandardize_y(const Eigen::VectorXd& yn) const {
        return yn.cwiseProduct(y_std) + y_mean;
    }
    Eigen::VectorXd standardize_u(const Eigen::VectorXd& u) const {
        return (u - u_mean).cwiseQuotient(u_std);
    }
};

struct NarxConfig {
    int lag = 4;
    double sample_period = 50.0;     // [s]
    bool use_disturbance = false;    // append w_cryst as a 4th input channel
    double test_frac = 0.16;         // chronological tail of each trajectory
    double val_frac = 0.10;          // of the shuffled remainder
    double calib_frac = 0.15;        // of the shuffled remainder

    int n_u() const { return use_disturbance ? 4 : 3; }
    int feature_length() const { return (lag + 1) * (kNumMeasurements + n_u()); }
};

// Flattened lagged windows. Row i of X is
// (y_k, ..., y_{k-l}, u_k, ..., u_{k-l}); row i of Y is y_{k+1}.
// X and Y hold raw physical values; normalization is applied by the models.
struct NarxDataset {
    Eigen::MatrixXd X, Y;
    std::vector<int> train_idx, val_idx, calib_idx, test_idx;
    Normalization norm;
    NarxConfig config;
    // raw chronological test segments for simulation-mode evaluation
    std::vector<Trajectory> test_segments;

    Eigen::MatrixXd rows(const std::vector<int>& idx, const Eigen::MatrixXd& M) const {
        Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), M.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = M.row(idx[i]);
        return out;
    }
    Eigen::MatrixXd x_of(const std::vector<int>& idx) const { return rows(idx, X); }
    Eigen::MatrixXd y_of(const std::vector<int>& idx) const { return rows(idx, Y); }

    // normalized split matrices
    Eigen::MatrixXd xn_of(const std::vector<int>& idx) const;
    Eigen::MatrixXd yn_of(const std::vector<int>& idx) const;
};

// Builds one window matrix from trajectories sampled at the configured
// period. Windows never span trajectory boundaries. The chronological tail
// of each trajectory goes to the test split; the remainder is shuffled into
// train/validation/calibration.
NarxDataset build_narx_dataset(const std::vector<Trajectory>& trajs,
                               const NarxConfig& cfg, std::uint64_t seed);

// Window feature vector for a single step, same layout as dataset rows.
Eigen::VectorXd assemble_window(const std::vector<Eigen::VectorXd>& y_newest_first,
                                const std::vector<Eigen::VectorXd>& u_newest_first,
                                int lag);

}  // namespace sfc::surrogate
