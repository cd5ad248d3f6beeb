#pragma once

#include "sfc/surrogate/narx_dataset.hpp"
#include "sfc/surrogate/training.hpp"

namespace sfc::surrogate {

// Bayesian last layer network: deterministic GELU feature net plus a
// Gaussian posterior over the final linear readout (one bias-augmented
// weight vector per output). Noise variance beta_eps is per output; the
// prior weight variance beta_w is a shared scalar.
struct BllModel {
    MlpModel net;               // feature layers (the net's own readout is
                                // used only for pretraining)
    Eigen::MatrixXd post_mean;  // (D+1) x n_out
    std::vector<Eigen::MatrixXd> post_cov;  // per output, (D+1) x (D+1)
    Eigen::VectorXd beta_eps;   // per-output noise variance
    double beta_w = 1.0;

    int feature_dim() const { return static_cast<int>(post_mean.rows()); }

    // Bias-augmented feature map phi(x).
    Eigen::VectorXd features_one(const Eigen::VectorXd& x) const;
    Eigen::MatrixXd features(const Eigen::MatrixXd& X) const;

    // Predictive mean and stddev; sigma^2 = phi' Cov phi + beta_eps.
    void predict(const Eigen::VectorXd& x, Eigen::VectorXd& mu,
                 Eigen::VectorXd& sigma) const;
    void predict(const Eigen::MatrixXd& X, Eigen::MatrixXd& mu,
                 Eigen::MatrixXd& sigma) const;
};

// Log marginal likelihood of the Bayesian linear readout over features
// Phi(X), summed across outputs, plus its gradients w.r.t. the hidden
// parameters and the log-noise parameters. Exposed for gradient checks.
struct BllEvidence {
    double log_evidence = 0.0;
    MlpModel::Grads hidden_grads;      // d(logev)/d(hidden W, b)
    Eigen::VectorXd d_log_beta_eps;    // per output
    double d_log_beta_w = 0.0;
    bool jittered = false;             // precision needed regularization
};

BllEvidence bll_evidence(const MlpModel& net, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& Y, const Eigen::VectorXd& beta_eps,
                         double beta_w, bool want_grads);

// Hidden-stack forward with caches; returns the bias-augmented feature
// matrix. Used by the controller to differentiate through predictions.
Eigen::MatrixXd bll_feature_forward(const MlpModel& net, const Eigen::MatrixXd& X,
                                    std::vector<Eigen::MatrixXd>& a,
                                    std::vector<Eigen::MatrixXd>& z);

// Input gradient of the hidden stack; dPhi excludes the bias column.
Eigen::MatrixXd bll_feature_input_grad(const MlpModel& net,
                                       const std::vector<Eigen::MatrixXd>& z,
                                       const Eigen::MatrixXd& dPhi);

struct BllTrainConfig {
    TrainConfig pretrain;       // MSE warm start of the feature net
    double lr = 3e-3;
    int max_iters = 600;        // full-batch evidence ascent steps
    int patience = 80;          // on validation MSE of the posterior mean
    double beta_eps_init = 0.05;
    double beta_w_init = 1.0;
    std::uint64_t seed = 1;
};

// Trains hidden weights and noise parameters by maximizing the evidence,
// then freezes the closed-form posterior computed on the training data.
void bll_train(BllModel& model, const Eigen::MatrixXd& Xtr, const Eigen::MatrixXd& Ytr,
               const Eigen::MatrixXd& Xval, const Eigen::MatrixXd& Yval,
               const BllTrainConfig& cfg);

// Posterior over the readout weights for fixed features; exposed for tests.
void bll_posterior(BllModel& model, const Eigen::MatrixXd& Xtr,
                   const Eigen::MatrixXd& Ytr);

}  // namespace sfc::surrogate
