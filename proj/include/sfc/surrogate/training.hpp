#pragma once

#include <Eigen/Dense>
#include <functional>

#include "sfc/surrogate/mlp.hpp"

namespace sfc::surrogate {

// Mean over samples and outputs of the squared error. When dYhat is given,
// it receives dLoss/dYhat.
double mse_loss(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                Eigen::MatrixXd* dYhat = nullptr);

// Pinball (quantile) loss for target quantile tau, averaged over samples
// and outputs: tau*(Y-Yhat) on under-prediction, (1-tau)*(Yhat-Y) otherwise.
double pinball_loss_tau(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                        double tau, Eigen::MatrixXd* dYhat = nullptr);

// The printed miscoverage form: weights alpha/2 and 1-alpha/2. Targets the
// alpha/2 quantile; the upper head uses pinball_loss_tau with 1-alpha/2.
double pinball_loss(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                    double alpha, Eigen::MatrixXd* dYhat = nullptr);

class Adam {
  public:
    Adam(Eigen::Index n, double lr) : lr_(lr) {
        m_ = Eigen::VectorXd::Zero(n);
        v_ = Eigen::VectorXd::Zero(n);
    }
    void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);

  private:
    double lr_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    long t_ = 0;
    Eigen::VectorXd m_, v_;
};

struct TrainConfig {
    double lr = 1e-3;
    int batch_size = 128;
    int max_epochs = 800;
    int patience = 60;  // epochs without validation improvement
    std::uint64_t seed = 1;
};

struct TrainResult {
    double best_val_loss = 0.0;
    int epochs = 0;
    bool early_stopped = false;
};

using LossFn = std::function<double(const Eigen::MatrixXd&, const Eigen::MatrixXd&,
                                    Eigen::MatrixXd*)>;

// Minibatch Adam on the given loss with early stopping on validation loss;
// the model is left at the best-validation weights. Throws on nonfinite loss.
TrainResult train_regression(MlpModel& model, const Eigen::MatrixXd& Xtr,
                             const Eigen::MatrixXd& Ytr, const Eigen::MatrixXd& Xval,
                             const Eigen::MatrixXd& Yval, const LossFn& loss,
                             const TrainConfig& cfg);

}  // namespace sfc::surrogate
