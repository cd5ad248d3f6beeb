#include "sfc/surrogate/training.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace sfc::surrogate {

double mse_loss(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                Eigen::MatrixXd* dYhat) {
    const double n = static_cast<double>(Y.size());
    const Eigen::MatrixXd r = Yhat - Y;
    if (dYhat) *dYhat = (2.0 / n) * r;
    return r.squaredNorm() / n;
}

double pinball_loss_tau(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                        double tau, Eigen::MatrixXd* dYhat) {
    if (!(tau > 0.0 && tau < 1.0)) {
        throw std::invalid_argument("pinball loss needs tau in (0, 1)");
    }
    const double n = static_cast<double>(Y.size());
    double loss = 0.0;
    if (dYhat) dYhat->resize(Y.rows(), Y.cols());
    for (Eigen::Index i = 0; i < Y.size(); ++i) {
        const double r = Y.data()[i] - Yhat.data()[i];
        if (r > 0.0) {
            loss += tau * r;
            if (dYhat) dYhat->data()[i] = -tau / n;
        } else {
            loss += (1.0 - tau) * (-r);
            if (dYhat) dYhat->data()[i] = (1.0 - tau) / n;
        }
    }
    return loss / n;
}

double pinball_loss(const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yhat,
                    double alpha, Eigen::MatrixXd* dYhat) {
    if (!(alpha > 0.0 && alpha < 1.0)) {
        throw std::invalid_argument("pinball loss needs alpha in (0, 1)");
    }
    return pinball_loss_tau(Y, Yhat, alpha / 2.0, dYhat);
}

void Adam::step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    theta -= (lr_ / bc1) * m_.cwiseQuotient(
                 ((v_ / bc2).cwiseSqrt().array() + eps_).matrix());
}

TrainResult train_regression(MlpModel& model, const Eigen::MatrixXd& Xtr,
                             const Eigen::MatrixXd& Ytr, const Eigen::MatrixXd& Xval,
                             const Eigen::MatrixXd& Yval, const LossFn& loss,
                             const TrainConfig& cfg) {
    const Eigen::Index n = Xtr.rows();
    if (n == 0) throw std::invalid_argument("empty training set");

    Rng rng(split_seed(cfg.seed, 0x7124));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    Eigen::VectorXd theta = model.flatten();
    Adam opt(theta.size(), cfg.lr);

    TrainResult res;
    Eigen::VectorXd best_theta = theta;
    double best_val = std::numeric_limits<double>::infinity();
    int since_best = 0;

    const int bs = std::max(1, cfg.batch_size);
    MlpModel::Cache cache;
    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (Eigen::Index start = 0; start < n; start += bs) {
            const Eigen::Index m = std::min<Eigen::Index>(bs, n - start);
            Eigen::MatrixXd Xb(m, Xtr.cols()), Yb(m, Ytr.cols());
            for (Eigen::Index i = 0; i < m; ++i) {
                Xb.row(i) = Xtr.row(order[static_cast<std::size_t>(start + i)]);
                Yb.row(i) = Ytr.row(order[static_cast<std::size_t>(start + i)]);
            }
            const Eigen::MatrixXd Yhat = model.forward_cached(Xb, cache);
            Eigen::MatrixXd dY;
            const double l = loss(Yb, Yhat, &dY);
            if (!std::isfinite(l)) {
                throw std::runtime_error(
                    "training diverged: nonfinite loss at epoch " +
                    std::to_string(epoch));
            }
            MlpModel::Grads grads = model.zero_grads();
            model.backward(cache, dY, grads);
            theta = model.flatten();
            opt.step(theta, MlpModel::flatten_grads(grads));
            model.unflatten(theta);
        }

        const double val = loss(Yval, model.forward(Xval), nullptr);
        if (!std::isfinite(val)) {
            throw std::runtime_error("training diverged: nonfinite validation loss");
        }
        res.epochs = epoch + 1;
        if (val < best_val) {
            best_val = val;
            best_theta = model.flatten();
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            res.early_stopped = true;
            break;
        }
    }

    model.unflatten(best_theta);
    res.best_val_loss = best_val;
    return res;
}

}  // namespace sfc::surrogate
