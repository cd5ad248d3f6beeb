#include "sfc/surrogate/bll.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace sfc::surrogate {

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

int n_feature_layers(const MlpModel& net) { return net.n_layers() - 1; }

// Forward through the hidden stack only (every layer GELU-activated).
void feature_forward(const MlpModel& net, const Eigen::MatrixXd& X,
                     std::vector<Eigen::MatrixXd>& a, std::vector<Eigen::MatrixXd>& z) {
    a.clear();
    z.clear();
    a.push_back(X);
    for (int l = 0; l < n_feature_layers(net); ++l) {
        Eigen::MatrixXd zl = (a.back() * net.W[l].transpose()).rowwise() +
                             net.b[l].transpose();
        a.push_back(zl.unaryExpr([](double v) { return gelu(v); }));
        z.push_back(std::move(zl));
    }
}

// Backward of dL/dPhi through the hidden stack; accumulates into grads.
void feature_backward(const MlpModel& net, const std::vector<Eigen::MatrixXd>& a,
                      const std::vector<Eigen::MatrixXd>& z, Eigen::MatrixXd delta,
                      MlpModel::Grads& grads) {
    for (int l = n_feature_layers(net) - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(
            z[static_cast<std::size_t>(l)].unaryExpr([](double v) { return gelu_grad(v); }));
        grads.dW[l] += delta.transpose() * a[static_cast<std::size_t>(l)];
        grads.db[l] += delta.colwise().sum().transpose();
        if (l > 0) delta = delta * net.W[l];
    }
}

Eigen::MatrixXd augment_bias(const Eigen::MatrixXd& phi) {
    Eigen::MatrixXd out(phi.rows(), phi.cols() + 1);
    out.leftCols(phi.cols()) = phi;
    out.col(phi.cols()).setOnes();
    return out;
}

}  // namespace

Eigen::MatrixXd bll_feature_forward(const MlpModel& net, const Eigen::MatrixXd& X,
                                    std::vector<Eigen::MatrixXd>& a,
                                    std::vector<Eigen::MatrixXd>& z) {
    feature_forward(net, X, a, z);
    return augment_bias(a.back());
}

Eigen::MatrixXd bll_feature_input_grad(const MlpModel& net,
                                       const std::vector<Eigen::MatrixXd>& z,
                                       const Eigen::MatrixXd& dPhi) {
    Eigen::MatrixXd delta = dPhi;
    for (int l = n_feature_layers(net) - 1; l >= 0; --l) {
        delta = delta.cwiseProduct(
            z[static_cast<std::size_t>(l)].unaryExpr([](double v) { return gelu_grad(v); }));
        delta = delta * net.W[l];
    }
    return delta;
}

Eigen::MatrixXd BllModel::features(const Eigen::MatrixXd& X) const {
    return augment_bias(net.hidden_features(X));
}

Eigen::VectorXd BllModel::features_one(const Eigen::VectorXd& x) const {
    return features(x.transpose()).row(0).transpose();
}

void BllModel::predict(const Eigen::VectorXd& x, Eigen::VectorXd& mu,
                       Eigen::VectorXd& sigma) const {
    const Eigen::VectorXd phi = features_one(x);
    const Eigen::Index n_out = post_mean.cols();
    mu.resize(n_out);
    sigma.resize(n_out);
    for (Eigen::Index c = 0; c < n_out; ++c) {
        mu(c) = post_mean.col(c).dot(phi);
        const double var = phi.dot(post_cov[static_cast<std::size_t>(c)] * phi) +
                           beta_eps(c);
        sigma(c) = std::sqrt(var);
    }
}

void BllModel::predict(const Eigen::MatrixXd& X, Eigen::MatrixXd& mu,
                       Eigen::MatrixXd& sigma) const {
    const Eigen::MatrixXd Phi = features(X);
    const Eigen::Index n_out = post_mean.cols();
    mu = Phi * post_mean;
    sigma.resize(X.rows(), n_out);
    for (Eigen::Index c = 0; c < n_out; ++c) {
        const Eigen::MatrixXd PhiC = Phi * post_cov[static_cast<std::size_t>(c)];
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            sigma(i, c) = std::sqrt(PhiC.row(i).dot(Phi.row(i)) + beta_eps(c));
        }
    }
}

BllEvidence bll_evidence(const MlpModel& net, const Eigen::MatrixXd& X,
                         const Eigen::MatrixXd& Y, const Eigen::VectorXd& beta_eps,
                         double beta_w, bool want_grads) {
    const Eigen::Index N = X.rows();
    const Eigen::Index n_out = Y.cols();

    std::vector<Eigen::MatrixXd> a, z;
    feature_forward(net, X, a, z);
    const Eigen::MatrixXd Phi = augment_bias(a.back());
    const Eigen::Index D = Phi.cols();

    const Eigen::MatrixXd PhiTPhi = Phi.transpose() * Phi;

    BllEvidence ev;
    if (want_grads) {
        ev.hidden_grads = net.zero_grads();
        ev.d_log_beta_eps = Eigen::VectorXd::Zero(n_out);
    }
    Eigen::MatrixXd dPhi;
    if (want_grads) dPhi = Eigen::MatrixXd::Zero(N, D);

    for (Eigen::Index c = 0; c < n_out; ++c) {
        const double be = beta_eps(c);
        Eigen::MatrixXd P = PhiTPhi / be;
        P.diagonal().array() += 1.0 / beta_w;

        Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            P.diagonal().array() += 1e-10;
            ldlt.compute(P);
            ev.jittered = true;
        }

        const Eigen::VectorXd rhs = Phi.transpose() * Y.col(c) / be;
        const Eigen::VectorXd m = ldlt.solve(rhs);
        const Eigen::VectorXd r = Y.col(c) - Phi * m;

        // log det from the LDLT diagonal
        double logdet = 0.0;
        for (Eigen::Index i = 0; i < D; ++i) {
            logdet += std::log(ldlt.vectorD()(i));
        }

        const double E = r.squaredNorm() / (2.0 * be) + m.squaredNorm() / (2.0 * beta_w);
        ev.log_evidence += -0.5 * N * kLog2Pi - 0.5 * N * std::log(be) -
                           0.5 * D * std::log(beta_w) - E - 0.5 * logdet;

        if (want_grads) {
            const Eigen::MatrixXd Cov = ldlt.solve(Eigen::MatrixXd::Identity(D, D));
            dPhi.noalias() += (r * m.transpose()) / be;
            dPhi.noalias() -= (Phi * Cov) / be;

            const double tr_cov_phitphi = (Cov.cwiseProduct(PhiTPhi)).sum();
            const double d_be = -0.5 * N / be + r.squaredNorm() / (2.0 * be * be) +
                                tr_cov_phitphi / (2.0 * be * be);
            ev.d_log_beta_eps(c) = d_be * be;

            const double d_bw = -0.5 * D / beta_w +
                                m.squaredNorm() / (2.0 * beta_w * beta_w) +
                                Cov.trace() / (2.0 * beta_w * beta_w);
            ev.d_log_beta_w += d_bw * beta_w;
        }
    }

    if (want_grads) {
        // drop the bias column before backpropagating through the stack
        feature_backward(net, a, z, dPhi.leftCols(D - 1), ev.hidden_grads);
    }
    return ev;
}

void bll_posterior(BllModel& model, const Eigen::MatrixXd& Xtr,
                   const Eigen::MatrixXd& Ytr) {
    const Eigen::MatrixXd Phi = model.features(Xtr);
    const Eigen::Index D = Phi.cols();
    const Eigen::Index n_out = Ytr.cols();
    const Eigen::MatrixXd PhiTPhi = Phi.transpose() * Phi;

    model.post_mean.resize(D, n_out);
    model.post_cov.assign(static_cast<std::size_t>(n_out), Eigen::MatrixXd());
    for (Eigen::Index c = 0; c < n_out; ++c) {
        const double be = model.beta_eps(c);
        Eigen::MatrixXd P = PhiTPhi / be;
        P.diagonal().array() += 1.0 / model.beta_w;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(P);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
            P.diagonal().array() += 1e-10;
            ldlt.compute(P);
            std::cerr << "bll: posterior precision needed jitter\n";
        }
        model.post_mean.col(c) = ldlt.solve(Phi.transpose() * Ytr.col(c) / be);
        model.post_cov[static_cast<std::size_t>(c)] =
            ldlt.solve(Eigen::MatrixXd::Identity(D, D));
    }
}

void bll_train(BllModel& model, const Eigen::MatrixXd& Xtr, const Eigen::MatrixXd& Ytr,
               const Eigen::MatrixXd& Xval, const Eigen::MatrixXd& Yval,
               const BllTrainConfig& cfg) {
    // MSE warm start of the whole net (readout discarded afterwards)
    train_regression(model.net, Xtr, Ytr, Xval, Yval,
                     [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yh,
                        Eigen::MatrixXd* d) { return mse_loss(Y, Yh, d); },
                     cfg.pretrain);

    const Eigen::Index n_out = Ytr.cols();
    model.beta_eps = Eigen::VectorXd::Constant(n_out, cfg.beta_eps_init);
    model.beta_w = cfg.beta_w_init;

    // parameter vector: hidden weights, then log beta_eps, then log beta_w
    const int n_hidden_layers = model.net.n_layers() - 1;
    auto pack = [&]() {
        std::vector<double> v;
        for (int l = 0; l < n_hidden_layers; ++l) {
            const auto& W = model.net.W[l];
            v.insert(v.end(), W.data(), W.data() + W.size());
            const auto& b = model.net.b[l];
            v.insert(v.end(), b.data(), b.data() + b.size());
        }
        for (Eigen::Index c = 0; c < n_out; ++c) v.push_back(std::log(model.beta_eps(c)));
        v.push_back(std::log(model.beta_w));
        return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()))
            .eval();
    };
    auto unpack = [&](const Eigen::VectorXd& th) {
        Eigen::Index off = 0;
        for (int l = 0; l < n_hidden_layers; ++l) {
            auto& W = model.net.W[l];
            Eigen::Map<Eigen::VectorXd>(W.data(), W.size()) = th.segment(off, W.size());
            off += W.size();
            auto& b = model.net.b[l];
            b = th.segment(off, b.size());
            off += b.size();
        }
        for (Eigen::Index c = 0; c < n_out; ++c) {
            model.beta_eps(c) = std::exp(std::clamp(th(off++), -16.0, 8.0));
        }
        model.beta_w = std::exp(std::clamp(th(off), -16.0, 8.0));
    };

    Eigen::VectorXd theta = pack();
    Adam opt(theta.size(), cfg.lr);

    double best_val = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_theta = theta;
    int since_best = 0;
    const double inv_n = 1.0 / static_cast<double>(Xtr.rows());

    for (int it = 0; it < cfg.max_iters; ++it) {
        const BllEvidence ev =
            bll_evidence(model.net, Xtr, Ytr, model.beta_eps, model.beta_w, true);
        if (!std::isfinite(ev.log_evidence)) {
            throw std::runtime_error("bll training diverged: nonfinite evidence");
        }

        // minimize the negative mean evidence
        Eigen::VectorXd grad(theta.size());
        Eigen::Index off = 0;
        for (int l = 0; l < n_hidden_layers; ++l) {
            const auto& dW = ev.hidden_grads.dW[l];
            grad.segment(off, dW.size()) =
                -inv_n * Eigen::Map<const Eigen::VectorXd>(dW.data(), dW.size());
            off += dW.size();
            const auto& db = ev.hidden_grads.db[l];
            grad.segment(off, db.size()) = -inv_n * db;
            off += db.size();
        }
        grad.segment(off, n_out) = -inv_n * ev.d_log_beta_eps;
        grad(off + n_out) = -inv_n * ev.d_log_beta_w;

        opt.step(theta, grad);
        unpack(theta);

        // early stopping on validation predictive log loss, which tracks
        // both the mean fit and the noise calibration
        if ((it + 1) % 5 == 0 || it + 1 == cfg.max_iters) {
            bll_posterior(model, Xtr, Ytr);
            Eigen::MatrixXd mu_val, sg_val;
            model.predict(Xval, mu_val, sg_val);
            double val = 0.0;
            for (Eigen::Index i = 0; i < Yval.size(); ++i) {
                const double s2 = sg_val.data()[i] * sg_val.data()[i];
                const double r = Yval.data()[i] - mu_val.data()[i];
                val += 0.5 * std::log(s2) + r * r / (2.0 * s2);
            }
            val /= static_cast<double>(Yval.size());
            if (val < best_val) {
                best_val = val;
                best_theta = theta;
                since_best = 0;
            } else if (++since_best * 5 >= cfg.patience) {
                break;
            }
        }
    }

    unpack(best_theta);
    bll_posterior(model, Xtr, Ytr);
}

}  // namespace sfc::surrogate
