#include <doctest.h>

#include "sfc/surrogate/training.hpp"

using namespace sfc;
using namespace sfc::surrogate;

namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, Rng& rng, double s = 1.0) {
    std::normal_distribution<double> unit(0.0, s);
    Eigen::MatrixXd M(r, c);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = unit(rng);
    return M;
}

// Central finite differences of a scalar loss w.r.t. the parameter vector.
Eigen::VectorXd fd_gradient(MlpModel& model, const Eigen::MatrixXd& X,
                            const Eigen::MatrixXd& Y, const LossFn& loss, double h) {
    Eigen::VectorXd theta = model.flatten();
    Eigen::VectorXd g(theta.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        Eigen::VectorXd tp = theta, tm = theta;
        tp(i) += h;
        tm(i) -= h;
        model.unflatten(tp);
        const double fp = loss(Y, model.forward(X), nullptr);
        model.unflatten(tm);
        const double fm = loss(Y, model.forward(X), nullptr);
        g(i) = (fp - fm) / (2.0 * h);
    }
    model.unflatten(theta);
    return g;
}

double max_rel_err(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double scale = std::max({std::abs(a(i)), std::abs(b(i)), 1e-8});
        worst = std::max(worst, std::abs(a(i) - b(i)) / scale);
    }
    return worst;
}

}  // namespace

TEST_CASE("gelu sanity") {
    CHECK(gelu(0.0) == 0.0);
    CHECK(std::abs(gelu(10.0) - 10.0) < 1e-4);
    // increasing from the stationary point at ~-0.7518 onward
    double prev = gelu(-0.7517);
    for (double x = -0.7517 + 0.01; x <= 4.0; x += 0.01) {
        const double g = gelu(x);
        CHECK(g >= prev);
        prev = g;
    }
    // derivative matches finite differences
    for (double x : {-2.0, -0.5, 0.0, 0.3, 1.7}) {
        const double fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
        CHECK(gelu_grad(x) == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("mse gradient matches finite differences") {
    Rng rng(21);
    MlpModel net = MlpModel::create({5, 4, 3}, rng);
    const Eigen::MatrixXd X = random_matrix(7, 5, rng);
    const Eigen::MatrixXd Y = random_matrix(7, 3, rng);

    MlpModel::Cache cache;
    const Eigen::MatrixXd Yhat = net.forward_cached(X, cache);
    Eigen::MatrixXd dY;
    mse_loss(Y, Yhat, &dY);
    auto grads = net.zero_grads();
    net.backward(cache, dY, grads);

    const auto loss = [](const Eigen::MatrixXd& Yt, const Eigen::MatrixXd& Yh,
                         Eigen::MatrixXd* d) { return mse_loss(Yt, Yh, d); };
    const Eigen::VectorXd fd = fd_gradient(net, X, Y, loss, 1e-6);
    CHECK(max_rel_err(MlpModel::flatten_grads(grads), fd) < 1e-5);
}

TEST_CASE("pinball gradient matches finite differences") {
    Rng rng(22);
    MlpModel net = MlpModel::create({4, 6, 2}, rng);
    const Eigen::MatrixXd X = random_matrix(9, 4, rng);
    const Eigen::MatrixXd Y = random_matrix(9, 2, rng);
    const double tau = 0.025;

    MlpModel::Cache cache;
    const Eigen::MatrixXd Yhat = net.forward_cached(X, cache);
    Eigen::MatrixXd dY;
    pinball_loss_tau(Y, Yhat, tau, &dY);
    auto grads = net.zero_grads();
    net.backward(cache, dY, grads);

    const auto loss = [tau](const Eigen::MatrixXd& Yt, const Eigen::MatrixXd& Yh,
                            Eigen::MatrixXd* d) { return pinball_loss_tau(Yt, Yh, tau, d); };
    const Eigen::VectorXd fd = fd_gradient(net, X, Y, loss, 1e-7);
    CHECK(max_rel_err(MlpModel::flatten_grads(grads), fd) < 1e-4);
}

TEST_CASE("input gradient matches finite differences") {
    Rng rng(23);
    MlpModel net = MlpModel::create({5, 8, 3}, rng);
    const Eigen::MatrixXd X = random_matrix(1, 5, rng);
    const Eigen::MatrixXd Y = random_matrix(1, 3, rng);

    MlpModel::Cache cache;
    Eigen::MatrixXd dY;
    mse_loss(Y, net.forward_cached(X, cache), &dY);
    auto grads = net.zero_grads();
    const Eigen::MatrixXd dX = net.backward(cache, dY, grads);

    for (int i = 0; i < 5; ++i) {
        Eigen::MatrixXd Xp = X, Xm = X;
        Xp(0, i) += 1e-6;
        Xm(0, i) -= 1e-6;
        const double fd = (mse_loss(Y, net.forward(Xp)) - mse_loss(Y, net.forward(Xm))) / 2e-6;
        CHECK(dX(0, i) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("pinball loss values") {
    Eigen::MatrixXd Y(1, 1), Yhat(1, 1);
    Y << 1.0;
    Yhat << 1.0;
    CHECK(pinball_loss(Y, Yhat, 0.05) == doctest::Approx(0.0));
    Yhat << 0.8;
    CHECK(pinball_loss(Y, Yhat, 0.05) == doctest::Approx(0.005).epsilon(1e-12));
    Y << 0.8;
    Yhat << 1.0;
    CHECK(pinball_loss(Y, Yhat, 0.05) == doctest::Approx(0.195).epsilon(1e-12));
}

TEST_CASE("linear net recovers an identity column") {
    Rng rng(24);
    const Eigen::MatrixXd X = random_matrix(300, 3, rng);
    const Eigen::MatrixXd Y = X.col(0);  // label = first feature

    MlpModel net = MlpModel::create({3, 1}, rng);
    TrainConfig tc;
    tc.lr = 0.02;
    tc.max_epochs = 400;
    tc.patience = 400;
    tc.seed = 5;
    train_regression(net, X, Y, X, Y,
                     [](const Eigen::MatrixXd& Yt, const Eigen::MatrixXd& Yh,
                        Eigen::MatrixXd* d) { return mse_loss(Yt, Yh, d); },
                     tc);
    CHECK(net.W[0](0, 0) == doctest::Approx(1.0).epsilon(2e-3));
    CHECK(mse_loss(Y, net.forward(X)) < 1e-5);
}

TEST_CASE("zero-variance labels fit with constant bias") {
    Rng rng(25);
    const Eigen::MatrixXd X = random_matrix(100, 4, rng);
    const Eigen::MatrixXd Y = Eigen::MatrixXd::Constant(100, 2, 0.7);
    MlpModel net = MlpModel::create({4, 5, 2}, rng);
    TrainConfig tc;
    tc.lr = 0.02;
    tc.max_epochs = 2000;
    tc.patience = 2000;
    train_regression(net, X, Y, X, Y,
                     [](const Eigen::MatrixXd& Yt, const Eigen::MatrixXd& Yh,
                        Eigen::MatrixXd* d) { return mse_loss(Yt, Yh, d); },
                     tc);
    CHECK(mse_loss(Y, net.forward(X)) < 1e-5);
}

TEST_CASE("training is deterministic under a fixed seed") {
    Rng rng_a(3), rng_b(3);
    MlpModel a = MlpModel::create({4, 6, 2}, rng_a);
    MlpModel b = MlpModel::create({4, 6, 2}, rng_b);
    Rng data_rng(9);
    const Eigen::MatrixXd X = random_matrix(64, 4, data_rng);
    const Eigen::MatrixXd Y = random_matrix(64, 2, data_rng);
    TrainConfig tc;
    tc.max_epochs = 30;
    tc.seed = 17;
    const auto loss = [](const Eigen::MatrixXd& Yt, const Eigen::MatrixXd& Yh,
                         Eigen::MatrixXd* d) { return mse_loss(Yt, Yh, d); };
    train_regression(a, X, Y, X, Y, loss, tc);
    train_regression(b, X, Y, X, Y, loss, tc);
    CHECK((a.flatten() - b.flatten()).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("divergent training aborts with diagnostics") {
    Rng rng(26);
    MlpModel net = MlpModel::create({2, 3, 1}, rng);
    Eigen::MatrixXd X = random_matrix(16, 2, rng);
    Eigen::MatrixXd Y = random_matrix(16, 1, rng);
    Y(0, 0) = std::numeric_limits<double>::quiet_NaN();
    TrainConfig tc;
    tc.max_epochs = 5;
    CHECK_THROWS_AS(train_regression(net, X, Y, X, Y,
                                     [](const Eigen::MatrixXd& Yt,
                                        const Eigen::MatrixXd& Yh, Eigen::MatrixXd* d) {
                                         return mse_loss(Yt, Yh, d);
                                     },
                                     tc),
                    std::runtime_error);
}
