#include "sfc/surrogate/mlp.hpp"

#include <stdexcept>

namespace sfc::surrogate {

MlpModel MlpModel::create(const std::vector<int>& layer_sizes, Rng& rng) {
    if (layer_sizes.size() < 2) {
        throw std::invalid_argument("mlp needs at least input and output sizes");
    }
    MlpModel m;
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int n_in = layer_sizes[l];
        const int n_out = layer_sizes[l + 1];
        const double scale = std::sqrt(2.0 / n_in);
        Eigen::MatrixXd W(n_out, n_in);
        for (Eigen::Index i = 0; i < W.size(); ++i) W.data()[i] = scale * unit(rng);
        m.W.push_back(std::move(W));
        m.b.push_back(Eigen::VectorXd::Zero(n_out));
    }
    return m;
}

std::vector<int> MlpModel::layer_sizes() const {
    std::vector<int> s;
    s.push_back(n_in());
    for (const auto& w : W) s.push_back(static_cast<int>(w.rows()));
    return s;
}

Eigen::MatrixXd MlpModel::forward(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd a = X;
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::MatrixXd z = (a * W[l].transpose()).rowwise() + b[l].transpose();
        if (l + 1 < n_layers()) {
            a = z.unaryExpr([](double v) { return gelu(v); });
        } else {
            a = std::move(z);
        }
    }
    return a;
}

Eigen::VectorXd MlpModel::forward_one(const Eigen::VectorXd& x) const {
    return forward(x.transpose()).row(0).transpose();
}

Eigen::MatrixXd MlpModel::forward_cached(const Eigen::MatrixXd& X, Cache& cache) const {
    cache.a.clear();
    cache.z.clear();
    cache.a.push_back(X);
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::MatrixXd z = (cache.a.back() * W[l].transpose()).rowwise() + b[l].transpose();
        if (l + 1 < n_layers()) {
            cache.a.push_back(z.unaryExpr([](double v) { return gelu(v); }));
        } else {
            cache.a.push_back(z);
        }
        cache.z.push_back(std::move(z));
    }
    return cache.a.back();
}

void MlpModel::Grads::setZero() {
    for (auto& g : dW) g.setZero();
    for (auto& g : db) g.setZero();
}

void MlpModel::Grads::axpy(double alpha, const Grads& g) {
    for (std::size_t l = 0; l < dW.size(); ++l) {
        dW[l] += alpha * g.dW[l];
        db[l] += alpha * g.db[l];
    }
}

MlpModel::Grads MlpModel::zero_grads() const {
    Grads g;
    for (int l = 0; l < n_layers(); ++l) {
        g.dW.push_back(Eigen::MatrixXd::Zero(W[l].rows(), W[l].cols()));
        g.db.push_back(Eigen::VectorXd::Zero(b[l].size()));
    }
    return g;
}

Eigen::MatrixXd MlpModel::backward(const Cache& cache, const Eigen::MatrixXd& dY,
                                   Grads& grads) const {
    Eigen::MatrixXd delta = dY;  // dL/dz for the output layer (linear)
    for (int l = n_layers() - 1; l >= 0; --l) {
        if (l < n_layers() - 1) {
            // through the GELU of layer l
            delta = delta.cwiseProduct(
                cache.z[l].unaryExpr([](double v) { return gelu_grad(v); }));
        }
        grads.dW[l] += delta.transpose() * cache.a[static_cast<std::size_t>(l)];
        grads.db[l] += delta.colwise().sum().transpose();
        if (l > 0) {
            delta = delta * W[l];
        } else {
            return delta * W[0];
        }
    }
    return {};
}

Eigen::MatrixXd MlpModel::hidden_features(const Eigen::MatrixXd& X) const {
    if (n_layers() < 2) {
        throw std::invalid_argument("mlp has no hidden layer to expose");
    }
    Eigen::MatrixXd a = X;
    for (int l = 0; l + 1 < n_layers(); ++l) {
        Eigen::MatrixXd z = (a * W[l].transpose()).rowwise() + b[l].transpose();
        a = z.unaryExpr([](double v) { return gelu(v); });
    }
    return a;
}

Eigen::VectorXd MlpModel::flatten() const {
    Eigen::Index n = 0;
    for (int l = 0; l < n_layers(); ++l) n += W[l].size() + b[l].size();
    Eigen::VectorXd theta(n);
    Eigen::Index off = 0;
    for (int l = 0; l < n_layers(); ++l) {
        theta.segment(off, W[l].size()) =
            Eigen::Map<const Eigen::VectorXd>(W[l].data(), W[l].size());
        off += W[l].size();
        theta.segment(off, b[l].size()) = b[l];
        off += b[l].size();
    }
    return theta;
}

void MlpModel::unflatten(const Eigen::VectorXd& theta) {
    Eigen::Index off = 0;
    for (int l = 0; l < n_layers(); ++l) {
        Eigen::Map<Eigen::VectorXd>(W[l].data(), W[l].size()) =
            theta.segment(off, W[l].size());
        off += W[l].size();
        b[l] = theta.segment(off, b[l].size());
        off += b[l].size();
    }
}

Eigen::VectorXd MlpModel::flatten_grads(const Grads& g) {
    Eigen::Index n = 0;
    for (std::size_t l = 0; l < g.dW.size(); ++l) n += g.dW[l].size() + g.db[l].size();
    Eigen::VectorXd v(n);
    Eigen::Index off = 0;
    for (std::size_t l = 0; l < g.dW.size(); ++l) {
        v.segment(off, g.dW[l].size()) =
            Eigen::Map<const Eigen::VectorXd>(g.dW[l].data(), g.dW[l].size());
        off += g.dW[l].size();
        v.segment(off, g.db[l].size()) = g.db[l];
        off += g.db[l].size();
    }
    return v;
}

}  // namespace sfc::surrogate
