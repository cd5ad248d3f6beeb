#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sfc/rng.hpp"

namespace sfc::surrogate {

// Exact GELU: x * Phi(x).
inline double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * 0.7071067811865475));
}
inline double gelu_grad(double x) {
    const double phi = std::exp(-0.5 * x * x) * 0.3989422804014327;
    return 0.5 * (1.0 + std::erf(x * 0.7071067811865475)) + x * phi;
}

// Fully connected network, GELU hidden activations, linear output.
// Rows of the data matrices are samples.
struct MlpModel {
    std::vector<Eigen::MatrixXd> W;  // layer l: (n_out x n_in)
    std::vector<Eigen::VectorXd> b;

    static MlpModel create(const std::vector<int>& layer_sizes, Rng& rng);

    int n_in() const { return static_cast<int>(W.front().cols()); }
    int n_out() const { return static_cast<int>(W.back().rows()); }
    int n_layers() const { return static_cast<int>(W.size()); }
    std::vector<int> layer_sizes() const;

    Eigen::MatrixXd forward(const Eigen::MatrixXd& X) const;
    Eigen::VectorXd forward_one(const Eigen::VectorXd& x) const;

    struct Cache {
        std::vector<Eigen::MatrixXd> a;  // activations per layer, a[0] = X
        std::vector<Eigen::MatrixXd> z;  // pre-activations
    };
    Eigen::MatrixXd forward_cached(const Eigen::MatrixXd& X, Cache& cache) const;

    struct Grads {
        std::vector<Eigen::MatrixXd> dW;
        std::vector<Eigen::VectorXd> db;
        void setZero();
        void axpy(double alpha, const Grads& g);  // this += alpha * g
    };
    Grads zero_grads() const;

    // Backpropagates dL/dY through the cached forward pass; accumulates
    // parameter gradients and returns dL/dX.
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dY,
                             Grads& grads) const;

    // Activations of the last hidden layer (feature map for the BLL head).
    Eigen::MatrixXd hidden_features(const Eigen::MatrixXd& X) const;

    // Parameter vector round-trip, used by optimizers and gradient checks.
    Eigen::VectorXd flatten() const;
    void unflatten(const Eigen::VectorXd& theta);
    static Eigen::VectorXd flatten_grads(const Grads& g);
};

}  // namespace sfc::surrogate
