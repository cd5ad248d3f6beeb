#include "sfc/surrogate/cqr.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sfc::surrogate {

namespace {

void sort3(double& a, double& b, double& c) {
    if (a > b) std::swap(a, b);
    if (b > c) std::swap(b, c);
    if (a > b) std::swap(a, b);
}

}  // namespace

CqrModel::Triple CqrModel::predict(const Eigen::VectorXd& x) const {
    Triple t;
    t.lo = lo.forward_one(x);
    t.mid = mid.forward_one(x);
    t.up = up.forward_one(x);
    if (calibrated()) {
        t.lo -= offsets;
        t.up += offsets;
    }
    for (Eigen::Index c = 0; c < t.lo.size(); ++c) {
        sort3(t.lo(c), t.mid(c), t.up(c));
    }
    return t;
}

void CqrModel::predict(const Eigen::MatrixXd& X, Eigen::MatrixXd& lo_out,
                       Eigen::MatrixXd& mid_out, Eigen::MatrixXd& up_out) const {
    lo_out = lo.forward(X);
    mid_out = mid.forward(X);
    up_out = up.forward(X);
    if (calibrated()) {
        lo_out.rowwise() -= offsets.transpose();
        up_out.rowwise() += offsets.transpose();
    }
    for (Eigen::Index r = 0; r < X.rows(); ++r) {
        for (Eigen::Index c = 0; c < lo_out.cols(); ++c) {
            sort3(lo_out(r, c), mid_out(r, c), up_out(r, c));
        }
    }
}

double conformal_quantile(std::vector<double> scores, double alpha) {
    const std::size_t n = scores.size();
    if (n == 0) throw std::invalid_argument("conformal quantile of empty scores");
    // finite-sample split-conformal rule: k = ceil((1-alpha)(n+1)), clamped
    std::size_t k = static_cast<std::size_t>(
        std::ceil((1.0 - alpha) * (static_cast<double>(n) + 1.0)));
    k = std::clamp<std::size_t>(k, 1, n);
    std::nth_element(scores.begin(), scores.begin() + (k - 1), scores.end());
    return scores[k - 1];
}

Eigen::VectorXd conformalize(CqrModel& model, const Eigen::MatrixXd& Xcal,
                             const Eigen::MatrixXd& Ycal) {
    if (Xcal.rows() < 20) {
        throw std::invalid_argument("calibration set too small (needs >= 20 samples)");
    }
    const Eigen::MatrixXd lo_pred = model.lo.forward(Xcal);
    const Eigen::MatrixXd up_pred = model.up.forward(Xcal);

    const Eigen::Index n_out = Ycal.cols();
    Eigen::VectorXd q(n_out);
    for (Eigen::Index c = 0; c < n_out; ++c) {
        std::vector<double> scores(static_cast<std::size_t>(Xcal.rows()));
        for (Eigen::Index i = 0; i < Xcal.rows(); ++i) {
            scores[static_cast<std::size_t>(i)] =
                std::max(lo_pred(i, c) - Ycal(i, c), Ycal(i, c) - up_pred(i, c));
        }
        q(c) = conformal_quantile(std::move(scores), model.alpha);
    }
    model.offsets = q;
    return q;
}

}  // namespace sfc::surrogate
