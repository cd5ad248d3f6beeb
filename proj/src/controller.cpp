#include "sfc/mpc/controller.hpp"

#include <chrono>
#include <cmath>
#include <fstream>

#include "sfc/trajectory.hpp"

namespace sfc::mpc {

using surrogate::kNumMeasurements;
using surrogate::MlpModel;
using surrogate::ModelKind;

std::string to_string(UncertaintyMode m) {
    switch (m) {
        case UncertaintyMode::nominal: return "nominal";
        case UncertaintyMode::cqr: return "cqr";
        case UncertaintyMode::bll: return "bll";
    }
    return "nominal";
}

UncertaintyMode mode_from_string(const std::string& s) {
    if (s == "nominal" || s == "nn") return UncertaintyMode::nominal;
    if (s == "cqr") return UncertaintyMode::cqr;
    if (s == "bll") return UncertaintyMode::bll;
    throw std::invalid_argument("unknown mpc mode '" + s + "' (nominal|cqr|bll)");
}

void MpcConfig::validate() const {
    if (horizon < 2) throw std::invalid_argument("mpc config 'horizon' must be >= 2");
    if (gamma1 < 0 || gamma2 < 0 || gamma3 < 0 || gamma4 < 0 || rho_soft < 0 ||
        gamma_track < 0) {
        throw std::invalid_argument("mpc config weights must be >= 0");
    }
    if (!(d_scale > 0)) throw std::invalid_argument("mpc config 'd_scale' must be > 0");
    if (!(d90_max > 0)) throw std::invalid_argument("mpc config 'd90_max' must be > 0");
    for (int c = 0; c < 3; ++c) {
        if (!(u_lo(c) < u_hi(c)) || !std::isfinite(u_lo(c)) || !std::isfinite(u_hi(c))) {
            throw std::invalid_argument("mpc config input bounds must be finite with lo < hi");
        }
    }
    if (!(control_period > 0)) {
        throw std::invalid_argument("mpc config 'control_period' must be > 0");
    }
    if (max_iterations < 1) {
        throw std::invalid_argument("mpc config 'max_iterations' must be >= 1");
    }
}

MpcConfig MpcConfig::from_json(const nlohmann::json& j) {
    MpcConfig c;
    auto getd = [&](const char* k, double& v) { if (j.contains(k)) v = j.at(k).get<double>(); };
    auto geti = [&](const char* k, int& v) { if (j.contains(k)) v = j.at(k).get<int>(); };
    geti("horizon", c.horizon);
    getd("gamma1", c.gamma1);
    getd("gamma2", c.gamma2);
    getd("gamma3", c.gamma3);
    getd("gamma4", c.gamma4);
    getd("d90_max", c.d90_max);
    getd("rho_soft", c.rho_soft);
    getd("d_scale", c.d_scale);
    getd("m_sigma", c.m_sigma);
    getd("alpha", c.alpha);
    getd("control_period", c.control_period);
    geti("max_iterations", c.max_iterations);
    getd("tolerance", c.tolerance);
    getd("gamma_track", c.gamma_track);
    getd("d50_ref", c.d50_ref);
    if (j.contains("mode")) c.mode = mode_from_string(j.at("mode").get<std::string>());
    auto getv = [&](const char* k, Eigen::Vector3d& v) {
        if (!j.contains(k)) return;
        const auto a = j.at(k).get<std::vector<double>>();
        if (a.size() != 3) {
            throw std::invalid_argument(std::string("mpc config '") + k +
                                        "' needs 3 entries (Q_pm, Q_air, Q_tm)");
        }
        v = Eigen::Vector3d(a[0], a[1], a[2]);
    };
    getv("u_lo", c.u_lo);
    getv("u_hi", c.u_hi);
    c.validate();
    return c;
}

nlohmann::json MpcConfig::to_json() const {
    return {{"horizon", horizon},
            {"gamma1", gamma1},
            {"gamma2", gamma2},
            {"gamma3", gamma3},
            {"gamma4", gamma4},
            {"d90_max", d90_max},
            {"rho_soft", rho_soft},
            {"d_scale", d_scale},
            {"u_lo", std::vector<double>{u_lo(0), u_lo(1), u_lo(2)}},
            {"u_hi", std::vector<double>{u_hi(0), u_hi(1), u_hi(2)}},
            {"mode", to_string(mode)},
            {"m_sigma", m_sigma},
            {"alpha", alpha},
            {"control_period", control_period},
            {"max_iterations", max_iterations},
            {"tolerance", tolerance},
            {"gamma_track", gamma_track},
            {"d50_ref", d50_ref}};
}

void NarxState::push(const Eigen::VectorXd& y_meas, const Eigen::VectorXd& u_applied) {
    y_.push_front(y_meas);
    if (static_cast<int>(y_.size()) > lag_ + 1) y_.pop_back();
    u_.push_front(u_applied);
    if (static_cast<int>(u_.size()) > lag_) u_.pop_back();
}

bool NarxState::warm() const {
    return static_cast<int>(y_.size()) >= lag_ + 1 && static_cast<int>(u_.size()) >= lag_;
}

std::vector<Eigen::VectorXd> branch(const Surrogate& model, const Eigen::VectorXd& xn,
                                    UncertaintyMode mode, double m_sigma) {
    if (mode == UncertaintyMode::nominal) {
        return {model.predict_norm(xn)};
    }
    if (mode == UncertaintyMode::cqr) {
        const auto t = model.cqr.predict(xn);
        return {t.up, t.mid, t.lo};
    }
    Eigen::VectorXd mu, sigma;
    model.bll.predict(xn, mu, sigma);
    return {mu + m_sigma * sigma, mu, mu - m_sigma * sigma};
}

namespace {

struct EvalCache {
    MlpModel::Cache mlp;                    // plain nets
    std::vector<Eigen::MatrixXd> fa, fz;    // bll feature stack
    Eigen::VectorXd phi;                    // bias-augmented features
    Eigen::VectorXd sigma;                  // branch step only
    std::vector<Eigen::VectorXd> cov_phi;   // branch step only, per channel
};

struct Step0Cache {
    MlpModel::Cache lo, mid, up;            // cqr heads
    // source head per branch position (0 up, 1 mid, 2 lo) and channel:
    // 0 -> lo head, 1 -> mid head, 2 -> up head
    std::array<std::array<int, kNumMeasurements>, 3> src{};
    EvalCache bll;
};

struct Tape {
    Step0Cache step0;
    // [branch][k-1] for k = 1..N-1: evaluation producing y_{k+1}
    std::vector<std::vector<EvalCache>> mid;
};

void sort3_tracked(double& up_v, double& mid_v, double& lo_v, int& up_s, int& mid_s,
                   int& lo_s) {
    // sorts so that up >= mid >= lo, carrying source tags along
    if (lo_v > mid_v) { std::swap(lo_v, mid_v); std::swap(lo_s, mid_s); }
    if (mid_v > up_v) { std::swap(mid_v, up_v); std::swap(mid_s, up_s); }
    if (lo_v > mid_v) { std::swap(lo_v, mid_v); std::swap(lo_s, mid_s); }
}

}  // namespace

Controller::Controller(Surrogate model, MpcConfig config)
    : model_(std::move(model)), cfg_(std::move(config)), state_(model_.narx.lag) {
    cfg_.validate();
    if (cfg_.mode == UncertaintyMode::cqr && model_.kind != ModelKind::cqr) {
        throw std::invalid_argument("cqr mode requires a cqr surrogate");
    }
    if (cfg_.mode == UncertaintyMode::cqr && !model_.cqr.calibrated()) {
        throw std::invalid_argument("cqr mode requires a calibrated surrogate");
    }
    if (cfg_.mode == UncertaintyMode::bll && model_.kind != ModelKind::bll) {
        throw std::invalid_argument("bll mode requires a bll surrogate");
    }
    prev_u_ = 0.5 * (cfg_.u_lo + cfg_.u_hi);
    log_.push_back(kMpcLogHeader);
}

void Controller::observe(const Eigen::VectorXd& y_meas, const Eigen::VectorXd& u_applied) {
    state_.push(y_meas, u_applied);
    prev_u_ = u_applied.head(3);
    have_prev_u_ = true;
}

void Controller::set_previous_input(const Eigen::Vector3d& u) {
    prev_u_ = u;
    have_prev_u_ = true;
}

double Controller::objective(const ScenarioTree& tree,
                             const Eigen::MatrixXd& u_seq_phys) const {
    const int N = static_cast<int>(u_seq_phys.rows());
    const int nb = tree.n_branches();
    const auto& norm = model_.norm;

    auto d_hat = [&](double yn, int c) {
        return (yn * norm.y_std(c) + norm.y_mean(c)) / cfg_.d_scale;
    };
    const double d90_hat_max = cfg_.d90_max / cfg_.d_scale;
    const double d50_hat_ref = cfg_.d50_ref / cfg_.d_scale;

    double J = 0.0;
    for (int j = 0; j < nb; ++j) {
        const Eigen::MatrixXd& y = tree.branches[static_cast<std::size_t>(j)];
        double Jb = -cfg_.gamma1 * d_hat(y(0, 4), 4);  // stage k = 0
        for (int k = 1; k <= N; ++k) {
            const double d50 = d_hat(y(k, 4), 4);
            Jb += -cfg_.gamma1 * d50;  // stage for k < N, terminal for k = N
            if (cfg_.gamma_track > 0.0) {
                Jb += cfg_.gamma_track * (d50 - d50_hat_ref) * (d50 - d50_hat_ref);
            }
            const double slack = std::max(0.0, d_hat(y(k, 5), 5) - d90_hat_max);
            Jb += cfg_.rho_soft * slack * slack;
        }
        J += Jb / nb;
    }

    Eigen::Vector3d u_prev_hat =
        (prev_u_ - cfg_.u_lo).cwiseQuotient(cfg_.u_hi - cfg_.u_lo);
    for (int k = 0; k < N; ++k) {
        Eigen::Vector3d u_hat = (u_seq_phys.row(k).transpose().head(3) - cfg_.u_lo)
                                    .cwiseQuotient(cfg_.u_hi - cfg_.u_lo);
        J += -cfg_.gamma2 * u_hat(0) + cfg_.gamma3 * u_hat(2);
        J += cfg_.gamma4 * (u_hat - u_prev_hat).squaredNorm();
        u_prev_hat = u_hat;
    }
    return J;
}

double Controller::objective_and_grad(const Eigen::VectorXd& u_flat_norm,
                                      Eigen::VectorXd* grad, int horizon,
                                      double w_current) const {
    if (!state_.warm()) {
        throw std::logic_error("mpc solve before NARX state warm-up");
    }
    const int N = horizon;
    const int lag = model_.narx.lag;
    const int n_u = model_.narx.n_u();
    const auto& norm = model_.norm;
    const bool want_grad = grad != nullptr;

    const int nb = cfg_.mode == UncertaintyMode::nominal ? 1 : 3;

    // normalized history
    std::vector<Eigen::VectorXd> yh;  // yh[i] = y at step -i
    for (const auto& y : state_.y_history()) yh.push_back(norm.standardize_y(y));
    std::vector<Eigen::VectorXd> uh;  // uh[i] = u applied at step -(i+1)
    for (const auto& u : state_.u_history()) {
        Eigen::VectorXd u_full(n_u);
        u_full.head(3) = u.head(3);
        if (n_u == 4) u_full(3) = u.size() >= 4 ? u(3) : w_current;
        uh.push_back(norm.standardize_u(u_full));
    }

    // decision inputs, normalized for the model
    const Eigen::Vector3d width = cfg_.u_hi - cfg_.u_lo;
    std::vector<Eigen::VectorXd> un(static_cast<std::size_t>(N));
    double w_norm = 0.0;
    if (n_u == 4) w_norm = (w_current - norm.u_mean(3)) / norm.u_std(3);
    for (int k = 0; k < N; ++k) {
        Eigen::VectorXd u_model(n_u);
        for (int c = 0; c < 3; ++c) {
            const double u_phys = cfg_.u_lo(c) + u_flat_norm(3 * k + c) * width(c);
            u_model(c) = (u_phys - norm.u_mean(c)) / norm.u_std(c);
        }
        if (n_u == 4) u_model(3) = w_norm;
        un[static_cast<std::size_t>(k)] = std::move(u_model);
    }

    auto u_at = [&](int idx) -> const Eigen::VectorXd& {
        if (idx >= 0) return un[static_cast<std::size_t>(idx)];
        return uh[static_cast<std::size_t>(-idx - 1)];
    };

    // branch trajectories: y[j][k] for k = 0..N (normalized)
    std::vector<std::vector<Eigen::VectorXd>> y(static_cast<std::size_t>(nb));
    for (int j = 0; j < nb; ++j) {
        y[static_cast<std::size_t>(j)].resize(static_cast<std::size_t>(N) + 1);
        y[static_cast<std::size_t>(j)][0] = yh[0];
    }
    auto y_at = [&](int j, int idx) -> const Eigen::VectorXd& {
        if (idx >= 0) return y[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx)];
        return yh[static_cast<std::size_t>(-idx)];
    };

    auto window = [&](int j, int k) {
        Eigen::VectorXd x((lag + 1) * (kNumMeasurements + n_u));
        int col = 0;
        for (int q = 0; q <= lag; ++q) {
            x.segment(col, kNumMeasurements) = y_at(j, k - q);
            col += kNumMeasurements;
        }
        for (int q = 0; q <= lag; ++q) {
            x.segment(col, n_u) = u_at(k - q);
            col += n_u;
        }
        return x;
    };

    Tape tape;
    tape.mid.assign(static_cast<std::size_t>(nb), {});

    // ---- step 0: branch ----
    const Eigen::VectorXd x0 = window(0, 0);
    const Eigen::MatrixXd x0m = x0.transpose();
    if (cfg_.mode == UncertaintyMode::nominal) {
        Eigen::MatrixXd out;
        switch (model_.kind) {
            case ModelKind::mlp:
                out = model_.mlp.forward_cached(x0m, tape.step0.mid);
                break;
            case ModelKind::cqr:
                out = model_.cqr.mid.forward_cached(x0m, tape.step0.mid);
                break;
            case ModelKind::bll: {
                auto& c = tape.step0.bll;
                const Eigen::MatrixXd phi =
                    surrogate::bll_feature_forward(model_.bll.net, x0m, c.fa, c.fz);
                c.phi = phi.row(0).transpose();
                out = (model_.bll.post_mean.transpose() * c.phi).transpose();
                break;
            }
        }
        y[0][1] = out.row(0).transpose();
    } else if (cfg_.mode == UncertaintyMode::cqr) {
        auto& s0 = tape.step0;
        const Eigen::VectorXd lo_v =
            model_.cqr.lo.forward_cached(x0m, s0.lo).row(0).transpose() -
            model_.cqr.offsets;
        const Eigen::VectorXd mid_v =
            model_.cqr.mid.forward_cached(x0m, s0.mid).row(0).transpose();
        const Eigen::VectorXd up_v =
            model_.cqr.up.forward_cached(x0m, s0.up).row(0).transpose() +
            model_.cqr.offsets;
        Eigen::VectorXd bu(kNumMeasurements), bm(kNumMeasurements), bl(kNumMeasurements);
        for (int c = 0; c < kNumMeasurements; ++c) {
            double lv = lo_v(c), mv = mid_v(c), uv = up_v(c);
            int ls = 0, ms = 1, us = 2;
            sort3_tracked(uv, mv, lv, us, ms, ls);
            bu(c) = uv;
            bm(c) = mv;
            bl(c) = lv;
            s0.src[0][static_cast<std::size_t>(c)] = us;
            s0.src[1][static_cast<std::size_t>(c)] = ms;
            s0.src[2][static_cast<std::size_t>(c)] = ls;
        }
        y[0][1] = bu;
        y[1][1] = bm;
        y[2][1] = bl;
    } else {  // bll branching
        auto& c = tape.step0.bll;
        const Eigen::MatrixXd phi =
            surrogate::bll_feature_forward(model_.bll.net, x0m, c.fa, c.fz);
        c.phi = phi.row(0).transpose();
        const Eigen::VectorXd mu = model_.bll.post_mean.transpose() * c.phi;
        c.sigma.resize(kNumMeasurements);
        c.cov_phi.resize(kNumMeasurements);
        for (int ch = 0; ch < kNumMeasurements; ++ch) {
            c.cov_phi[static_cast<std::size_t>(ch)] =
                model_.bll.post_cov[static_cast<std::size_t>(ch)] * c.phi;
            c.sigma(ch) = std::sqrt(c.phi.dot(c.cov_phi[static_cast<std::size_t>(ch)]) +
                                    model_.bll.beta_eps(ch));
        }
        y[0][1] = mu + cfg_.m_sigma * c.sigma;
        y[1][1] = mu;
        y[2][1] = mu - cfg_.m_sigma * c.sigma;
    }

    // ---- steps 1..N-1: per-branch mean rollout ----
    for (int j = 0; j < nb; ++j) {
        auto& steps = tape.mid[static_cast<std::size_t>(j)];
        steps.resize(static_cast<std::size_t>(std::max(0, N - 1)));
        for (int k = 1; k < N; ++k) {
            const Eigen::MatrixXd xm = window(j, k).transpose();
            EvalCache& c = steps[static_cast<std::size_t>(k - 1)];
            Eigen::MatrixXd out;
            switch (model_.kind) {
                case ModelKind::mlp:
                    out = model_.mlp.forward_cached(xm, c.mlp);
                    break;
                case ModelKind::cqr:
                    out = model_.cqr.mid.forward_cached(xm, c.mlp);
                    break;
                case ModelKind::bll: {
                    const Eigen::MatrixXd phi =
                        surrogate::bll_feature_forward(model_.bll.net, xm, c.fa, c.fz);
                    c.phi = phi.row(0).transpose();
                    out = (model_.bll.post_mean.transpose() * c.phi).transpose();
                    break;
                }
            }
            if (!out.allFinite()) {
                throw std::runtime_error("mpc rollout produced a nonfinite prediction");
            }
            y[static_cast<std::size_t>(j)][static_cast<std::size_t>(k + 1)] =
                out.row(0).transpose();
        }
    }

    // ---- objective ----
    const double d90_hat_max = cfg_.d90_max / cfg_.d_scale;
    const double d50_hat_ref = cfg_.d50_ref / cfg_.d_scale;
    auto d_hat = [&](double yn, int ch) {
        return (yn * norm.y_std(ch) + norm.y_mean(ch)) / cfg_.d_scale;
    };

    double J = 0.0;
    // branch-state terms, with gradient seeds dJ/dy[j][k]
    std::vector<std::vector<Eigen::VectorXd>> dY;
    if (want_grad) {
        dY.assign(static_cast<std::size_t>(nb),
                  std::vector<Eigen::VectorXd>(static_cast<std::size_t>(N) + 1,
                                               Eigen::VectorXd::Zero(kNumMeasurements)));
    }
    const double wb = 1.0 / nb;
    for (int j = 0; j < nb; ++j) {
        J += wb * (-cfg_.gamma1 * d_hat(y_at(j, 0)(4), 4));
        for (int k = 1; k <= N; ++k) {
            const Eigen::VectorXd& yk = y_at(j, k);
            const double d50 = d_hat(yk(4), 4);
            J += wb * -cfg_.gamma1 * d50;
            double seed4 = -cfg_.gamma1;
            if (cfg_.gamma_track > 0.0) {
                J += wb * cfg_.gamma_track * (d50 - d50_hat_ref) * (d50 - d50_hat_ref);
                seed4 += cfg_.gamma_track * 2.0 * (d50 - d50_hat_ref);
            }
            const double slack = std::max(0.0, d_hat(yk(5), 5) - d90_hat_max);
            J += wb * cfg_.rho_soft * slack * slack;
            if (want_grad) {
                auto& d = dY[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
                d(4) += wb * seed4 * norm.y_std(4) / cfg_.d_scale;
                d(5) += wb * cfg_.rho_soft * 2.0 * slack * norm.y_std(5) / cfg_.d_scale;
            }
        }
    }

    // input terms on the normalized decision variables
    Eigen::VectorXd gu;  // dJ/du_flat_norm (direct part)
    if (want_grad) gu = Eigen::VectorXd::Zero(3 * N);
    const Eigen::Vector3d u_prev_hat0 =
        (prev_u_ - cfg_.u_lo).cwiseQuotient(width);
    for (int k = 0; k < N; ++k) {
        const Eigen::Vector3d u_hat = u_flat_norm.segment(3 * k, 3);
        const Eigen::Vector3d u_prev =
            k == 0 ? u_prev_hat0 : Eigen::Vector3d(u_flat_norm.segment(3 * (k - 1), 3));
        J += -cfg_.gamma2 * u_hat(0) + cfg_.gamma3 * u_hat(2);
        J += cfg_.gamma4 * (u_hat - u_prev).squaredNorm();
        if (want_grad) {
            gu(3 * k + 0) += -cfg_.gamma2;
            gu(3 * k + 2) += cfg_.gamma3;
            const Eigen::Vector3d dmove = 2.0 * cfg_.gamma4 * (u_hat - u_prev);
            gu.segment(3 * k, 3) += dmove;
            if (k > 0) gu.segment(3 * (k - 1), 3) -= dmove;
        }
    }

    if (!want_grad) return J;

    // ---- reverse sweep ----
    Eigen::VectorXd dUn = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N) * n_u);

    auto scatter = [&](int j, int k, const Eigen::VectorXd& dx) {
        // window at step k: y_{k-q} then u_{k-q}
        int col = 0;
        for (int q = 0; q <= lag; ++q) {
            const int idx = k - q;
            if (idx >= 1) {
                dY[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx)] +=
                    dx.segment(col, kNumMeasurements);
            }
            col += kNumMeasurements;
        }
        for (int q = 0; q <= lag; ++q) {
            const int idx = k - q;
            if (idx >= 0) dUn.segment(static_cast<Eigen::Index>(idx) * n_u, n_u) +=
                dx.segment(col, n_u);
            col += n_u;
        }
    };

    auto backward_plain = [&](const MlpModel& net, const MlpModel::Cache& cache,
                              const Eigen::VectorXd& dy) {
        MlpModel::Grads scratch = net.zero_grads();
        const Eigen::MatrixXd dX = net.backward(cache, dy.transpose(), scratch);
        return Eigen::VectorXd(dX.row(0).transpose());
    };
    auto backward_bll_mean = [&](const EvalCache& c, const Eigen::VectorXd& dy) {
        Eigen::VectorXd dphi = model_.bll.post_mean * dy;  // (D+1)
        const Eigen::MatrixXd dX = surrogate::bll_feature_input_grad(
            model_.bll.net, c.fz, dphi.head(dphi.size() - 1).transpose());
        return Eigen::VectorXd(dX.row(0).transpose());
    };

    // steps N-1 .. 1 (mean rollout)
    for (int j = 0; j < nb; ++j) {
        for (int k = N - 1; k >= 1; --k) {
            const Eigen::VectorXd& dy =
                dY[static_cast<std::size_t>(j)][static_cast<std::size_t>(k + 1)];
            const EvalCache& c =
                tape.mid[static_cast<std::size_t>(j)][static_cast<std::size_t>(k - 1)];
            Eigen::VectorXd dx;
            switch (model_.kind) {
                case ModelKind::mlp:
                    dx = backward_plain(model_.mlp, c.mlp, dy);
                    break;
                case ModelKind::cqr:
                    dx = backward_plain(model_.cqr.mid, c.mlp, dy);
                    break;
                case ModelKind::bll:
                    dx = backward_bll_mean(c, dy);
                    break;
            }
            scatter(j, k, dx);
        }
    }

    // step 0 (branch)
    Eigen::VectorXd dx0 = Eigen::VectorXd::Zero(x0.size());
    if (cfg_.mode == UncertaintyMode::nominal) {
        const Eigen::VectorXd& dy = dY[0][1];
        switch (model_.kind) {
            case ModelKind::mlp:
                dx0 = backward_plain(model_.mlp, tape.step0.mid, dy);
                break;
            case ModelKind::cqr:
                dx0 = backward_plain(model_.cqr.mid, tape.step0.mid, dy);
                break;
            case ModelKind::bll:
                dx0 = backward_bll_mean(tape.step0.bll, dy);
                break;
        }
    } else if (cfg_.mode == UncertaintyMode::cqr) {
        Eigen::VectorXd d_lo = Eigen::VectorXd::Zero(kNumMeasurements);
        Eigen::VectorXd d_mid = Eigen::VectorXd::Zero(kNumMeasurements);
        Eigen::VectorXd d_up = Eigen::VectorXd::Zero(kNumMeasurements);
        for (int j = 0; j < 3; ++j) {
            const Eigen::VectorXd& dy = dY[static_cast<std::size_t>(j)][1];
            for (int c = 0; c < kNumMeasurements; ++c) {
                switch (tape.step0.src[static_cast<std::size_t>(j)]
                                      [static_cast<std::size_t>(c)]) {
                    case 0: d_lo(c) += dy(c); break;
                    case 1: d_mid(c) += dy(c); break;
                    case 2: d_up(c) += dy(c); break;
                }
            }
        }
        dx0 = backward_plain(model_.cqr.lo, tape.step0.lo, d_lo) +
              backward_plain(model_.cqr.mid, tape.step0.mid, d_mid) +
              backward_plain(model_.cqr.up, tape.step0.up, d_up);
    } else {  // bll
        const auto& c = tape.step0.bll;
        Eigen::VectorXd dphi = Eigen::VectorXd::Zero(c.phi.size());
        const double signs[3] = {+1.0, 0.0, -1.0};
        for (int j = 0; j < 3; ++j) {
            const Eigen::VectorXd& dy = dY[static_cast<std::size_t>(j)][1];
            dphi += model_.bll.post_mean * dy;  // mean part
            if (signs[j] != 0.0 && cfg_.m_sigma != 0.0) {
                for (int ch = 0; ch < kNumMeasurements; ++ch) {
                    dphi += dy(ch) * signs[j] * cfg_.m_sigma *
                            c.cov_phi[static_cast<std::size_t>(ch)] / c.sigma(ch);
                }
            }
        }
        const Eigen::MatrixXd dX = surrogate::bll_feature_input_grad(
            model_.bll.net, c.fz, dphi.head(dphi.size() - 1).transpose());
        dx0 = dX.row(0).transpose();
    }
    scatter(0, 0, dx0);

    // chain normalized-model input gradients to the decision variables
    *grad = gu;
    for (int k = 0; k < N; ++k) {
        for (int c = 0; c < 3; ++c) {
            (*grad)(3 * k + c) += dUn(static_cast<Eigen::Index>(k) * n_u + c) *
                                  width(c) / norm.u_std(c);
        }
    }
    return J;
}

ScenarioTree Controller::rollout(const Eigen::MatrixXd& u_seq_phys,
                                 double w_current) const {
    const int N = static_cast<int>(u_seq_phys.rows());
    const int lag = model_.narx.lag;
    const int n_u = model_.narx.n_u();
    const auto& norm = model_.norm;
    const int nb = cfg_.mode == UncertaintyMode::nominal ? 1 : 3;

    std::vector<Eigen::VectorXd> yh;
    for (const auto& yv : state_.y_history()) yh.push_back(norm.standardize_y(yv));
    std::vector<Eigen::VectorXd> uh;
    for (const auto& uv : state_.u_history()) {
        Eigen::VectorXd u_full(n_u);
        u_full.head(3) = uv.head(3);
        if (n_u == 4) u_full(3) = uv.size() >= 4 ? uv(3) : w_current;
        uh.push_back(norm.standardize_u(u_full));
    }
    std::vector<Eigen::VectorXd> un(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
        Eigen::VectorXd u_model(n_u);
        for (int c = 0; c < 3; ++c) {
            u_model(c) = (u_seq_phys(k, c) - norm.u_mean(c)) / norm.u_std(c);
        }
        if (n_u == 4) u_model(3) = (w_current - norm.u_mean(3)) / norm.u_std(3);
        un[static_cast<std::size_t>(k)] = std::move(u_model);
    }

    std::vector<std::vector<Eigen::VectorXd>> y(static_cast<std::size_t>(nb));
    for (int j = 0; j < nb; ++j) {
        y[static_cast<std::size_t>(j)].assign(static_cast<std::size_t>(N) + 1, yh[0]);
    }
    auto y_at = [&](int j, int idx) -> const Eigen::VectorXd& {
        if (idx >= 0) return y[static_cast<std::size_t>(j)][static_cast<std::size_t>(idx)];
        return yh[static_cast<std::size_t>(-idx)];
    };
    auto u_at = [&](int idx) -> const Eigen::VectorXd& {
        if (idx >= 0) return un[static_cast<std::size_t>(idx)];
        return uh[static_cast<std::size_t>(-idx - 1)];
    };
    auto window = [&](int j, int k) {
        Eigen::VectorXd x((lag + 1) * (kNumMeasurements + n_u));
        int col = 0;
        for (int q = 0; q <= lag; ++q) {
            x.segment(col, kNumMeasurements) = y_at(j, k - q);
            col += kNumMeasurements;
        }
        for (int q = 0; q <= lag; ++q) {
            x.segment(col, n_u) = u_at(k - q);
            col += n_u;
        }
        return x;
    };

    const auto b0 = branch(model_, window(0, 0), cfg_.mode, cfg_.m_sigma);
    for (int j = 0; j < nb; ++j) {
        y[static_cast<std::size_t>(j)][1] = b0[static_cast<std::size_t>(j)];
        for (int k = 1; k < N; ++k) {
            const Eigen::VectorXd pred = [&] {
                switch (model_.kind) {
                    case ModelKind::cqr:
                        return Eigen::VectorXd(
                            model_.cqr.mid.forward_one(window(j, k)));
                    case ModelKind::bll: {
                        Eigen::VectorXd mu, sg;
                        model_.bll.predict(window(j, k), mu, sg);
                        return mu;
                    }
                    case ModelKind::mlp:
                    default:
                        return Eigen::VectorXd(model_.mlp.forward_one(window(j, k)));
                }
            }();
            if (!pred.allFinite()) {
                throw std::runtime_error("mpc rollout produced a nonfinite prediction");
            }
            y[static_cast<std::size_t>(j)][static_cast<std::size_t>(k + 1)] = pred;
        }
    }

    ScenarioTree tree;
    for (int j = 0; j < nb; ++j) {
        Eigen::MatrixXd B(N + 1, kNumMeasurements);
        for (int k = 0; k <= N; ++k) {
            B.row(k) = y[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)].transpose();
        }
        tree.branches.push_back(std::move(B));
    }
    return tree;
}

MpcSolution Controller::solve(int horizon, double w_current) const {
    const int N = horizon;
    Eigen::VectorXd x0(3 * N);
    if (warm_start_ && warm_start_->size() == 3 * N) {
        // shift by one control interval, repeating the last input
        x0.head(3 * (N - 1)) = warm_start_->tail(3 * (N - 1));
        x0.tail(3) = warm_start_->tail(3);
    } else if (have_prev_u_) {
        const Eigen::Vector3d u_hat =
            (prev_u_ - cfg_.u_lo).cwiseQuotient(cfg_.u_hi - cfg_.u_lo);
        for (int k = 0; k < N; ++k) x0.segment(3 * k, 3) = u_hat;
    } else {
        x0.setConstant(0.5);
    }

    BoxSolverOptions opts;
    opts.max_iter = cfg_.max_iterations;
    opts.tol = cfg_.tolerance;

    const auto t0 = std::chrono::steady_clock::now();
    const auto obj = [&](const Eigen::VectorXd& u, Eigen::VectorXd& g) {
        return objective_and_grad(u, &g, N, w_current);
    };
    BoxSolverResult r = minimize_box(obj, x0, Eigen::VectorXd::Zero(3 * N),
                                     Eigen::VectorXd::Ones(3 * N), opts);
    const auto t1 = std::chrono::steady_clock::now();

    MpcSolution sol;
    sol.objective = r.f;
    sol.objective_initial = r.f_initial;
    sol.iterations = r.iterations;
    sol.evaluations = r.evaluations;
    sol.converged = r.converged;
    sol.solve_time_s = std::chrono::duration<double>(t1 - t0).count();

    sol.u_seq.resize(N, 3);
    const Eigen::Vector3d width = cfg_.u_hi - cfg_.u_lo;
    for (int k = 0; k < N; ++k) {
        for (int c = 0; c < 3; ++c) {
            sol.u_seq(k, c) = cfg_.u_lo(c) + r.x(3 * k + c) * width(c);
        }
    }
    sol.u_apply = sol.u_seq.row(0).transpose();

    sol.tree = rollout(sol.u_seq, w_current);
    const auto& norm = model_.norm;
    sol.d90_first.setZero();
    for (int j = 0; j < sol.tree.n_branches(); ++j) {
        const double d90 =
            sol.tree.branches[static_cast<std::size_t>(j)](1, 5) * norm.y_std(5) +
            norm.y_mean(5);
        sol.d90_first(std::min(j, 2)) = d90;
    }
    if (sol.tree.n_branches() == 1) {
        sol.d90_first(1) = sol.d90_first(0);
        sol.d90_first(2) = sol.d90_first(0);
    }
    double max_slack = 0.0;
    for (const auto& B : sol.tree.branches) {
        for (int k = 1; k < B.rows(); ++k) {
            const double d90_hat =
                (B(k, 5) * norm.y_std(5) + norm.y_mean(5)) / cfg_.d_scale;
            max_slack = std::max(max_slack, d90_hat - cfg_.d90_max / cfg_.d_scale);
        }
    }
    sol.max_slack = std::max(0.0, max_slack);

    warm_start_ = r.x;
    return sol;
}

const MpcSolution& Controller::step(const Eigen::VectorXd& y_meas, double t,
                                    double w_current) {
    // history contract: y_[0] = current measurement, u_[0] = input applied
    // over the interval that just ended
    state_.push(y_meas, prev_u_);
    if (!state_.warm()) {
        throw std::logic_error("mpc step before NARX state warm-up");
    }
    last_ = solve(cfg_.horizon, w_current);
    prev_u_ = last_.u_apply;
    have_prev_u_ = true;

    char buf[320];
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%s,%s,%s,%s,%s,%s,%s,%s",
                  format_double(t).c_str(), format_double(last_.u_apply(0)).c_str(),
                  format_double(last_.u_apply(1)).c_str(),
                  format_double(last_.u_apply(2)).c_str(),
                  format_double(last_.d90_first(0)).c_str(),
                  format_double(last_.d90_first(1)).c_str(),
                  format_double(last_.d90_first(2)).c_str(),
                  format_double(last_.max_slack).c_str(),
                  format_double(last_.objective).c_str(),
                  format_double(last_.solve_time_s).c_str(),
                  last_.converged ? "converged" : "max_iter");
    log_.push_back(buf);
    return last_;
}

MpcSolution Controller::plan(int horizon, double w_current) const {
    const auto saved_warm = warm_start_;
    warm_start_.reset();
    MpcSolution sol = solve(horizon, w_current);
    warm_start_ = saved_warm;
    return sol;
}

void Controller::write_log(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write mpc log: " + path.string());
    for (const auto& line : log_) out << line << "\n";
}

}  // namespace sfc::mpc
