#include "sfc/surrogate/surrogate.hpp"

#include <stdexcept>

namespace sfc::surrogate {

std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::mlp: return "mlp";
        case ModelKind::cqr: return "cqr";
        case ModelKind::bll: return "bll";
    }
    return "mlp";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "mlp" || s == "nn") return ModelKind::mlp;
    if (s == "cqr") return ModelKind::cqr;
    if (s == "bll") return ModelKind::bll;
    throw std::invalid_argument("unknown model kind '" + s + "' (mlp|cqr|bll)");
}

namespace {

std::vector<int> arch(int n_in, const std::vector<int>& hidden, int n_out) {
    std::vector<int> sizes;
    sizes.push_back(n_in);
    sizes.insert(sizes.end(), hidden.begin(), hidden.end());
    sizes.push_back(n_out);
    return sizes;
}

}  // namespace

SurrogateConfig SurrogateConfig::from_json(const nlohmann::json& j) {
    SurrogateConfig c;
    auto geti = [&](const char* k, int& v) { if (j.contains(k)) v = j.at(k).get<int>(); };
    auto getd = [&](const char* k, double& v) { if (j.contains(k)) v = j.at(k).get<double>(); };
    auto getb = [&](const char* k, bool& v) { if (j.contains(k)) v = j.at(k).get<bool>(); };
    geti("lag", c.narx.lag);
    getd("sample_period", c.narx.sample_period);
    getb("use_disturbance", c.narx.use_disturbance);
    getd("test_frac", c.narx.test_frac);
    getd("val_frac", c.narx.val_frac);
    getd("calib_frac", c.narx.calib_frac);
    if (j.contains("hidden_mean")) c.hidden_mean = j.at("hidden_mean").get<std::vector<int>>();
    if (j.contains("hidden_quantile")) {
        c.hidden_quantile = j.at("hidden_quantile").get<std::vector<int>>();
    }
    getd("alpha", c.alpha);
    getd("m_sigma", c.m_sigma);
    getd("lr", c.train.lr);
    geti("batch_size", c.train.batch_size);
    geti("max_epochs", c.train.max_epochs);
    geti("patience", c.train.patience);
    if (j.contains("bll")) {
        const auto& b = j.at("bll");
        if (b.contains("lr")) c.bll.lr = b.at("lr").get<double>();
        if (b.contains("max_iters")) c.bll.max_iters = b.at("max_iters").get<int>();
        if (b.contains("patience")) c.bll.patience = b.at("patience").get<int>();
        if (b.contains("beta_eps_init")) c.bll.beta_eps_init = b.at("beta_eps_init").get<double>();
        if (b.contains("beta_w_init")) c.bll.beta_w_init = b.at("beta_w_init").get<double>();
    }
    if (!(c.alpha > 0.0 && c.alpha < 1.0)) {
        throw std::invalid_argument("surrogate config field 'alpha' must be in (0,1)");
    }
    if (c.narx.lag < 0) {
        throw std::invalid_argument("surrogate config field 'lag' must be >= 0");
    }
    return c;
}

nlohmann::json SurrogateConfig::to_json() const {
    return {{"lag", narx.lag},
            {"sample_period", narx.sample_period},
            {"use_disturbance", narx.use_disturbance},
            {"test_frac", narx.test_frac},
            {"val_frac", narx.val_frac},
            {"calib_frac", narx.calib_frac},
            {"hidden_mean", hidden_mean},
            {"hidden_quantile", hidden_quantile},
            {"alpha", alpha},
            {"m_sigma", m_sigma},
            {"lr", train.lr},
            {"batch_size", train.batch_size},
            {"max_epochs", train.max_epochs},
            {"patience", train.patience},
            {"bll",
             {{"lr", bll.lr},
              {"max_iters", bll.max_iters},
              {"patience", bll.patience},
              {"beta_eps_init", bll.beta_eps_init},
              {"beta_w_init", bll.beta_w_init}}}};
}

Eigen::VectorXd Surrogate::predict_norm(const Eigen::VectorXd& xn) const {
    switch (kind) {
        case ModelKind::mlp: return mlp.forward_one(xn);
        case ModelKind::cqr: return cqr.predict(xn).mid;
        case ModelKind::bll: {
            Eigen::VectorXd mu, sigma;
            bll.predict(xn, mu, sigma);
            return mu;
        }
    }
    throw std::logic_error("unreachable");
}

Surrogate::IntervalPrediction Surrogate::predict_interval_norm(
    const Eigen::VectorXd& xn) const {
    IntervalPrediction out;
    switch (kind) {
        case ModelKind::mlp: {
            out.mid = mlp.forward_one(xn);
            out.lo = out.mid;
            out.up = out.mid;
            break;
        }
        case ModelKind::cqr: {
            const CqrModel::Triple t = cqr.predict(xn);
            out.lo = t.lo;
            out.mid = t.mid;
            out.up = t.up;
            break;
        }
        case ModelKind::bll: {
            Eigen::VectorXd mu, sigma;
            bll.predict(xn, mu, sigma);
            out.mid = mu;
            out.lo = mu - m_sigma * sigma;
            out.up = mu + m_sigma * sigma;
            break;
        }
    }
    return out;
}

Surrogate train_surrogate(ModelKind kind, const NarxDataset& ds,
                          const SurrogateConfig& cfg, std::uint64_t seed) {
    Surrogate s;
    s.kind = kind;
    s.norm = ds.norm;
    s.narx = ds.config;
    s.m_sigma = cfg.m_sigma;
    s.seed = seed;

    const Eigen::MatrixXd Xtr = ds.xn_of(ds.train_idx);
    const Eigen::MatrixXd Ytr = ds.yn_of(ds.train_idx);
    const Eigen::MatrixXd Xval = ds.xn_of(ds.val_idx);
    const Eigen::MatrixXd Yval = ds.yn_of(ds.val_idx);

    const int n_in = static_cast<int>(Xtr.cols());
    const int n_out = kNumMeasurements;

    TrainConfig tc = cfg.train;
    tc.seed = split_seed(seed, 1);

    Rng init_rng(split_seed(seed, 2));

    auto mse = [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yh,
                  Eigen::MatrixXd* d) { return mse_loss(Y, Yh, d); };

    switch (kind) {
        case ModelKind::mlp: {
            s.mlp = MlpModel::create(arch(n_in, cfg.hidden_mean, n_out), init_rng);
            train_regression(s.mlp, Xtr, Ytr, Xval, Yval, mse, tc);
            break;
        }
        case ModelKind::cqr: {
            const double tau_lo = cfg.alpha / 2.0;
            const double tau_up = 1.0 - cfg.alpha / 2.0;
            s.cqr.alpha = cfg.alpha;
            s.cqr.lo = MlpModel::create(arch(n_in, cfg.hidden_quantile, n_out), init_rng);
            s.cqr.mid = MlpModel::create(arch(n_in, cfg.hidden_mean, n_out), init_rng);
            s.cqr.up = MlpModel::create(arch(n_in, cfg.hidden_quantile, n_out), init_rng);

            TrainConfig tcl = tc;
            tcl.seed = split_seed(seed, 3);
            train_regression(
                s.cqr.lo, Xtr, Ytr, Xval, Yval,
                [tau_lo](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yh,
                         Eigen::MatrixXd* d) { return pinball_loss_tau(Y, Yh, tau_lo, d); },
                tcl);
            TrainConfig tcm = tc;
            tcm.seed = split_seed(seed, 4);
            train_regression(
                s.cqr.mid, Xtr, Ytr, Xval, Yval,
                [](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yh,
                   Eigen::MatrixXd* d) { return pinball_loss_tau(Y, Yh, 0.5, d); },
                tcm);
            TrainConfig tcu = tc;
            tcu.seed = split_seed(seed, 5);
            train_regression(
                s.cqr.up, Xtr, Ytr, Xval, Yval,
                [tau_up](const Eigen::MatrixXd& Y, const Eigen::MatrixXd& Yh,
                         Eigen::MatrixXd* d) { return pinball_loss_tau(Y, Yh, tau_up, d); },
                tcu);

            conformalize(s.cqr, ds.xn_of(ds.calib_idx), ds.yn_of(ds.calib_idx));
            break;
        }
        case ModelKind::bll: {
            s.bll.net = MlpModel::create(arch(n_in, cfg.hidden_mean, n_out), init_rng);
            BllTrainConfig bc = cfg.bll;
            bc.pretrain = tc;
            bc.seed = split_seed(seed, 6);
            bll_train(s.bll, Xtr, Ytr, Xval, Yval, bc);
            break;
        }
    }
    return s;
}

EvalMetrics evaluate_prediction(const Surrogate& model, const Eigen::MatrixXd& Xn,
                                const Eigen::MatrixXd& Yn) {
    EvalMetrics m;
    double se = 0.0;
    long covered = 0;
    const bool has_interval = model.kind != ModelKind::mlp;
    for (Eigen::Index i = 0; i < Xn.rows(); ++i) {
        const auto pred = model.predict_interval_norm(Xn.row(i).transpose());
        se += (pred.mid - Yn.row(i).transpose()).squaredNorm();
        if (has_interval) {
            for (Eigen::Index c = 0; c < Yn.cols(); ++c) {
                if (Yn(i, c) >= pred.lo(c) && Yn(i, c) <= pred.up(c)) ++covered;
            }
        }
    }
    m.mse = se / static_cast<double>(Yn.size());
    if (has_interval) {
        m.coverage = static_cast<double>(covered) / static_cast<double>(Yn.size());
    }
    return m;
}

EvalMetrics evaluate_simulation(const Surrogate& model, const Trajectory& segment) {
    const int lag = model.narx.lag;
    const int n_u = model.narx.n_u();
    const int n = static_cast<int>(segment.size());
    EvalMetrics m;
    if (n < lag + 2) throw std::invalid_argument("segment too short for rollout");

    // normalized measurement history, newest first
    std::vector<Eigen::VectorXd> y_hist, u_hist;
    auto y_at = [&](int k) {
        Eigen::VectorXd y(kNumMeasurements);
        for (int c = 0; c < kNumMeasurements; ++c) y(c) = segment.y[k][c];
        return model.norm.standardize_y(y);
    };
    auto u_at = [&](int k) {
        Eigen::VectorXd u(n_u);
        for (int c = 0; c < n_u; ++c) u(c) = segment.u[k][c];
        return model.norm.standardize_u(u);
    };

    for (int j = 0; j <= lag; ++j) {
        y_hist.push_back(y_at(lag - j));
        u_hist.push_back(u_at(lag - j));
    }

    double se = 0.0;
    long covered = 0, count = 0;
    const bool has_interval = model.kind != ModelKind::mlp;
    for (int k = lag; k + 1 < n; ++k) {
        const Eigen::VectorXd xn = assemble_window(y_hist, u_hist, lag);
        const auto pred = model.predict_interval_norm(xn);
        if (!pred.mid.allFinite()) {
            m.diverged = true;
            break;
        }
        const Eigen::VectorXd truth = y_at(k + 1);
        se += (pred.mid - truth).squaredNorm();
        count += truth.size();
        if (has_interval) {
            for (Eigen::Index c = 0; c < truth.size(); ++c) {
                if (truth(c) >= pred.lo(c) && truth(c) <= pred.up(c)) ++covered;
            }
        }
        // feed the prediction back
        y_hist.insert(y_hist.begin(), pred.mid);
        y_hist.pop_back();
        if (k + 1 < n) {
            u_hist.insert(u_hist.begin(), u_at(k + 1));
            u_hist.pop_back();
        }
    }
    m.mse = count > 0 ? se / static_cast<double>(count) : 0.0;
    if (has_interval && count > 0) {
        m.coverage = static_cast<double>(covered) / static_cast<double>(count);
    }
    return m;
}

}  // namespace sfc::surrogate
