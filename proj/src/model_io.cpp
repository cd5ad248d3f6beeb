#include "sfc/surrogate/model_io.hpp"

#include <fstream>

namespace sfc::surrogate {

namespace {

nlohmann::json mat_to_json(const Eigen::MatrixXd& M) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd mat_from_json(const nlohmann::json& j) {
    const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
    if (rows == 0) return {};
    const Eigen::Index cols = static_cast<Eigen::Index>(j.at(0).size());
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = j.at(r).at(c).get<double>();
    }
    return M;
}

nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
    nlohmann::json a = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

Eigen::VectorXd vec_from_json(const nlohmann::json& j) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = j.at(i).get<double>();
    return v;
}

nlohmann::json mlp_to_json(const MlpModel& m) {
    nlohmann::json j;
    j["layer_sizes"] = m.layer_sizes();
    nlohmann::json Ws = nlohmann::json::array(), bs = nlohmann::json::array();
    for (const auto& W : m.W) Ws.push_back(mat_to_json(W));
    for (const auto& b : m.b) bs.push_back(vec_to_json(b));
    j["W"] = std::move(Ws);
    j["b"] = std::move(bs);
    return j;
}

MlpModel mlp_from_json(const nlohmann::json& j) {
    MlpModel m;
    for (const auto& Wj : j.at("W")) m.W.push_back(mat_from_json(Wj));
    for (const auto& bj : j.at("b")) m.b.push_back(vec_from_json(bj));
    return m;
}

}  // namespace

nlohmann::json surrogate_to_json(const Surrogate& s) {
    nlohmann::json j;
    j["format"] = "sfc-surrogate-v1";
    j["kind"] = to_string(s.kind);
    j["lag"] = s.narx.lag;
    j["sample_period"] = s.narx.sample_period;
    j["use_disturbance"] = s.narx.use_disturbance;
    j["m_sigma"] = s.m_sigma;
    j["seed"] = s.seed;
    j["dataset_hash"] = s.dataset_hash;
    j["norm"] = {{"y_mean", vec_to_json(s.norm.y_mean)},
                 {"y_std", vec_to_json(s.norm.y_std)},
                 {"u_mean", vec_to_json(s.norm.u_mean)},
                 {"u_std", vec_to_json(s.norm.u_std)}};
    switch (s.kind) {
        case ModelKind::mlp:
            j["mlp"] = mlp_to_json(s.mlp);
            break;
        case ModelKind::cqr: {
            j["cqr"] = {{"alpha", s.cqr.alpha},
                        {"lo", mlp_to_json(s.cqr.lo)},
                        {"mid", mlp_to_json(s.cqr.mid)},
                        {"up", mlp_to_json(s.cqr.up)},
                        {"offsets", vec_to_json(s.cqr.offsets)}};
            break;
        }
        case ModelKind::bll: {
            nlohmann::json covs = nlohmann::json::array();
            for (const auto& C : s.bll.post_cov) covs.push_back(mat_to_json(C));
            j["bll"] = {{"net", mlp_to_json(s.bll.net)},
                        {"post_mean", mat_to_json(s.bll.post_mean)},
                        {"post_cov", std::move(covs)},
                        {"beta_eps", vec_to_json(s.bll.beta_eps)},
                        {"beta_w", s.bll.beta_w}};
            break;
        }
    }
    return j;
}

Surrogate surrogate_from_json(const nlohmann::json& j) {
    if (!j.contains("format") || j.at("format").get<std::string>() != "sfc-surrogate-v1") {
        throw std::runtime_error("not a surrogate artifact (missing format tag)");
    }
    Surrogate s;
    s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    s.narx.lag = j.at("lag").get<int>();
    s.narx.sample_period = j.at("sample_period").get<double>();
    s.narx.use_disturbance = j.at("use_disturbance").get<bool>();
    s.m_sigma = j.at("m_sigma").get<double>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.dataset_hash = j.at("dataset_hash").get<std::uint64_t>();
    const auto& n = j.at("norm");
    s.norm.y_mean = vec_from_json(n.at("y_mean"));
    s.norm.y_std = vec_from_json(n.at("y_std"));
    s.norm.u_mean = vec_from_json(n.at("u_mean"));
    s.norm.u_std = vec_from_json(n.at("u_std"));
    switch (s.kind) {
        case ModelKind::mlp:
            s.mlp = mlp_from_json(j.at("mlp"));
            break;
        case ModelKind::cqr: {
            const auto& c = j.at("cqr");
            s.cqr.alpha = c.at("alpha").get<double>();
            s.cqr.lo = mlp_from_json(c.at("lo"));
            s.cqr.mid = mlp_from_json(c.at("mid"));
            s.cqr.up = mlp_from_json(c.at("up"));
            s.cqr.offsets = vec_from_json(c.at("offsets"));
            break;
        }
        case ModelKind::bll: {
            const auto& b = j.at("bll");
            s.bll.net = mlp_from_json(b.at("net"));
            s.bll.post_mean = mat_from_json(b.at("post_mean"));
            for (const auto& Cj : b.at("post_cov")) s.bll.post_cov.push_back(mat_from_json(Cj));
            s.bll.beta_eps = vec_from_json(b.at("beta_eps"));
            s.bll.beta_w = b.at("beta_w").get<double>();
            break;
        }
    }
    return s;
}

void save_surrogate(const std::filesystem::path& path, const Surrogate& model) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write model artifact: " + path.string());
    out << surrogate_to_json(model).dump(1) << "\n";
}

Surrogate load_surrogate(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open model artifact: " + path.string());
    nlohmann::json j;
    in >> j;
    return surrogate_from_json(j);
}

}  // namespace sfc::surrogate
