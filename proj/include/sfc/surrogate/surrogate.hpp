#pragma once

#include <json.hpp>
#include <string>

#include "sfc/surrogate/bll.hpp"
#include "sfc/surrogate/cqr.hpp"
#include "sfc/surrogate/narx_dataset.hpp"

namespace sfc::surrogate {

enum class ModelKind { mlp, cqr, bll };

std::string to_string(ModelKind k);
ModelKind model_kind_from_string(const std::string& s);

// Training settings for all three families, JSON-mapped.
struct SurrogateConfig {
    NarxConfig narx;
    std::vector<int> hidden_mean{30};
    std::vector<int> hidden_quantile{10};
    double alpha = 0.05;     // CQR miscoverage
    double m_sigma = 2.0;    // BLL interval multiplier
    TrainConfig train;       // mean/quantile heads
    BllTrainConfig bll;

    static SurrogateConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// One trained model of any family, together with its normalization and
// NARX metadata. Predictions are in normalized units unless noted.
struct Surrogate {
    ModelKind kind = ModelKind::mlp;
    MlpModel mlp;
    CqrModel cqr;
    BllModel bll;

    Normalization norm;
    NarxConfig narx;
    double m_sigma = 2.0;

    // provenance
    std::uint64_t seed = 0;
    std::uint64_t dataset_hash = 0;

    int feature_length() const { return narx.feature_length(); }

    // Point (mid/mean) prediction, normalized in/out.
    Eigen::VectorXd predict_norm(const Eigen::VectorXd& xn) const;

    struct IntervalPrediction {
        Eigen::VectorXd lo, mid, up;
    };
    // Uncertainty interval, normalized units. For mlp all three coincide.
    IntervalPrediction predict_interval_norm(const Eigen::VectorXd& xn) const;
};

// Trains one family on the dataset splits (normalized internally).
Surrogate train_surrogate(ModelKind kind, const NarxDataset& ds,
                          const SurrogateConfig& cfg, std::uint64_t seed);

struct EvalMetrics {
    double mse = 0.0;       // normalized units
    double coverage = -1.0;  // fraction in [lo, up]; -1 when not applicable
    bool diverged = false;
};

// One-step-ahead evaluation on normalized rows.
EvalMetrics evaluate_prediction(const Surrogate& model, const Eigen::MatrixXd& Xn,
                                const Eigen::MatrixXd& Yn);

// Free-running rollout over a raw trajectory segment: predictions feed back
// as lagged measurements, recorded inputs are replayed.
EvalMetrics evaluate_simulation(const Surrogate& model, const Trajectory& segment);

}  // namespace sfc::surrogate
