#include "sfc/surrogate/narx_dataset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace sfc::surrogate {

namespace {

// X layout: y-block then u-block, each newest lag first.
void fill_window(Eigen::MatrixXd& X, Eigen::Index row, const Trajectory& tr, int k,
                 int lag, int n_u) {
    int col = 0;
    for (int j = 0; j <= lag; ++j) {
        for (int c = 0; c < kNumMeasurements; ++c) X(row, col++) = tr.y[k - j][c];
    }
    for (int j = 0; j <= lag; ++j) {
        for (int c = 0; c < n_u; ++c) X(row, col++) = tr.u[k - j][c];
    }
}

}  // namespace

Eigen::MatrixXd NarxDataset::xn_of(const std::vector<int>& idx) const {
    Eigen::MatrixXd M = x_of(idx);
    const int lag = config.lag;
    const int n_u = config.n_u();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        int col = 0;
        for (int j = 0; j <= lag; ++j) {
            for (int c = 0; c < kNumMeasurements; ++c, ++col) {
                M(r, col) = (M(r, col) - norm.y_mean(c)) / norm.y_std(c);
            }
        }
        for (int j = 0; j <= lag; ++j) {
            for (int c = 0; c < n_u; ++c, ++col) {
                M(r, col) = (M(r, col) - norm.u_mean(c)) / norm.u_std(c);
            }
        }
    }
    return M;
}

Eigen::MatrixXd NarxDataset::yn_of(const std::vector<int>& idx) const {
    Eigen::MatrixXd M = y_of(idx);
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        for (int c = 0; c < kNumMeasurements; ++c) {
            M(r, c) = (M(r, c) - norm.y_mean(c)) / norm.y_std(c);
        }
    }
    return M;
}

NarxDataset build_narx_dataset(const std::vector<Trajectory>& trajs,
                               const NarxConfig& cfg, std::uint64_t seed) {
    if (cfg.lag < 0) throw std::invalid_argument("narx lag must be >= 0");
    const int lag = cfg.lag;
    const int n_u = cfg.n_u();

    for (const Trajectory& tr : trajs) {
        if (static_cast<int>(tr.size()) < lag + 2) {
            throw std::invalid_argument(
                "trajectory shorter than lag + 2 samples cannot form a window");
        }
        for (std::size_t i = 1; i < tr.size(); ++i) {
            const double step = tr.t[i] - tr.t[i - 1];
            if (std::abs(step - cfg.sample_period) > 1e-6 * cfg.sample_period) {
                throw std::invalid_argument(
                    "trajectory not sampled at the configured period");
            }
        }
    }

    std::size_t n_rows = 0;
    for (const Trajectory& tr : trajs) n_rows += tr.size() - lag - 1;

    NarxDataset ds;
    ds.config = cfg;
    ds.X.resize(static_cast<Eigen::Index>(n_rows), cfg.feature_length());
    ds.Y.resize(static_cast<Eigen::Index>(n_rows), kNumMeasurements);

    std::vector<int> pool;  // non-test rows
    Eigen::Index row = 0;
    for (const Trajectory& tr : trajs) {
        const int n_win = static_cast<int>(tr.size()) - lag - 1;
        const int n_test = static_cast<int>(std::floor(cfg.test_frac * n_win));
        const Eigen::Index first_row = row;
        for (int k = lag; k + 1 < static_cast<int>(tr.size()); ++k, ++row) {
            fill_window(ds.X, row, tr, k, lag, n_u);
            for (int c = 0; c < kNumMeasurements; ++c) ds.Y(row, c) = tr.y[k + 1][c];
        }
        // chronological tail of each trajectory -> test
        for (Eigen::Index r = first_row; r < row; ++r) {
            if (r >= row - n_test) {
                ds.test_idx.push_back(static_cast<int>(r));
            } else {
                pool.push_back(static_cast<int>(r));
            }
        }
        if (n_test > lag + 1) {
            // raw segment covering the test windows plus warm-up history
            Trajectory seg;
            const int start = static_cast<int>(tr.size()) - n_test - lag - 1;
            for (std::size_t i = static_cast<std::size_t>(start); i < tr.size(); ++i) {
                seg.push(tr.t[i], tr.u[i], tr.y[i]);
            }
            ds.test_segments.push_back(std::move(seg));
        }
    }

    Rng rng(split_seed(seed, 0xDA7A));
    std::shuffle(pool.begin(), pool.end(), rng);
    const std::size_t n_val = static_cast<std::size_t>(cfg.val_frac * pool.size());
    const std::size_t n_cal = static_cast<std::size_t>(cfg.calib_frac * pool.size());
    ds.val_idx.assign(pool.begin(), pool.begin() + n_val);
    ds.calib_idx.assign(pool.begin() + n_val, pool.begin() + n_val + n_cal);
    ds.train_idx.assign(pool.begin() + n_val + n_cal, pool.end());

    // normalization statistics from the training split only, per channel,
    // pooled over all lags
    const Eigen::MatrixXd Xtr = ds.x_of(ds.train_idx);
    ds.norm.y_mean = Eigen::VectorXd::Zero(kNumMeasurements);
    ds.norm.y_std = Eigen::VectorXd::Ones(kNumMeasurements);
    ds.norm.u_mean = Eigen::VectorXd::Zero(n_u);
    ds.norm.u_std = Eigen::VectorXd::Ones(n_u);

    const Eigen::Index n_tr = Xtr.rows();
    if (n_tr > 0) {
        for (int c = 0; c < kNumMeasurements; ++c) {
            double s = 0.0, s2 = 0.0;
            long cnt = 0;
            for (int j = 0; j <= lag; ++j) {
                const int col = j * kNumMeasurements + c;
                for (Eigen::Index r = 0; r < n_tr; ++r) {
                    const double v = Xtr(r, col);
                    s += v;
                    s2 += v * v;
                    ++cnt;
                }
            }
            const double mean = s / cnt;
            const double var = std::max(s2 / cnt - mean * mean, 0.0);
            ds.norm.y_mean(c) = mean;
            ds.norm.y_std(c) = std::max(std::sqrt(var), 1e-12);
        }
        const int u_base = (lag + 1) * kNumMeasurements;
        for (int c = 0; c < n_u; ++c) {
            double s = 0.0, s2 = 0.0;
            long cnt = 0;
            for (int j = 0; j <= lag; ++j) {
                const int col = u_base + j * n_u + c;
                for (Eigen::Index r = 0; r < n_tr; ++r) {
                    const double v = Xtr(r, col);
                    s += v;
                    s2 += v * v;
                    ++cnt;
                }
            }
            const double mean = s / cnt;
            const double var = std::max(s2 / cnt - mean * mean, 0.0);
            ds.norm.u_mean(c) = mean;
            ds.norm.u_std(c) = std::max(std::sqrt(var), 1e-12);
        }
    }
    return ds;
}

Eigen::VectorXd assemble_window(const std::vector<Eigen::VectorXd>& y_newest_first,
                                const std::vector<Eigen::VectorXd>& u_newest_first,
                                int lag) {
    if (static_cast<int>(y_newest_first.size()) != lag + 1 ||
        static_cast<int>(u_newest_first.size()) != lag + 1) {
        throw std::invalid_argument("assemble_window: need lag+1 entries per block");
    }
    const int n_y = static_cast<int>(y_newest_first.front().size());
    const int n_u = static_cast<int>(u_newest_first.front().size());
    Eigen::VectorXd w((lag + 1) * (n_y + n_u));
    int col = 0;
    for (int j = 0; j <= lag; ++j) {
        w.segment(col, n_y) = y_newest_first[static_cast<std::size_t>(j)];
        col += n_y;
    }
    for (int j = 0; j <= lag; ++j) {
        w.segment(col, n_u) = u_newest_first[static_cast<std::size_t>(j)];
        col += n_u;
    }
    return w;
}

}  // namespace sfc::surrogate
