#include "sfc/mpc/box_lbfgs.hpp"

#include <deque>
#include <stdexcept>

namespace sfc::mpc {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo,
                        const Eigen::VectorXd& hi) {
    return x.cwiseMax(lo).cwiseMin(hi);
}

struct Pair {
    Eigen::VectorXd s, y;
    double rho;
};

Eigen::VectorXd two_loop(const std::deque<Pair>& mem, const Eigen::VectorXd& g) {
    Eigen::VectorXd q = g;
    std::vector<double> alpha(mem.size());
    for (std::size_t i = mem.size(); i-- > 0;) {
        alpha[i] = mem[i].rho * mem[i].s.dot(q);
        q -= alpha[i] * mem[i].y;
    }
    const Pair& last = mem.back();
    q *= last.s.dot(last.y) / last.y.squaredNorm();
    for (std::size_t i = 0; i < mem.size(); ++i) {
        const double beta = mem[i].rho * mem[i].y.dot(q);
        q += (alpha[i] - beta) * mem[i].s;
    }
    return q;
}

}  // namespace

BoxSolverResult minimize_box(const BoxObjective& f, Eigen::VectorXd x0,
                             const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                             const BoxSolverOptions& opts) {
    if ((hi - lo).minCoeff() < 0.0) {
        throw std::invalid_argument("box solver: lower bound exceeds upper bound");
    }

    BoxSolverResult res;
    Eigen::VectorXd x = project(std::move(x0), lo, hi);
    Eigen::VectorXd g(x.size());
    double fx = f(x, g);
    ++res.evaluations;
    res.f_initial = fx;

    std::deque<Pair> mem;
    Eigen::VectorXd g_new(x.size());

    for (int it = 0; it < opts.max_iter; ++it) {
        res.iterations = it;
        const double pg_norm = (x - project(x - g, lo, hi)).lpNorm<Eigen::Infinity>();
        if (pg_norm <= opts.tol) {
            res.converged = true;
            break;
        }

        Eigen::VectorXd d = mem.empty() ? Eigen::VectorXd(-g) : -two_loop(mem, g);
        if (g.dot(d) > -1e-14 * g.norm() * d.norm()) {
            mem.clear();
            d = -g;
        }

        bool accepted = false;
        for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
            double step = 1.0;
            if (mem.empty()) {
                // gradient step scaled to a modest first move
                const double gmax = g.lpNorm<Eigen::Infinity>();
                if (gmax > 1.0) step = 1.0 / gmax;
            }
            for (int ls = 0; ls < opts.max_linesearch; ++ls) {
                const Eigen::VectorXd xt = project(x + step * d, lo, hi);
                const Eigen::VectorXd dx = xt - x;
                if (dx.lpNorm<Eigen::Infinity>() == 0.0) break;
                const double ft = f(xt, g_new);
                ++res.evaluations;
                if (ft <= fx + opts.armijo_c1 * g.dot(dx)) {
                    Pair p;
                    p.s = dx;
                    p.y = g_new - g;
                    const double sy = p.s.dot(p.y);
                    if (sy > 1e-12 * p.s.norm() * p.y.norm()) {
                        p.rho = 1.0 / sy;
                        mem.push_back(std::move(p));
                        if (static_cast<int>(mem.size()) > opts.memory) mem.pop_front();
                    }
                    x = xt;
                    fx = ft;
                    g.swap(g_new);
                    accepted = true;
                    if (opts.on_iterate) opts.on_iterate(it, fx);
                    break;
                }
                step *= 0.5;
            }
            if (!accepted) {
                if (mem.empty()) break;  // steepest descent already failed
                mem.clear();
                d = -g;
            }
        }
        if (!accepted) break;  // no further progress possible
    }

    res.x = std::move(x);
    res.f = fx;
    return res;
}

}  // namespace sfc::mpc
