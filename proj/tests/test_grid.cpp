#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "sfc/tempering_grid.hpp"

using namespace sfc;

namespace {

double kahan_sum(const std::vector<double>& v) {
    double s = 0.0, c = 0.0;
    for (double x : v) {
        const double y = x - c;
        const double t = s + y;
        c = (t - s) - y;
        s = t;
    }
    return s;
}

// Cell averages of a periodic Gaussian bump on [0, 1).
std::vector<double> gaussian_cell_averages(int n) {
    std::vector<double> q(n);
    const int sub = 64;
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int s = 0; s < sub; ++s) {
            const double x = (i + (s + 0.5) / sub) / n;
            acc += std::exp(-100.0 * (x - 0.5) * (x - 0.5));
        }
        q[i] = acc / sub;
    }
    return q;
}

std::vector<double> restrict_half(const std::vector<double>& fine) {
    std::vector<double> coarse(fine.size() / 2);
    for (std::size_t i = 0; i < coarse.size(); ++i) {
        coarse[i] = 0.5 * (fine[2 * i] + fine[2 * i + 1]);
    }
    return coarse;
}

double l1_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / a.size();
}

}  // namespace

TEST_CASE("constant field preserved to machine precision") {
    std::vector<double> T(64, 293.15);
    advect_diffuse_step(T, 0.8, 0.01, 1.0 / 64, 0.0, GridBoundary::periodic, 0.0);
    for (double v : T) CHECK(v == doctest::Approx(293.15).epsilon(1e-15));
}

TEST_CASE("CFL violation rejected") {
    std::vector<double> T(32, 1.0);
    CHECK_THROWS_AS(advect_diffuse_step(T, 2.0, 1.0, 1.0 / 32, 0.0,
                                        GridBoundary::periodic, 0.0),
                    std::runtime_error);
}

TEST_CASE("diffusion stability rejected") {
    std::vector<double> T(32, 1.0);
    CHECK_THROWS_AS(advect_diffuse_step(T, 0.0, 1.0, 1.0 / 32, 1.0,
                                        GridBoundary::periodic, 0.0),
                    std::runtime_error);
}

TEST_CASE("periodic advection conserves total mass") {
    const int n = 128;
    std::vector<double> T = gaussian_cell_averages(n);
    const double before = kahan_sum(T);
    const double dz = 1.0 / n;
    for (int s = 0; s < 200; ++s) {
        advect_diffuse_step(T, 1.0, 0.5 * dz, dz, 1e-4, GridBoundary::periodic, 0.0);
    }
    const double after = kahan_sum(T);
    CHECK(std::abs(after - before) <= 1e-12 * std::abs(before));
}

TEST_CASE("WENO5 self-convergence order at least 4") {
    // Same dt on all grids: the temporal Euler error cancels in the
    // restricted differences, exposing the spatial order.
    const int n0 = 48;
    const double v = 1.0;
    const double dt = 0.25 / (4.0 * n0);  // CFL 0.25 on the finest grid
    const int steps = 64;

    std::vector<std::vector<double>> sol;
    for (int level = 0; level < 3; ++level) {
        const int n = n0 << level;
        std::vector<double> T = gaussian_cell_averages(n);
        for (int s = 0; s < steps; ++s) {
            advect_diffuse_step(T, v, dt, 1.0 / n, 0.0, GridBoundary::periodic, 0.0);
        }
        sol.push_back(std::move(T));
    }

    const double e0 = l1_diff(sol[0], restrict_half(sol[1]));
    const double e1 = l1_diff(sol[1], restrict_half(sol[2]));
    const double order = std::log2(e0 / e1);
    INFO("coarse diff " << e0 << " fine diff " << e1 << " order " << order);
    CHECK(order >= 4.0);
}

TEST_CASE("heat split: interval inside one cell") {
    TemperingGrid g = TemperingGrid::create(10, 10.0, 300.0, 0.0);
    std::vector<double> w(10, 0.0);
    heat_split(3.2, 3.8, 7.0, g, w);
    CHECK(w[3] == doctest::Approx(7.0).epsilon(1e-15));
    for (int k = 0; k < 10; ++k) {
        if (k != 3) CHECK(w[k] == 0.0);
    }
}

TEST_CASE("heat split: 25/75 across two cells") {
    TemperingGrid g = TemperingGrid::create(10, 10.0, 300.0, 0.0);
    std::vector<double> w(10, 0.0);
    // [3.75, 4.75]: 0.25 in cell 3, 0.75 in cell 4
    heat_split(3.75, 4.75, 8.0, g, w);
    CHECK(w[3] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(w[4] == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("heat split: degenerate interval lands in containing cell") {
    TemperingGrid g = TemperingGrid::create(10, 10.0, 300.0, 0.0);
    std::vector<double> w(10, 0.0);
    heat_split(5.5, 5.5, 3.0, g, w);
    CHECK(w[5] == doctest::Approx(3.0));
}

TEST_CASE("heat split: random intervals sum to the duty") {
    TemperingGrid g = TemperingGrid::create(57, 24.0, 300.0, 0.0);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> pos(-1.0, 25.0);
    std::uniform_real_distribution<double> duty(-50.0, 50.0);
    for (int rep = 0; rep < 1000; ++rep) {
        double a = pos(rng), b = pos(rng);
        if (a > b) std::swap(a, b);
        if (a == b) b += 1e-6;
        // keep intervals that overlap the grid so nothing is clipped away
        a = std::clamp(a, 0.0, 24.0);
        b = std::clamp(b, 0.0, 24.0);
        if (!(a < b)) continue;
        const double q = duty(rng);
        std::vector<double> w(57, 0.0);
        heat_split(a, b, q, g, w);
        CHECK(std::abs(kahan_sum(w) - q) <= 1e-12 * std::max(1.0, std::abs(q)));
    }
}

TEST_CASE("heat split clips intervals beyond the grid") {
    TemperingGrid g = TemperingGrid::create(10, 10.0, 300.0, 0.0);
    std::vector<double> w(10, 0.0);
    // half the interval is outside: only that share is deposited
    heat_split(9.5, 10.5, 4.0, g, w);
    CHECK(w[9] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(kahan_sum(w) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("single-cell source raises its temperature by the energy balance") {
    PlantParams p;
    TemperingGrid g = TemperingGrid::create(20, p.length, p.T_env, p.diffusion_tm);
    std::vector<double> src(20, 0.0);
    src[7] = 3.5;  // W
    const double dt = 5.0;
    Inputs u;
    u.Q_tm = 0.0;  // zero velocity
    g.diffusion = 0.0;
    tm_grid_step(g, 0.0, dt, src, p, GridBoundary::inflow_outflow, p.T_env);

    const double cell_heat_cap = p.rho_tm * p.cp_tm * p.annulus_area_tm() * g.dz;
    CHECK(g.T[7] == doctest::Approx(p.T_env + dt * 3.5 / cell_heat_cap).epsilon(1e-12));
    CHECK(g.T[6] == doctest::Approx(p.T_env));
}
