#include <doctest.h>

#include <cmath>
#include <random>

#include "fbsde/adjoint.hpp"
#include "fbsde/paths.hpp"
#include "fbsde/presets.hpp"

using namespace fbsde;

TEST_CASE("brownian sampling: W(1) has unit variance and W(0)=0") {
    const auto ens = PathEnsemble::sample(TimeGrid(1), 1000000, 7);
    std::vector<double> w1(ens.n_paths());
    for (std::size_t p = 0; p < ens.n_paths(); ++p) w1[p] = ens.dW(p, 0);
    const auto ms = mean_and_se(w1);
    double var = 0.0;
    for (double v : w1) var += (v - ms.mean) * (v - ms.mean);
    var /= static_cast<double>(w1.size() - 1);
    CHECK(var > 0.99);
    CHECK(var < 1.01);

    const auto w = ens.cumulative();
    for (std::size_t p = 0; p < 50; ++p) CHECK(w(p, 0) == 0.0);
}

TEST_CASE("brownian sampling is reproducible bit for bit") {
    const auto a = PathEnsemble::sample(TimeGrid(16), 200, 99);
    const auto b = PathEnsemble::sample(TimeGrid(16), 200, 99);
    REQUIRE(a.increments().same_shape(b.increments()));
    for (std::size_t p = 0; p < a.n_paths(); ++p)
        for (std::size_t i = 0; i < 16; ++i) CHECK(a.dW(p, i) == b.dW(p, i));
    const auto c = PathEnsemble::sample(TimeGrid(16), 200, 100);
    bool any_diff = false;
    for (std::size_t i = 0; i < 16 && !any_diff; ++i) any_diff = a.dW(0, i) != c.dW(0, i);
    CHECK(any_diff);
}

TEST_CASE("per-step increment moments stay within 5 sigma") {
    const std::size_t n = 50000;
    const auto ens = PathEnsemble::sample(TimeGrid(8), n, 2024);
    const double dt = ens.grid().dt();
    for (std::size_t i = 0; i < 8; ++i) {
        std::vector<double> col(n);
        for (std::size_t p = 0; p < n; ++p) col[p] = ens.dW(p, i);
        const auto ms = mean_and_se(col);
        CHECK(std::abs(ms.mean) < 5.0 * std::sqrt(dt / static_cast<double>(n)));
        double var = 0.0;
        for (double v : col) var += (v - ms.mean) * (v - ms.mean);
        var /= static_cast<double>(n - 1);
        CHECK(std::abs(var - dt) < 5.0 * dt * std::sqrt(2.0 / static_cast<double>(n - 1)));
    }
}

TEST_CASE("ekeland distance: basic values") {
    const auto ens = PathEnsemble::sample(TimeGrid(50), 10, 1);
    const auto u = ControlProcess::constant(0.4);
    CHECK(ekeland_distance(u, u, ens) == 0.0);
    CHECK(ekeland_distance(ControlProcess::constant(0.0), ControlProcess::constant(1.0), ens) ==
          1.0);
}

TEST_CASE("ekeland distance of a spike equals the patch measure") {
    const TimeGrid grid(100);
    const auto ens = PathEnsemble::sample(grid, 5, 3);
    const auto u = ControlProcess::constant(0.0);
    const auto v = spike_variation(u, SpikeSpec(0.2, 0.1, 1.0), grid);
    CHECK(ekeland_distance(u, v, ens) == doctest::Approx(0.1).epsilon(1e-12));

    // idempotent patch: spiking with the control's own value changes nothing
    const auto w = spike_variation(u, SpikeSpec(0.2, 0.1, 0.0), grid);
    CHECK(ekeland_distance(u, w, ens) == 0.0);

    // full-width patch yields the constant control
    const auto full = spike_variation(u, SpikeSpec(0.0, 1.0, 0.7), grid);
    for (std::size_t i = 0; i < 100; ++i) CHECK(full.value(0, i) == 0.7);
}

TEST_CASE("spike specs outside the horizon are rejected") {
    CHECK_THROWS_AS(SpikeSpec(0.8, 0.4, 1.0), std::domain_error);
    CHECK_THROWS_AS(SpikeSpec(-0.1, 0.2, 1.0), std::domain_error);
}

TEST_CASE("ekeland distance is a metric on sampled control triples") {
    const TimeGrid grid(64);
    const auto ens = PathEnsemble::sample(grid, 3, 5);
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<int> lev(0, 2);
    auto random_control = [&] {
        std::vector<double> v(64);
        for (auto& x : v) x = 0.5 * lev(rng);
        return ControlProcess::grid(v);
    };
    for (int rep = 0; rep < 20; ++rep) {
        const auto a = random_control(), b = random_control(), c = random_control();
        const double dab = ekeland_distance(a, b, ens);
        const double dba = ekeland_distance(b, a, ens);
        const double dac = ekeland_distance(a, c, ens);
        const double dcb = ekeland_distance(c, b, ens);
        CHECK(dab == dba);
        CHECK(dab >= 0.0);
        CHECK(dab <= 1.0);
        CHECK(dab <= dac + dcb + 1e-15);
        CHECK(ekeland_distance(a, a, ens) == 0.0);
    }
}

TEST_CASE("weighted distance: unit weight and equal controls") {
    const TimeGrid grid(40);
    const auto ens = PathEnsemble::sample(grid, 100, 9);
    WeightProcess w{PathMatrix(100, 40, 1.0)};
    const auto u1 = ControlProcess::constant(1.0);
    const auto u0 = ControlProcess::constant(0.0);
    CHECK(weighted_distance(u1, u0, w, ens) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(weighted_distance(u1, u1, w, ens) == 0.0);
}

TEST_CASE("example2 weight matches a brute-force path loop") {
    const auto m = preset("example2");
    const double eps = 0.04;
    const double ue = 1.0 - eps * eps;
    const auto ens = PathEnsemble::sample(TimeGrid(50), 400, 11);
    const auto sol = solve_fbsde(m.coeffs, ControlProcess::constant(ue), ens);
    const auto adj = solve_adjoints(m.coeffs, m.cost, sol, m.mult, AdjointVariant::Sufficient);
    const auto w = build_weight(adj, sol);

    const auto v = ControlProcess::constant(ue + 0.1);
    const double got = weighted_distance(sol.u, v, w, ens);

    // independent re-summation
    std::vector<double> per_path(ens.n_paths());
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        double path = 0.0;
        for (std::size_t i = 0; i < 50; ++i)
            path += w.w(p, i) * std::abs(sol.u_at(p, i) - v.value(p, i)) * ens.grid().dt();
        per_path[p] = path;
    }
    const double expect = mean_and_se(per_path).mean;
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("build_weight: zero inputs give the constant weight 1") {
    FbsdeSolution sol;
    sol.grid = TimeGrid(10);
    sol.n_paths = 4;
    sol.x = PathMatrix(4, 11, 0.0);
    sol.y = PathMatrix(4, 11, 0.0);
    sol.z = PathMatrix(4, 10, 0.0);
    sol.u = ControlProcess::constant(0.0);
    AdjointBundle adj;
    adj.first.p = PathMatrix(4, 11, 0.0);
    adj.first.q = PathMatrix(4, 11, 0.0);
    adj.first.k = PathMatrix(4, 10, 0.0);
    adj.second.P1 = StepValues::broadcast(std::vector<double>(11, 0.0));
    const auto w = build_weight(adj, sol);
    for (std::size_t p = 0; p < 4; ++p)
        for (std::size_t i = 0; i < 10; ++i) CHECK(w.w(p, i) == 1.0);
}

TEST_CASE("example1 weight matches the hand formula pathwise") {
    const auto m = preset("example1");
    const double eps = 0.04;
    const double ue = 1.0 - std::sqrt(eps);  // 0.8
    const auto ens = PathEnsemble::sample(TimeGrid(25), 60, 13);
    const auto sol = solve_fbsde(m.coeffs, ControlProcess::constant(ue), ens);
    const auto adj = solve_adjoints(m.coeffs, m.cost, sol, m.mult, AdjointVariant::Necessary);
    const auto w = build_weight(adj, sol);

    const auto wmat = ens.cumulative();
    const double r2h = std::sqrt(2.0) / 2.0;
    for (std::size_t p = 0; p < ens.n_paths(); ++p) {
        for (std::size_t i = 0; i < 25; ++i) {
            const double W = wmat(p, i);
            const double expect = 1.0 + 0.8 * std::abs(W) + r2h + 0.8 + 1.0 + 0.8 * std::abs(W);
            CHECK(w.w(p, i) == doctest::Approx(expect).epsilon(1e-9));
            CHECK(w.w(p, i) >= 1.0);  // weight >= 1 by construction
        }
    }
}

TEST_CASE("state continuity under shrinking spikes stays bounded (ratio form)") {
    // E[sup |x - x'|^2] / d(u,u')^{1/2} bounded across alpha on example1
    const auto m = preset("example1");
    const TimeGrid grid(200);
    const auto ens = PathEnsemble::sample(grid, 4000, 21);
    const auto base = ControlProcess::constant(1.0);
    const auto fx = solve_forward(m.coeffs, base, ens);

    double first_ratio = 0.0;
    for (double alpha : {0.4, 0.2, 0.1, 0.05}) {
        const auto spiked = spike_variation(base, SpikeSpec(0.2, alpha, 0.0), grid);
        const auto fx2 = solve_forward(m.coeffs, spiked, ens);
        std::vector<double> sup2(ens.n_paths());
        for (std::size_t p = 0; p < ens.n_paths(); ++p) {
            double s = 0.0;
            for (std::size_t i = 0; i <= 200; ++i)
                s = std::max(s, std::pow(fx.x(p, i) - fx2.x(p, i), 2));
            sup2[p] = s;
        }
        const double d = ekeland_distance(base, spiked, ens);
        CHECK(d == doctest::Approx(alpha).epsilon(1e-12));
        const double ratio = mean_and_se(sup2).mean / std::sqrt(d);
        if (alpha == 0.4) first_ratio = ratio;
        CHECK(ratio <= 2.0 * first_ratio + 1e-12);  // no growth as the spike shrinks
    }
}
