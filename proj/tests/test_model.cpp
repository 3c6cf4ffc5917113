#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "fbsde/model.hpp"
#include "fbsde/presets.hpp"

using namespace fbsde;

TEST_CASE("coefficient lookup matches table values at example models") {
    const auto ex2 = preset("example2");
    const auto cv = eval_coefficients(ex2.coeffs, 0.5);
    CHECK(cv.A == 0.0);
    CHECK(cv.B == 0.0);
    CHECK(cv.C == 0.0);
    CHECK(cv.D == 1.0);
    CHECK(cv.a == 0.0);
    CHECK(cv.b == 0.0);
    CHECK(cv.c == 2.0);

    const ModelCoefficients zero;
    for (double t : {0.0, 0.25, 1.0}) {
        const auto z = eval_coefficients(zero, t);
        CHECK(z.A == 0.0);
        CHECK(z.c == 0.0);
    }
}

TEST_CASE("piecewise lookup is right-continuous and pure") {
    PiecewiseConstant A({0.0, 0.5}, {1.0, 3.0});
    CHECK(A(0.5) == 3.0);
    CHECK(A(0.49999) == 1.0);
    CHECK(A(1.0) == 3.0);
    CHECK(A(0.0) == 1.0);

    // table-lookup oracle across a fine sweep
    for (int i = 0; i <= 1000; ++i) {
        const double t = i / 1000.0;
        const double expect = t < 0.5 ? 1.0 : 3.0;
        CHECK(A(t) == expect);
        CHECK(A(t) == A(t));  // purity: identical calls, identical values
    }
}

TEST_CASE("coefficient evaluation rejects t outside the horizon") {
    const auto ex1 = preset("example1");
    CHECK_THROWS_AS(eval_coefficients(ex1.coeffs, -0.1), std::domain_error);
    CHECK_THROWS_AS(eval_coefficients(ex1.coeffs, 1.1), std::domain_error);
}

TEST_CASE("polynomial costs differentiate exactly") {
    const auto ex1 = preset("example1");
    const auto& c = ex1.cost;
    // l = u
    CHECK(c.l(0.3, 2.0, -1.0, 0.7) == doctest::Approx(0.7));
    CHECK(c.l_u(0.3, 2.0, -1.0, 0.7) == doctest::Approx(1.0));
    CHECK(c.l_x(0.3, 2.0, -1.0, 0.7) == 0.0);
    // phi = (sqrt2/2) x^2 + x
    const double r2h = std::sqrt(2.0) / 2.0;
    CHECK(c.phi(2.0) == doctest::Approx(r2h * 4.0 + 2.0));
    CHECK(c.phi_x(2.0) == doctest::Approx(r2h * 4.0 + 1.0));
    CHECK(c.phi_xx(2.0) == doctest::Approx(2.0 * r2h));
    // gamma = -y
    CHECK(c.gamma_y(5.0) == doctest::Approx(-1.0));
    CHECK(c.gamma_yy(5.0) == 0.0);
}

TEST_CASE("derivative consistency: supplied vs centered differences on random probes") {
    PolynomialCost poly;
    poly.running = {{0.5, 2, 0, 1}, {-1.0, 1, 1, 0}, {2.0, 0, 1, 2}};
    poly.terminal = {{0.3, 2}, {1.0, 1}};
    poly.initial = {{-0.7, 2}};
    const auto cost = CostSpec::from_polynomials(poly);

    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> box(-10.0, 10.0);
    for (int i = 0; i < 100; ++i) {
        const double t = 0.5, x = box(rng), y = box(rng), u = box(rng) / 10.0;
        auto fd = [&](auto f, double s) {
            const double h = 1e-5 * (1.0 + std::abs(s));
            return (f(s + h) - f(s - h)) / (2 * h);
        };
        const double lx = fd([&](double v) { return cost.l(t, v, y, u); }, x);
        CHECK(std::abs(cost.l_x(t, x, y, u) - lx) / (1.0 + std::abs(lx)) < 1e-5);
        const double ly = fd([&](double v) { return cost.l(t, x, v, u); }, y);
        CHECK(std::abs(cost.l_y(t, x, y, u) - ly) / (1.0 + std::abs(ly)) < 1e-5);
        const double px = fd([&](double v) { return cost.phi(v); }, x);
        CHECK(std::abs(cost.phi_x(x) - px) / (1.0 + std::abs(px)) < 1e-5);
        const double gy = fd([&](double v) { return cost.gamma(v); }, y);
        CHECK(std::abs(cost.gamma_y(y) - gy) / (1.0 + std::abs(gy)) < 1e-5);
    }
}

TEST_CASE("validate_model passes both example presets") {
    for (const char* name : {"example1", "example2"}) {
        const auto m = preset(name);
        const auto report = validate_model(m.coeffs, m.cost, m.uset, 32);
        CHECK(report.all_pass);
    }
}

TEST_CASE("validate_model: zero model passes with zero Lipschitz ratios") {
    ModelCoefficients zero;
    const auto cost = CostSpec::from_polynomials(PolynomialCost{});
    const auto report = validate_model(zero, cost, ControlSet(0, 1), 32);
    CHECK(report.all_pass);
    for (const char* check : {"h2-lipschitz-phi_x", "h2-lipschitz-gamma_y", "h2-lipschitz-l_x"}) {
        const auto* c = report.find(check);
        REQUIRE(c != nullptr);
        CHECK(c->fitted_constant == 0.0);
    }
}

TEST_CASE("validate_model flags quartic terminal cost on the default box") {
    PolynomialCost poly;
    poly.terminal = {{1.0, 4}};  // phi = x^4: phi_x has unbounded growth
    const auto cost = CostSpec::from_polynomials(poly);
    const auto report = validate_model(ModelCoefficients{}, cost, ControlSet(0, 1), 32);
    CHECK_FALSE(report.all_pass);
    const auto* lip = report.find("h2-lipschitz-phi_x");
    REQUIRE(lip != nullptr);
    CHECK_FALSE(lip->pass);
}

TEST_CASE("validate_model reports non-finite coefficients as invalid-model errors") {
    ModelCoefficients bad;
    bad.A = PiecewiseConstant({0.0, 0.5}, {0.0, std::numeric_limits<double>::infinity()});
    const auto cost = CostSpec::from_polynomials(PolynomialCost{});
    CHECK_THROWS_AS(validate_model(bad, cost, ControlSet(0, 1), 32), InvalidModelError);
    try {
        validate_model(bad, cost, ControlSet(0, 1), 32);
    } catch (const InvalidModelError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("A") != std::string::npos);
        CHECK(msg.find("t=") != std::string::npos);
    }
}

TEST_CASE("validate_model enforces the grid density precondition") {
    const auto m = preset("example1");
    CHECK_THROWS_AS(validate_model(m.coeffs, m.cost, m.uset, 8), std::invalid_argument);
}

TEST_CASE("multiplier pair enforces theta0 >= 0 and reports normalization") {
    CHECK_THROWS_AS(MultiplierPair(-0.1, 0.0), std::invalid_argument);
    const auto ex1 = preset("example1");
    std::vector<double> x1(100, 3.0);  // theta1 constant, samples irrelevant
    CHECK(ex1.mult.normalization(x1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("control clamping projects every evaluated value into U") {
    const ControlSet uset(0.0, 1.0);
    auto u = ControlProcess::grid({-0.5, 0.3, 1.7}).clamped(uset);
    CHECK(u.value(0, 0) == 0.0);
    CHECK(u.value(0, 1) == doctest::Approx(0.3));
    CHECK(u.value(0, 2) == 1.0);

    auto fb = ControlProcess::feedback([](double, double x, double) { return x; }).clamped(uset);
    CHECK(fb.eval_feedback(0.0, 2.0, 0.0) == 1.0);
    CHECK(fb.eval_feedback(0.0, -2.0, 0.0) == 0.0);
}
