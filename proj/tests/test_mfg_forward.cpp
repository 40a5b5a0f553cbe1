#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "mfglab/mfg_forward.hpp"

using namespace mfglab;

namespace {

MfgCoefficients coeffs(GridPtr g) {
    MfgCoefficients c;
    c.v = 1.0;
    c.k = ScalarField::sample(g, [](const Vec3& x) { return 1.0 + 0.5 * std::exp(-10 * (x[0] - 0.5) * (x[0] - 0.5)); });
    c.r = ScalarField::sample(g, [](const Vec3& x) { return 0.5 + x[1]; });
    c.F.terms.push_back({2, ScalarField::constant(g, 1.5)});
    c.F.terms.push_back({3, ScalarField::sample(g, [](const Vec3& x) { return 2.0 + x[2]; })});
    return c;
}

BoundaryTrace shape_f(GridPtr g, double a) {
    return BoundaryTrace::sample(g, [a](const Vec3& x) { return a * std::cos(M_PI * x[0]) * std::cos(0.5 * M_PI * x[1]); });
}
BoundaryTrace shape_g(GridPtr g, double a) {
    return BoundaryTrace::sample(g, [a](const Vec3& x) { return a * (0.6 + 0.4 * std::sin(M_PI * x[1] + x[2])); });
}

double sol_norm(const MfgSolution& s) { return std::hypot(l2_norm(s.u), l2_norm(s.m)); }

}  // namespace

TEST_CASE("evaluate_F") {
    auto g = make_grid(2, 4);
    FSeries empty;
    CHECK(evaluate_F(empty, ScalarField::constant(g, 3.0)).values.cwiseAbs().maxCoeff() == 0.0);
    FSeries f2;
    f2.terms.push_back({2, ScalarField::constant(g, 2.0)});
    CHECK((evaluate_F(f2, ScalarField::constant(g, 3.0)).values.array() - 9.0).abs().maxCoeff() < 1e-14);
    f2.terms.push_back({3, ScalarField::constant(g, 6.0)});
    CHECK((evaluate_F(f2, ScalarField::constant(g, 1.0)).values.array() - 2.0).abs().maxCoeff() < 1e-14);
    FSeries bad;
    bad.terms.push_back({1, ScalarField::constant(g, 1.0)});
    CHECK_THROWS_AS(bad.check(), ParameterError);
}

TEST_CASE("mfg_residual trivial states") {
    auto g = make_grid(3, 6);
    auto c = coeffs(g);
    auto [ru, rm] = mfg_residual(c, ScalarField::zeros(g), ScalarField::zeros(g), BoundaryTrace::zeros(g), BoundaryTrace::zeros(g));
    CHECK(ru.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(rm.values.cwiseAbs().maxCoeff() == 0.0);
    auto c0 = c;
    c0.k = ScalarField::zeros(g);
    auto [a, b] = mfg_residual(c0, ScalarField::constant(g, 0.3), ScalarField::zeros(g), BoundaryTrace::constant(g, 0.3),
                               BoundaryTrace::zeros(g));
    CHECK(a.values.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(b.values.cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("solve_mfg trivial data") {
    auto g = make_grid(3, 8);
    auto c = coeffs(g);
    auto s = solve_mfg(c, BoundaryTrace::zeros(g), BoundaryTrace::zeros(g));
    CHECK(s.newton_iterations == 1);
    CHECK(s.u.values.cwiseAbs().maxCoeff() == 0.0);
    CHECK(s.m.values.cwiseAbs().maxCoeff() == 0.0);

    auto c0 = c;
    c0.k = ScalarField::zeros(g);
    c0.F.terms.clear();
    auto s2 = solve_mfg(c0, BoundaryTrace::constant(g, 0.05), BoundaryTrace::zeros(g));
    CHECK((s2.u.values.array() - 0.05).abs().maxCoeff() < 1e-10);
    CHECK(s2.m.values.cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(solve_mfg(c, BoundaryTrace::constant(g, 0.2), BoundaryTrace::zeros(g)), ParameterError);
}

TEST_CASE("small-data scaling, quadratic convergence, consistency") {
    auto g = make_grid(3, 10);
    auto c = coeffs(g);
    std::vector<double> ratios;
    double prev = 0.0;
    for (double eps : {0.1, 0.05, 0.025}) {
        auto f = shape_f(g, 2 * eps / 3), gg = shape_g(g, eps / 3);
        auto s = solve_mfg(c, f, gg);
        CHECK(s.final_residual <= 1e-10);
        auto [ru, rm] = mfg_residual(c, s.u, s.m, f, gg);
        CHECK(std::max(ru.values.cwiseAbs().maxCoeff(), rm.values.cwiseAbs().maxCoeff()) <= 1e-10);
        for (std::size_t i = 0; i + 1 < s.residual_history.size(); ++i)
            if (s.residual_history[i] <= 1e-3 && s.residual_history[i + 1] > 1e-13)
                CHECK(s.residual_history[i + 1] <= 10 * s.residual_history[i] * s.residual_history[i]);
        const double n = sol_norm(s);
        if (prev > 0.0) {
            CHECK(prev / n >= 1.8);
            CHECK(prev / n <= 2.2);
        }
        prev = n;
        ratios.push_back(n / (f.values.cwiseAbs().maxCoeff() + gg.values.cwiseAbs().maxCoeff()));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK((*hi - *lo) / *lo < 0.25);
}

TEST_CASE("positivity of m for nonnegative g") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> U(0, 1);
    auto g = make_grid(3, 8);
    for (int t = 0; t < 5; ++t) {
        auto c = coeffs(g);
        const double a = U(rng), b = U(rng), w = 1 + 4 * U(rng);
        auto f = BoundaryTrace::sample(g, [&](const Vec3& x) { return 0.04 * std::sin(w * x[0] + a * x[1] + b); });
        auto gg = BoundaryTrace::sample(g, [&](const Vec3& x) { return 0.01 + 0.04 * std::pow(std::sin(w * x[2] + b * x[0]), 2); });
        NewtonOptions o;
        o.require_nonneg_g = true;
        auto s = solve_mfg(c, f, gg, o);
        CHECK(s.m.real().minCoeff() >= -1e-8);
    }
    NewtonOptions o;
    o.require_nonneg_g = true;
    CHECK_THROWS_AS(solve_mfg(coeffs(g), BoundaryTrace::zeros(g), BoundaryTrace::constant(g, -0.01), o), PositivityViolation);
}

TEST_CASE("too few iterations reports NonConvergence") {
    auto g = make_grid(3, 8);
    NewtonOptions o;
    o.max_iter = 1;
    CHECK_THROWS_AS(solve_mfg(coeffs(g), shape_f(g, 0.05), shape_g(g, 0.04), o), NonConvergence);
}
