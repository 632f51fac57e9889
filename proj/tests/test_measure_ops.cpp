#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "wcalc/measure_ops.hpp"

using namespace wcalc;

TEST(EmpiricalLaw, PushforwardNormalizesDensityWeights) {
    const PathPool p = sample_paths(make_grid(2), 1000, 1);
    std::vector<double> L(1000), xi(1000);
    for (std::size_t i = 0; i < 1000; ++i) {
        L[i] = 1.0 + 0.5 * std::sin(static_cast<double>(i));
        xi[i] = p.row(i)[0];
    }
    const EmpiricalLaw law = pushforward_law(p, L, xi);
    EXPECT_NEAR(law.total_mass(), 1.0, 1e-12);
    const double m = integrate(law, [](std::span<const double> x) { return x[0]; });
    EXPECT_NEAR(m, weighted_expectation(p, L, xi) / weighted_expectation(p, L, std::vector<double>(1000, 1.0)), 1e-12);
}

TEST(EmpiricalLaw, RejectsNegativeNormalizedWeights) {
    EXPECT_THROW(make_law(1, {0.0, 1.0}, {1.5, -0.5}, true), std::exception);
    EXPECT_NO_THROW(make_law(1, {0.0, 1.0}, {1.5, -0.5}, false));
}

TEST(Wasserstein1, ClosedForms) {
    const EmpiricalLaw a = make_law(1, {0.0}, {1.0}, true);
    const EmpiricalLaw b = make_law(1, {2.5}, {1.0}, true);
    EXPECT_DOUBLE_EQ(wasserstein1(a, b), 2.5);
    const EmpiricalLaw c = make_law(1, {0.0, 1.0}, {0.5, 0.5}, true);
    const EmpiricalLaw d = make_law(1, {0.0, 1.0}, {0.25, 0.75}, true);
    EXPECT_NEAR(wasserstein1(c, d), 0.25, 1e-15);
    EXPECT_DOUBLE_EQ(wasserstein1(c, c), 0.0);
}

TEST(Wasserstein1, SymmetricAndTranslationCovariant) {
    std::mt19937_64 e(1);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> xa(7), xb(5), wa(7, 1.0 / 7), wb(5, 0.2);
        for (double& x : xa) x = u(e);
        for (double& x : xb) x = u(e);
        const auto a = make_law(1, xa, wa, true), b = make_law(1, xb, wb, true);
        EXPECT_NEAR(wasserstein1(a, b), wasserstein1(b, a), 1e-14);
        std::vector<double> xs = xa;
        for (double& x : xs) x += 0.7;
        EXPECT_NEAR(wasserstein1(a, make_law(1, xs, wa, true)), 0.7, 1e-12);
    }
}

TEST(Expectation, StdErrorOfConstantIsZero) {
    const PathPool p = sample_paths(make_grid(1), 100, 2);
    const std::vector<double> one(100, 1.0), g(100, 3.0);
    EXPECT_NEAR(weighted_expectation(p, one, g), 3.0, 1e-14);
    EXPECT_NEAR(weighted_std_error(p, one, g), 0.0, 1e-15);
}

TEST(Silverman, MatchesFormulaForUnitWeights) {
    std::mt19937_64 e(4);
    std::normal_distribution<double> nd;
    std::vector<double> v(50000), w(50000, 1.0);
    for (double& x : v) x = nd(e);
    const double bw = silverman_bandwidth(v, w);
    EXPECT_NEAR(bw, 0.9 * std::pow(50000.0, -0.2), 0.02 * bw);
}

TEST(ConditionalExpectation, RecoversLinearRegression) {
    std::mt19937_64 e(5);
    std::normal_distribution<double> nd;
    const std::size_t n = 100000;
    std::vector<double> y(n), x(n), L(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        y[i] = nd(e);
        x[i] = 2.0 * y[i] + nd(e);
    }
    const std::vector<double> q{-1.0, 0.0, 1.0};
    KernelOptions opt;
    opt.bandwidth = 0.05;
    const auto exact = conditional_expectation_at(x, y, L, q, {opt.bandwidth, KernelMethod::exact});
    const auto binned = conditional_expectation_at(x, y, L, q, {opt.bandwidth, KernelMethod::binned});
    for (std::size_t j = 0; j < 3; ++j) {
        EXPECT_NEAR(exact[j], 2.0 * q[j], 0.05);
        EXPECT_NEAR(binned[j], exact[j], 5e-3);
    }
}
