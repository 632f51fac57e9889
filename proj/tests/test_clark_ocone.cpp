#include <gtest/gtest.h>

#include <cmath>

#include "wcalc/clark_ocone.hpp"

using namespace wcalc;

namespace {
SmoothFunctional exp_of_sum(const TimeGrid& blocks, double sigma) {
    const double T = blocks.horizon();
    return make_smooth_functional(
        blocks,
        [=](std::span<const double> x) {
            double s = 0.0;
            for (double v : x) s += v;
            return std::exp(sigma * s - 0.5 * sigma * sigma * T);
        },
        [=](std::span<const double> x, std::span<double> g) {
            double s = 0.0;
            for (double v : x) s += v;
            for (double& v : g) v = sigma * std::exp(sigma * s - 0.5 * sigma * sigma * T);
        },
        "exp");
}
}  // namespace

TEST(SmoothFunctional, RejectsWrongGradient) {
    EXPECT_THROW(make_smooth_functional(
                     make_grid(1), [](std::span<const double> x) { return x[0] * x[0]; },
                     [](std::span<const double> x, std::span<double> g) { g[0] = x[0]; }),
                 std::invalid_argument);
}

TEST(BlockMap, CoarseningOnly) {
    const auto m = block_map(make_grid(8), make_grid(2));
    EXPECT_EQ(m, (std::vector<std::size_t>{0, 0, 0, 0, 1, 1, 1, 1}));
    EXPECT_THROW(block_map(make_grid(3), make_grid(2)), std::exception);
}

TEST(GaussianSmooth, ClosedFormConditionalExpectation) {
    // E[exp(σB_1 - σ²/2) | F_s] = exp(σB_s - σ²s/2)
    const TimeGrid fine = make_grid(4);
    const SmoothFunctional F = exp_of_sum(make_grid(1), 0.8);
    const std::vector<double> prefix{0.3, -0.5};
    EXPECT_NEAR(gaussian_smooth(F, fine, 0.5, prefix), std::exp(0.8 * (-0.2) - 0.32 * 0.5), 1e-12);
    EXPECT_NEAR(gaussian_smooth_partial(F, 0, fine, 0.5, prefix), 0.8 * std::exp(0.8 * (-0.2) - 0.32 * 0.5), 1e-12);
}

TEST(ClarkOcone, ExponentialGivesConstantGamma) {
    const PathPool p = sample_paths(make_grid(8), 500, 2);
    const auto r = clark_ocone_decompose(exp_of_sum(make_grid(2), 0.6), p);
    for (double g : r.gamma) EXPECT_NEAR(g, 0.6, 1e-10);
    EXPECT_FALSE(r.used_mc);
}

TEST(ClarkOcone, IntegrationByPartsWithoutGradient) {
    const PathPool p = sample_paths(make_grid(4), 200, 3);
    const TimeGrid blocks = make_grid(1);
    const auto with = make_smooth_functional(
        blocks, [](std::span<const double> x) { return 1.0 + 0.5 * std::tanh(x[0]); },
        [](std::span<const double> x, std::span<double> g) {
            g[0] = 0.5 / (std::cosh(x[0]) * std::cosh(x[0]));
        });
    const auto without = make_smooth_functional(
        blocks, [](std::span<const double> x) { return 1.0 + 0.5 * std::tanh(x[0]); }, nullptr);
    const auto a = clark_ocone_decompose(with, p), b = clark_ocone_decompose(without, p);
    // Two different quadratures of the same conditional expectation.
    for (std::size_t i = 0; i < a.Z.size(); ++i) EXPECT_NEAR(a.Z[i], b.Z[i], 1e-5);
}

TEST(ClarkOcone, ReconstructionExactForLinear) {
    // L = 1 + B_1/4 is its own Itô expansion.
    const PathPool p = sample_paths(make_grid(4), 300, 4);
    const auto L = make_smooth_functional(
        make_grid(1), [](std::span<const double> x) { return 2.0 + 0.25 * x[0]; },
        [](std::span<const double>, std::span<double> g) { g[0] = 0.25; });
    const auto r = clark_ocone_decompose(L, p);
    std::vector<double> vals(300);
    for (std::size_t s = 0; s < 300; ++s) {
        double b = 0.0;
        for (double x : p.row(s)) b += x;
        vals[s] = 2.0 + 0.25 * b - 1.0;  // reconstruction_error subtracts 1
    }
    EXPECT_LT(reconstruction_error(vals, r.Z, p), 1e-12);
}

TEST(ClarkOcone, FallsBackToMonteCarloAboveCap) {
    const TimeGrid fine = make_grid(8);
    const PathPool p = sample_paths(fine, 20, 5);
    ClarkOconeOptions opt;
    opt.mc_inner = 20000;
    opt.quad_order = 8;
    const auto r = clark_ocone_decompose(exp_of_sum(make_grid(8), 0.5), p, opt);
    EXPECT_TRUE(r.used_mc);
    for (double g : r.gamma) EXPECT_NEAR(g, 0.5, 0.05);
}

TEST(GammaStepProcess, MatchesDecomposition) {
    const TimeGrid fine = make_grid(4);
    const PathPool p = sample_paths(fine, 30, 6);
    const auto L = make_smooth_functional(
        make_grid(2), [](std::span<const double> x) { return 1.0 + 0.3 * std::sin(x[0] + 2 * x[1]); }, nullptr);
    const auto r = clark_ocone_decompose(L, p);
    const StepProcess s = gamma_step_process(L, fine);
    for (std::size_t q = 0; q < 30; ++q)
        for (std::size_t i = 0; i < 4; ++i)
            EXPECT_NEAR(s.eval(i, p.row(q).first(i)), r.gamma[q * 4 + i], 1e-10);
}
