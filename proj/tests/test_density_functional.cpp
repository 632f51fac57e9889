#include <gtest/gtest.h>

#include <cmath>

#include "wcalc/density_functional.hpp"

using namespace wcalc;

TEST(Trapezoid, IntegratesLinearExactly) {
    const std::vector<double> v{0.0, 1.0, 2.0, 3.0};
    EXPECT_DOUBLE_EQ(trapezoid(v, 0.5), 2.25);
}

TEST(Kde, UnitMassAndGaussianShape) {
    const EmpiricalLaw law = make_law(1, {0.0}, {1.0}, true);
    const GridDensity h = kde_density(law, 0.3, 4001);
    EXPECT_NEAR(h.mass, 1.0, 1e-12);
    double best = 0.0;
    for (std::size_t i = 0; i < h.x_grid.size(); ++i)
        best = std::max(best, std::abs(h.values[i] - std::exp(-0.5 * h.x_grid[i] * h.x_grid[i] / 0.09) /
                                                        (0.3 * std::sqrt(2 * M_PI))));
    EXPECT_LT(best, 1e-6);
}

TEST(DensityFunctional, InnerMatchesMeasureIntegral) {
    // ∫ρ h_bw dx = E ρ(ξ + bw Z); for ρ = x the KDE is unbiased.
    const EmpiricalLaw law = make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true);
    const DensityFunctionalPhi Phi = builtin_density_functional("lin_sq");
    const GridDensity h = kde_density(law, 0.2);
    EXPECT_NEAR(Phi.inner(h), -0.2 + 0.25 + 0.6, 1e-6);
    EXPECT_NEAR(Phi(h), std::pow(-0.2 + 0.25 + 0.6, 2), 1e-6);
}

TEST(DensityFunctional, RepresenterHasZeroWindowMean) {
    const EmpiricalLaw law = make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true);
    const DensityFunctionalPhi Phi = builtin_density_functional("cos_sq");
    const GridDensity h = kde_density(law, 0.3);
    const auto r = dPhi_representer(Phi, h, h.x_grid);
    EXPECT_NEAR(trapezoid(r, h.spacing()), 0.0, 1e-9);
}

TEST(Bensoussan, LinearSquareHasNoKernelBias) {
    const PathPool p = sample_paths(make_grid(2), 20000, 3);
    const auto xi = brownian_at(p, 1.0);
    const std::vector<double> L(p.n_samples, 1.0), probes{-1.0, 0.0, 1.0};
    const auto r = bensoussan_check(builtin_density_functional("lin_sq"), p, L, xi, probes, 0.3);
    EXPECT_LT(r.max_err, 1e-4);
}

TEST(Bensoussan, ErrorShrinksWithBandwidth) {
    const PathPool p = sample_paths(make_grid(2), 20000, 4);
    const auto xi = brownian_at(p, 1.0);
    const std::vector<double> L(p.n_samples, 1.0), probes{-1.0, 0.0, 1.0};
    const auto a = bensoussan_check(builtin_density_functional("sin_sq"), p, L, xi, probes, 0.4);
    const auto b = bensoussan_check(builtin_density_functional("sin_sq"), p, L, xi, probes, 0.1);
    EXPECT_LT(b.max_err, a.max_err);
}
