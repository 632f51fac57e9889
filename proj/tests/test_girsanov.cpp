#include <gtest/gtest.h>

#include <cmath>

#include "wcalc/girsanov.hpp"

using namespace wcalc;

namespace {
double BT(std::span<const double> r) {
    double s = 0.0;
    for (double x : r) s += x;
    return s;
}
}  // namespace

TEST(StepProcess, EvaluatesAndBounds) {
    const TimeGrid g = make_grid(4);
    const StepProcess t = table_process(g, 2.0, {1.0, -1.0, 0.5, 0.0});
    EXPECT_DOUBLE_EQ(t.eval(2, {}), 1.0);
    const StepProcess s = smooth_process(g, "tanh_last", 1.5);
    const std::vector<double> prefix{0.3, -0.1};
    EXPECT_NEAR(s.eval(2, prefix), 1.5 * std::tanh(-0.1), 1e-15);
    EXPECT_DOUBLE_EQ(s.eval(0, {}), 0.0);
    EXPECT_THROW(smooth_process(g, "cosh", 1.0), std::exception);
    EXPECT_THROW(table_process(g, 1.0, {1.0}), std::exception);
}

TEST(Doleans, ConstantClosedForm) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 100, 1);
    const auto E = doleans_exponential(p, constant_process(g, 0.4), 1.0);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(E[i], std::exp(0.4 * BT(p.row(i)) - 0.08), 1e-12);
}

TEST(Doleans, LambdaDerivativeMatchesDifference) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 200, 2);
    const CurveFamily fam =
        linear_family(smooth_process(g, "tanh_last", 0.5), smooth_process(g, "sin_last", 1.0), -1.0, 1.0);
    EXPECT_NO_THROW(check_curve_family(fam, p));
    const double lam = 0.3, h = 1e-5;
    const auto d = doleans_lambda_derivative(p, fam.gamma(lam), fam.dgamma(lam), 1.0);
    const auto up = doleans_exponential(p, fam.gamma(lam + h), 1.0);
    const auto dn = doleans_exponential(p, fam.gamma(lam - h), 1.0);
    for (std::size_t i = 0; i < 200; ++i) EXPECT_NEAR(d[i], (up[i] - dn[i]) / (2 * h), 1e-6 * (1 + std::abs(d[i])));
}

TEST(Flows, ForwardBackwardInvert) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 500, 3);
    const StepProcess s = smooth_process(g, "tanh_level", 1.2);
    const PathPool back = shift_backward(shift_forward(p, s, 1.0), s, 1.0);
    for (std::size_t k = 0; k < p.increments.size(); ++k) EXPECT_NEAR(back.increments[k], p.increments[k], 1e-12);
}

TEST(Flows, PartialHorizonLeavesTailUnchanged) {
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 10, 4);
    const PathPool f = shift_forward(p, constant_process(g, 1.0), 0.5);
    for (std::size_t s = 0; s < 10; ++s) {
        EXPECT_NEAR(f.row(s)[0], p.row(s)[0] + 0.25, 1e-15);
        EXPECT_DOUBLE_EQ(f.row(s)[3], p.row(s)[3]);
    }
}

TEST(Girsanov, ConstantDriftMeanShift) {
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 50000, 5);
    const auto r = girsanov_check(p, constant_process(g, 0.5), BT);
    EXPECT_NEAR(r.lhs, r.rhs, 4 * r.std_err);
    EXPECT_NEAR(r.rhs, 0.5, 1e-12 + 4 * 1.0 / std::sqrt(50000.0));
}

TEST(RelativeExponential, ProductIdentity) {
    // E(γ') = E(γ) · rel(γ, γ') path by path.
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 100, 6);
    const StepProcess a = smooth_process(g, "tanh_last", 0.7), b = smooth_process(g, "sin_last", -0.4);
    const auto Ea = doleans_exponential(p, a, 1.0), Eb = doleans_exponential(p, b, 1.0);
    const auto r = relative_exponential(p, a, b, 1.0);
    for (std::size_t i = 0; i < 100; ++i) EXPECT_NEAR(Ea[i] * r[i], Eb[i], 1e-12 * Eb[i]);
}
