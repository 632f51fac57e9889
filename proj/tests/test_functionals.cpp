#include <gtest/gtest.h>

#include <cmath>

#include "wcalc/functionals.hpp"

using namespace wcalc;

namespace {
EmpiricalLaw three_atoms() { return make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true); }
}  // namespace

TEST(Cylindrical, BuiltinsEvaluate) {
    const EmpiricalLaw law = three_atoms();
    const double mean = -0.2 + 0.25 + 0.6;
    EXPECT_NEAR(eval_cyl(builtin_cylindrical("mean"), law), mean, 1e-15);
    EXPECT_NEAR(eval_cyl(builtin_cylindrical("mean_sq"), law), mean * mean, 1e-15);
    const double s = 0.2 * std::sin(-1.0) + 0.5 * std::sin(0.5) + 0.3 * std::sin(2.0);
    EXPECT_NEAR(eval_cyl(builtin_cylindrical("sin_mean"), law), s, 1e-15);
    EXPECT_THROW(builtin_cylindrical("nope"), std::exception);
}

TEST(Cylindrical, RejectsWrongDerivative) {
    ScalarFn bad{[](double x) { return x * x; }, [](double x) { return x; }, "bad"};
    EXPECT_THROW(make_cylindrical(bad, scalar_field(identity_fn())), std::invalid_argument);
}

TEST(Lions, ClosedFormForMeanSquare) {
    const EmpiricalLaw law = three_atoms();
    const double mean = -0.2 + 0.25 + 0.6;
    for (double x : {-3.0, 0.0, 4.0}) {
        const auto d = lions_derivative(builtin_cylindrical("mean_sq"), law, std::span<const double>(&x, 1));
        ASSERT_EQ(d.size(), 1u);
        EXPECT_NEAR(d[0], 2.0 * mean, 1e-14);
    }
    LionsDerivativeAt at(builtin_cylindrical("sin_mean"), law);
    EXPECT_NEAR(at.scalar(0.3), std::cos(0.3), 1e-15);
}

TEST(Lions, MatchesLiftedDerivative) {
    // d/ds f(law(ξ + s η)) = E[∂_μ f(law, ξ) η]
    const PathPool p = sample_paths(make_grid(2), 2000, 8);
    std::vector<double> L(2000, 1.0), xi(2000), eta(2000);
    for (std::size_t i = 0; i < 2000; ++i) {
        xi[i] = p.row(i)[0] + p.row(i)[1];
        eta[i] = std::cos(xi[i]);
    }
    for (const char* id : {"mean", "mean_sq", "sin_mean"}) {
        const CylindricalFn f = builtin_cylindrical(id);
        const LawFunctional F = [&](const EmpiricalLaw& m) { return eval_cyl(f, m); };
        const double fd = lifted_derivative_fd(F, p, L, xi, eta, 1);
        const EmpiricalLaw law = pushforward_law(p, L, xi);
        LionsDerivativeAt d(f, law);
        double repr = 0.0;
        for (std::size_t i = 0; i < 2000; ++i) repr += d.scalar(xi[i]) * eta[i] / 2000.0;
        EXPECT_NEAR(fd, repr, 1e-7) << id;
    }
}

TEST(Nested, ValueWithIndependentConditioningIsGaussianMean) {
    // ξ2 independent of ξ1 => E[tanh(ξ1)|ξ2] ≈ E tanh(ξ1) = 0, so the value is ≈ 0.
    const PathPool p = sample_paths(make_grid(2), 20000, 9);
    std::vector<double> L(20000, 1.0), a(20000), b(20000);
    for (std::size_t i = 0; i < 20000; ++i) {
        a[i] = p.row(i)[0];
        b[i] = p.row(i)[1];
    }
    const NestedFn fn = builtin_nested("nested_gauss");
    const double v = eval_nested(fn, p, L, a, b);
    EXPECT_LT(std::abs(v), 0.01);
}

TEST(Registry, Ids) {
    EXPECT_TRUE(is_cylindrical_id("mean"));
    EXPECT_FALSE(is_cylindrical_id("nested_gauss"));
    EXPECT_TRUE(is_nested_id("nested_gauss"));
    EXPECT_EQ(builtin_ids().size(), 4u);
}
