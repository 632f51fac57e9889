#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "wcalc/density_deriv.hpp"

using namespace wcalc;

namespace {
double sum(std::span<const double> r) { return std::accumulate(r.begin(), r.end(), 0.0); }
}  // namespace

TEST(NamedDensity, ClosedForms) {
    const TimeGrid g = make_grid(4);
    const std::vector<double> row{0.1, 0.2, -0.3, 0.5};
    EXPECT_NEAR(named_density(g, "tanh_b1").value(row), 1 + 0.5 * std::tanh(0.5), 1e-15);
    EXPECT_NEAR(named_density(g, "exp_b1").value(row), std::exp(0.5 - 0.5), 1e-15);
    EXPECT_NEAR(named_density(g, "sin_b_half").value(row), 1 + 0.5 * std::sin(0.3), 1e-15);
    EXPECT_THROW(named_density(g, "nope"), std::exception);
}

TEST(DensityCurve, InvariantsOnPool) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 20000, 1);
    const CurveFamily fam =
        linear_family(constant_process(g, 0.0), smooth_process(g, "tanh_last", 1.0), -1.0, 2.0);
    for (const DensityCurve& c : {exponential_family_curve(fam),
                                  mixture_curve(named_density(g, "one"), named_density(g, "exp_b1"))}) {
        const double lam = 0.4;
        const CurveValues v = curve_on_pool(c, p, lam);
        const std::vector<double> one(p.n_samples, 1.0);
        EXPECT_NEAR(weighted_expectation(p, one, v.value), 1.0, 1e-9) << c.kind;
        EXPECT_NEAR(weighted_expectation(p, one, v.deriv), 0.0, 1e-9) << c.kind;
        // L² first-order consistency on a shrinking step ladder.
        double prev = INFINITY;
        for (double h : {1e-2, 1e-3, 1e-4}) {
            const CurveValues w = curve_on_pool(c, p, lam + h);
            double e = 0.0;
            for (std::size_t i = 0; i < p.n_samples; ++i) {
                const double d = w.value[i] - v.value[i] - h * v.deriv[i];
                e += d * d / p.n_samples;
            }
            const double rel = std::sqrt(e) / h;
            EXPECT_LT(rel, prev) << c.kind;
            prev = rel;
        }
    }
}

TEST(D1F, MeanClosedForm) {
    const EmpiricalLaw law = make_law(1, {-1.0, 0.0, 2.0}, {0.25, 0.25, 0.5}, true);
    const std::vector<double> x{-2.0, 0.0, 1.5};
    const D1FProfile p = d1F_formula(builtin_cylindrical("mean"), law, x);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p.values[j], x[j] - 0.75, 1e-9);
}

TEST(D1F, SinMeanClosedForm) {
    const EmpiricalLaw law = make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true);
    const double es = 0.2 * std::sin(-1.0) + 0.5 * std::sin(0.5) + 0.3 * std::sin(2.0);
    const std::vector<double> x{-1.0, 0.3, 3.0};
    const D1FProfile p = d1F_formula(builtin_cylindrical("sin_mean"), law, x);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(p.values[j], std::sin(x[j]) - es, 1e-9);
}

TEST(D1F, CenteredUnderLaw) {
    const EmpiricalLaw law = make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true);
    const D1FProfile p = d1F_formula(builtin_cylindrical("mean_sq"), law, law.atoms);
    double m = 0.0;
    for (std::size_t i = 0; i < 3; ++i) m += law.weights[i] * p.values[i];
    EXPECT_NEAR(m, 0.0, 1e-12);
}

TEST(Recenter, ConstantAndIdempotent) {
    const PathPool p = sample_paths(make_grid(1), 10, 2);
    const std::vector<double> c(10, 3.0);
    for (double v : recenter_to_Q(c, p)) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(ChainRule, ClosedFormExponential) {
    // f = mean, L^λ = exp(λ B_1 - λ²/2): d/dλ E[B_1 L^λ] = 1.
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 100000, 3);
    const auto xi = brownian_at(p, 1.0);
    const DensityCurve c =
        exponential_family_curve(linear_family(constant_process(g, 0.0), constant_process(g, 1.0), -1.0, 2.0));
    const ChainRuleResult r = chain_rule_check(builtin_cylindrical("mean"), c, 0.3, xi, p, 1e-3);
    EXPECT_NEAR(r.lhs, r.rhs, 3 * r.std_err + 1e-6);
    EXPECT_NEAR(r.rhs, 1.0, 3 * r.rhs_std_err);
}

TEST(SecondOrder, OneDimensionalQuadraticError) {
    const EmpiricalLaw law = make_law(1, {-1.0, 0.5, 2.0}, {0.2, 0.5, 0.3}, true);
    const std::vector<double> x{-1.0, 0.0, 1.0};
    const auto a = second_order_check_1d(builtin_cylindrical("sin_mean"), law, x, 1e-1);
    const auto b = second_order_check_1d(builtin_cylindrical("sin_mean"), law, x, 1e-2);
    EXPECT_LT(a.max_err, 1e-1 * 1e-1);
    EXPECT_NEAR(a.max_err / b.max_err, 100.0, 5.0);
}

TEST(SecondOrder, MultidimGradientMatchesLions) {
    FieldFn phi;
    phi.dim = 2;
    phi.value = [](std::span<const double> x) { return x[0] * x[1]; };
    phi.grad = [](std::span<const double> x, std::span<double> g) {
        g[0] = x[1];
        g[1] = x[0];
    };
    const CylindricalFn f = make_cylindrical(square_fn(), phi);
    const EmpiricalLaw law = make_law(2, {0.0, 1.0, 1.0, -1.0, 2.0, 0.5}, {0.3, 0.3, 0.4}, true);
    const std::vector<double> x{0.5, 0.5, -1.0, 2.0};
    const auto r = second_order_check_multidim(f, law, x, 1e-3);
    EXPECT_LT(r.max_err, 1e-6);
}

TEST(NestedLink, IndependentInstanceAgreesWithinKernelBias) {
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 20000, 4);
    std::vector<double> a(p.n_samples), b(p.n_samples), L(p.n_samples);
    const PathDensity d = named_density(g, "tanh_b1");
    for (std::size_t i = 0; i < p.n_samples; ++i) {
        a[i] = p.row(i)[0] + p.row(i)[1];
        b[i] = p.row(i)[2] + p.row(i)[3];
        L[i] = d.value(p.row(i));
    }
    const double m = std::accumulate(L.begin(), L.end(), 0.0) / p.n_samples;
    for (double& v : L) v /= m;
    KernelOptions ko;
    ko.bandwidth = 0.2;
    const std::vector<double> x1{0.0}, x2{0.5};
    const auto r = nested_link(builtin_nested("nested_gauss"), p, L, a, b, x1, x2, ko);
    EXPECT_LT(r.max_err, 4 * r.repr_std_err + 0.05 * 0.04);
}
