#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "wcalc/approx_pipeline.hpp"

using namespace wcalc;

TEST(Cutoffs, PlateausAndBounds) {
    for (double ell : {3.0, 4.0, 6.0}) {
        for (double r = -ell - 1; r <= ell + 1; r += 0.01) {
            const double c = cutoff(r, ell);
            EXPECT_GE(c, 0.0);
            EXPECT_LE(c, 1.0);
            if (std::abs(r) <= ell - 2) {
                EXPECT_DOUBLE_EQ(c, 1.0);
                EXPECT_DOUBLE_EQ(clip(r, ell), r);
            }
            if (std::abs(r) >= ell) EXPECT_DOUBLE_EQ(c, 0.0);
            EXPECT_LE(std::abs(clip(r, ell)), ell - 1 + 1e-12);
        }
    }
}

TEST(Cutoffs, DerivativesMatchDifferences) {
    const double h = 1e-6;
    for (double r : {-3.7, -2.5, -1.2, 0.3, 2.2, 2.9, 3.4}) {
        EXPECT_NEAR(cutoff_deriv(r, 4.0), (cutoff(r + h, 4.0) - cutoff(r - h, 4.0)) / (2 * h), 1e-6);
        EXPECT_NEAR(clip_deriv(r, 4.0), (clip(r + h, 4.0) - clip(r - h, 4.0)) / (2 * h), 1e-6);
    }
    for (double t : {0.1, 0.5, 0.9})
        EXPECT_NEAR(smooth_step_deriv(t), (smooth_step(t + h) - smooth_step(t - h)) / (2 * h), 1e-6);
    EXPECT_DOUBLE_EQ(smooth_step(-0.5), 0.0);
    EXPECT_DOUBLE_EQ(smooth_step(1.5), 1.0);
}

TEST(Mollifier, DegreeThreeExactness) {
    // Mollifying x0² adds ε² times the kernel coordinate variance.
    for (std::size_t d = 1; d <= 4; ++d) {
        LambdaField f;
        f.n_args = d;
        f.eval = [](double lam, std::span<const double> x, double& v, double& dv) {
            v = x[0] * x[0] + lam * lam * lam;
            dv = 3 * lam * lam;
        };
        const double eps = 0.2;
        const LambdaField m = stage4_mollify(f, eps, make_mollifier_rule(d, 0, 1));
        std::vector<double> x(d, 0.7);
        double v = 0.0, dv = 0.0;
        m.eval(0.5, x, v, dv);
        const double vl = bump_coordinate_variance(1), vx = bump_coordinate_variance(d);
        EXPECT_NEAR(v, 0.49 + eps * eps * vx + 0.125 + 3 * 0.5 * eps * eps * vl, 1e-12) << d;
    }
    const auto r = make_mollifier_rule(2, 16, 3);
    EXPECT_NEAR(std::accumulate(r.weights.begin(), r.weights.end(), 0.0), 1.0, 1e-15);
    EXPECT_THROW(make_mollifier_rule(2, 5, 3), std::invalid_argument);
}

TEST(Stage5, UnitMeanAndPositive) {
    const std::vector<double> F{0.0, 0.0, 1.0, 3.0};
    const auto L = stage5_normalize(F, 0.01);
    EXPECT_NEAR(std::accumulate(L.begin(), L.end(), 0.0) / 4.0, 1.0, 1e-15);
    EXPECT_NEAR(L[0], 0.01 / 1.01, 1e-15);
    EXPECT_THROW(stage5_normalize(std::vector<double>{-0.5, 1.0}, 0.01), std::exception);
}

TEST(Stage1, ExactForBlockMeasurableCurve) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 100, 1);
    const DensityCurve c =
        exponential_family_curve(linear_family(constant_process(g, 0.0), constant_process(g, 1.0), -1.0, 2.0));
    const ConditionedCurve cc = stage1_dyadic_condition(c, 2, p, 16, 5);
    EXPECT_TRUE(cc.exact);
    const auto sums = block_sums_of(p, cc.block_len);
    for (std::size_t s = 0; s < 100; ++s) {
        double v = 0.0, dv = 0.0;
        cc.eval(0.3, std::span<const double>(sums).subspan(s * 4, 4), v, dv);
        EXPECT_NEAR(v, c.value(0.3, p.row(s)), 1e-12 * v);
        EXPECT_NEAR(dv, c.deriv(0.3, p.row(s)), 1e-10 * (1 + std::abs(dv)));
    }
}

TEST(Config, Validation) {
    PipelineConfig c;
    EXPECT_NO_THROW(c.validate(make_grid(8)));
    c.dyadic_level = 3;
    EXPECT_THROW(c.validate(make_grid(8)), std::invalid_argument);
    c = {};
    c.step_count = 3;
    EXPECT_THROW(c.validate(make_grid(8)), std::invalid_argument);
    c = {};
    c.mollify_eps = 1.5;
    EXPECT_THROW(c.validate(make_grid(8)), std::invalid_argument);
}

TEST(GammaField, ExponentialDensityGivesConstantGamma) {
    // With no truncation effect and a linear-in-sum exponent the pipeline's
    // Step-6 martingale of exp(λB_T - λ²T/2) gives γ = λ up to the mollifier
    // and positivity perturbations.
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 4000, 2);
    const DensityCurve c =
        exponential_family_curve(linear_family(constant_process(g, 0.0), constant_process(g, 1.0), -1.0, 2.0));
    PipelineConfig cfg;
    cfg.mollify_eps = 0.125;
    const PipelineReport r = pipeline_run(c, 0.3, 0.5, cfg, p, 8);
    ASSERT_EQ(r.stages.size(), 6u);
    EXPECT_GT(r.min_density, 0.0);
    EXPECT_LT(r.final_value_error, 0.05);
    EXPECT_LT(r.final_deriv_error, 0.05);
    EXPECT_NEAR(r.exponential_mean, 1.0, 4 * r.exponential_mean_se);
    for (double m : r.gamma_mean) EXPECT_NEAR(m, 0.3, 0.05);
    EXPECT_EQ(r.gamma_row_count, 8u);
}
