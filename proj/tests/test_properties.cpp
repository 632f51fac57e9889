// Randomized invariants: recentering identities, wasserstein1 against the
// dual brute force, kernel serial/parallel agreement over random sizes.

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "wcalc/checks.hpp"
#include "wcalc/density_deriv.hpp"

using namespace wcalc;

TEST(Recentering, RandomProfilesAllSeeds) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const BatteryResult r = run_recentering_properties(seed, 40);
        for (const auto& rec : r.records) EXPECT_TRUE(rec.pass) << rec.name << " seed " << seed << " gap " << rec.gap();
    }
}

TEST(Recentering, QLOfQEqualsQLDirect) {
    const PathPool p = sample_paths(make_grid(2), 30, 5);
    std::vector<double> v(30), L(30);
    std::mt19937_64 e(1);
    std::uniform_real_distribution<double> u(0.1, 2.0);
    for (std::size_t i = 0; i < 30; ++i) {
        v[i] = u(e) * 10.0;
        L[i] = u(e);
    }
    const auto a = recenter_to_QL(recenter_to_Q(v, p), L, p);
    const auto b = recenter_to_QL(v, L, p);
    for (std::size_t i = 0; i < 30; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Wasserstein, DualBruteForceSmallCases) {
    const EmpiricalLaw a = make_law(1, {0.0, 1.0}, {0.5, 0.5}, true);
    const EmpiricalLaw b = make_law(1, {0.0, 3.0}, {0.5, 0.5}, true);
    EXPECT_NEAR(wasserstein1_dual_bruteforce(a, b), 1.0, 1e-15);
    EXPECT_NEAR(wasserstein1_dual_bruteforce(a, a), 0.0, 1e-15);
}

TEST(Wasserstein, AgreesWithDualOnRandomInstances) {
    for (std::uint64_t seed : {7u, 8u}) {
        const BatteryResult r = run_wasserstein_oracle(seed, 200);
        ASSERT_EQ(r.records.size(), 1u);
        EXPECT_TRUE(r.records[0].pass) << r.records[0].lhs;
    }
}

TEST(Wasserstein, TriangleInequality) {
    std::mt19937_64 e(3);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    const auto law = [&] {
        std::vector<double> x(4), w(4, 0.25);
        for (double& v : x) v = u(e);
        return make_law(1, x, w, true);
    };
    for (int t = 0; t < 100; ++t) {
        const auto a = law(), b = law(), c = law();
        EXPECT_LE(wasserstein1(a, c), wasserstein1(a, b) + wasserstein1(b, c) + 1e-12);
    }
}
