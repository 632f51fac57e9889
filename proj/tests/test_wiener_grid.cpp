#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "wcalc/wiener_grid.hpp"

using namespace wcalc;

TEST(TimeGrid, UniformKnotsAndLookup) {
    const TimeGrid g = make_grid(8, 2.0);
    EXPECT_EQ(g.n_steps(), 8u);
    EXPECT_DOUBLE_EQ(g.horizon(), 2.0);
    EXPECT_DOUBLE_EQ(g.dt(3), 0.25);
    EXPECT_TRUE(g.is_uniform());
    EXPECT_TRUE(g.is_dyadic());
    EXPECT_EQ(g.knot_index(1.0), 4u);
    EXPECT_FALSE(g.has_knot(0.3));
    EXPECT_THROW(g.knot_index(0.3), std::exception);
}

TEST(TimeGrid, RejectsBadKnots) {
    EXPECT_THROW(TimeGrid(std::vector<double>{0.0, 0.5, 0.5, 1.0}), std::exception);
    EXPECT_THROW(TimeGrid(std::vector<double>{0.1, 1.0}), std::exception);
    EXPECT_FALSE(TimeGrid(std::vector<double>{0.0, 0.3, 1.0}).is_uniform());
}

TEST(SamplePaths, DeterministicPerSeed) {
    const TimeGrid g = make_grid(4);
    const PathPool a = sample_paths(g, 100, 9), b = sample_paths(g, 100, 9), c = sample_paths(g, 100, 10);
    EXPECT_EQ(a.increments, b.increments);
    EXPECT_NE(a.increments, c.increments);
    EXPECT_DOUBLE_EQ(a.weight_sum(), 100.0);
}

TEST(SamplePaths, IncrementMomentsMatchStepVariance) {
    const TimeGrid g = make_grid(4, 2.0);
    const PathPool p = sample_paths(g, 200000, 1);
    for (std::size_t i = 0; i < 4; ++i) {
        double m = 0.0, v = 0.0;
        for (std::size_t s = 0; s < p.n_samples; ++s) {
            m += p.row(s)[i];
            v += p.row(s)[i] * p.row(s)[i];
        }
        m /= p.n_samples;
        v /= p.n_samples;
        EXPECT_NEAR(m, 0.0, 4.0 * std::sqrt(0.5 / p.n_samples));
        EXPECT_NEAR(v, 0.5, 4.0 * 0.5 * std::sqrt(2.0 / p.n_samples));
    }
}

TEST(SamplePaths, BrownianAtSumsPrefix) {
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 10, 2);
    const auto b = brownian_at(p, 0.5);
    for (std::size_t s = 0; s < 10; ++s) EXPECT_DOUBLE_EQ(b[s], p.row(s)[0] + p.row(s)[1]);
    EXPECT_THROW(brownian_at(p, 0.3), std::exception);
}

TEST(Dyadic, CoarsenPreservesBlockSums) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 50, 3);
    EXPECT_EQ(block_length(g, 1), 4u);
    const PathPool c = dyadic_coarsen(p, 1);
    ASSERT_EQ(c.n_steps(), 2u);
    for (std::size_t s = 0; s < 50; ++s) {
        const auto r = p.row(s);
        EXPECT_NEAR(c.row(s)[0], r[0] + r[1] + r[2] + r[3], 1e-14);
        EXPECT_NEAR(c.row(s)[1], r[4] + r[5] + r[6] + r[7], 1e-14);
    }
}

TEST(Bridge, ResamplesKeepBlockSums) {
    const TimeGrid g = make_grid(8);
    const PathPool p = sample_paths(g, 20, 4);
    const BridgeBatch bb = bridge_resample(p, 2, 5, 11);
    for (std::size_t s = 0; s < 20; ++s)
        for (std::size_t k = 0; k < 5; ++k) {
            const auto in = bb.inner(s, k);
            for (std::size_t b = 0; b < 4; ++b)
                EXPECT_NEAR(in[2 * b] + in[2 * b + 1], p.row(s)[2 * b] + p.row(s)[2 * b + 1], 1e-13);
        }
}

TEST(Bridge, ConditionalVarianceIsBrownianBridge) {
    // One block of two equal steps with sum 0: each increment is N(0, dt/2).
    const TimeGrid g = make_grid(2);
    std::size_t n = 100000;
    double v = 0.0;
    std::vector<double> out(2), z(2);
    std::mt19937_64 eng(5);
    std::normal_distribution<double> nd;
    const double zero = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        z[0] = nd(eng);
        z[1] = nd(eng);
        bridge_fill(g, 0, std::span<const double>(&zero, 1), z, out);
        v += out[0] * out[0];
    }
    EXPECT_NEAR(v / n, 0.25, 0.01);
}

TEST(PoolCsv, RoundTrip) {
    const TimeGrid g = make_grid(4);
    const PathPool p = sample_paths(g, 7, 6);
    const auto path = (std::filesystem::temp_directory_path() / "wcalc_pool_test.csv").string();
    write_pool_csv(p, path);
    const PathPool q = read_pool_csv(path);
    EXPECT_EQ(q.n_samples, 7u);
    EXPECT_EQ(q.increments, p.increments);
    std::filesystem::remove(path);
}
