#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "wcalc/kernels.hpp"

using namespace wcalc::kernels;

namespace {
struct Data {
    std::vector<double> y, x, w, q;
};
Data data(std::size_t n) {
    std::mt19937_64 e(3);
    std::normal_distribution<double> nd;
    Data d;
    for (std::size_t i = 0; i < n; ++i) {
        d.y.push_back(nd(e));
        d.x.push_back(std::sin(d.y.back()) + 0.1 * nd(e));
        d.w.push_back(0.5 + std::abs(nd(e)));
    }
    for (int i = 0; i <= 40; ++i) d.q.push_back(-2.0 + 0.1 * i);
    return d;
}
}  // namespace

TEST(Kernels, SerialAndParallelAreBitIdentical) {
    const Data d = data(5000);
    std::vector<double> a(d.q.size()), b(d.q.size());
    nadaraya_watson(d.q, d.y, d.x, d.w, 0.2, a, Exec::serial);
    nadaraya_watson(d.q, d.y, d.x, d.w, 0.2, b, Exec::parallel);
    EXPECT_EQ(a, b);
    nadaraya_watson_binned(d.q, d.y, d.x, d.w, 0.2, 1024, a, Exec::serial);
    nadaraya_watson_binned(d.q, d.y, d.x, d.w, 0.2, 1024, b, Exec::parallel);
    EXPECT_EQ(a, b);
    std::vector<double> ys = d.y;
    std::sort(ys.begin(), ys.end());
    kde_gaussian(d.q, ys, d.w, 0.2, a, Exec::serial);
    kde_gaussian(d.q, ys, d.w, 0.2, b, Exec::parallel);
    EXPECT_EQ(a, b);
}

TEST(Kernels, RegressionRecoversSmoothMean) {
    const Data d = data(200000);
    std::vector<double> a(d.q.size()), b(d.q.size());
    nadaraya_watson(d.q, d.y, d.x, d.w, 0.05, a);
    nadaraya_watson_binned(d.q, d.y, d.x, d.w, 0.05, 4096, b);
    for (std::size_t i = 0; i < d.q.size(); ++i) {
        EXPECT_NEAR(a[i], std::sin(d.q[i]), 0.03) << d.q[i];
        EXPECT_NEAR(b[i], a[i], 2e-3) << d.q[i];
    }
}

TEST(Kernels, ConstantResponseIsExact) {
    Data d = data(1000);
    std::fill(d.x.begin(), d.x.end(), 2.5);
    std::vector<double> a(d.q.size());
    nadaraya_watson(d.q, d.y, d.x, d.w, 0.3, a);
    for (double v : a) EXPECT_NEAR(v, 2.5, 1e-12);
}

TEST(Kernels, EmptyWindowGivesNaN) {
    const std::vector<double> y{0.0}, x{1.0}, w{1.0}, q{100.0};
    std::vector<double> out(1);
    nadaraya_watson(q, y, x, w, 0.1, out);
    EXPECT_TRUE(std::isnan(out[0]));
}

TEST(Kernels, KdeSingleAtomIsGaussianDensity) {
    const std::vector<double> atoms{0.5}, w{1.0}, q{0.5, 0.7, 1.5};
    std::vector<double> out(3);
    kde_gaussian(q, atoms, w, 0.2, out);
    for (std::size_t i = 0; i < 3; ++i) {
        const double z = (q[i] - 0.5) / 0.2;
        EXPECT_NEAR(out[i], std::exp(-0.5 * z * z) / (0.2 * std::sqrt(2.0 * M_PI)), 1e-12);
    }
}
