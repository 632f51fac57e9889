#include "wcalc/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace wcalc::kernels {

namespace {

double nw_point(double yq, std::span<const double> y, std::span<const double> x,
                std::span<const double> w, double inv_bw) {
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double u = (yq - y[j]) * inv_bw;
        if (std::abs(u) > gauss_cutoff) continue;
        const double k = w[j] * std::exp(-0.5 * u * u);
        num += k * x[j];
        den += k;
    }
    return den > 0.0 ? num / den : std::numeric_limits<double>::quiet_NaN();
}

double kde_point(double g, std::span<const double> atoms, std::span<const double> weights,
                 double bw) {
    const double reach = gauss_cutoff * bw;
    auto lo = std::lower_bound(atoms.begin(), atoms.end(), g - reach);
    auto hi = std::upper_bound(lo, atoms.end(), g + reach);
    const double norm = 1.0 / (bw * std::sqrt(2.0 * std::numbers::pi));
    double s = 0.0;
    for (auto it = lo; it != hi; ++it) {
        const double u = (g - *it) / bw;
        s += weights[static_cast<std::size_t>(it - atoms.begin())] * std::exp(-0.5 * u * u);
    }
    return s * norm;
}

void check_bw(double bw) {
    if (!(bw > 0.0) || !std::isfinite(bw)) throw std::invalid_argument("bandwidth must be positive");
}

}  // namespace

void nadaraya_watson(std::span<const double> y_query, std::span<const double> y,
                     std::span<const double> x, std::span<const double> w, double bw,
                     std::span<double> out, Exec exec) {
    check_bw(bw);
    if (x.size() != y.size() || w.size() != y.size() || out.size() != y_query.size())
        throw std::invalid_argument("nadaraya_watson: size mismatch");
    const double inv_bw = 1.0 / bw;
    const auto nq = static_cast<std::ptrdiff_t>(y_query.size());
    if (exec == Exec::serial) {
        for (std::ptrdiff_t q = 0; q < nq; ++q) out[q] = nw_point(y_query[q], y, x, w, inv_bw);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t q = 0; q < nq; ++q) out[q] = nw_point(y_query[q], y, x, w, inv_bw);
}

void nadaraya_watson_binned(std::span<const double> y_query, std::span<const double> y,
                            std::span<const double> x, std::span<const double> w, double bw,
                            std::size_t n_bins, std::span<double> out, Exec exec) {
    check_bw(bw);
    if (x.size() != y.size() || w.size() != y.size() || out.size() != y_query.size())
        throw std::invalid_argument("nadaraya_watson_binned: size mismatch");
    if (n_bins < 16) throw std::invalid_argument("nadaraya_watson_binned: too few bins");
    if (y.empty()) throw std::invalid_argument("nadaraya_watson_binned: empty sample");
    auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
    double lo = *ymin, hi = *ymax;
    for (double q : y_query) {
        lo = std::min(lo, q);
        hi = std::max(hi, q);
    }
    lo -= bw;
    hi += bw;
    const double delta = (hi - lo) / static_cast<double>(n_bins - 1);
    std::vector<double> sw(n_bins, 0.0), swx(n_bins, 0.0);
    for (std::size_t j = 0; j < y.size(); ++j) {
        const double pos = (y[j] - lo) / delta;
        auto b = static_cast<std::size_t>(pos);
        if (b >= n_bins - 1) b = n_bins - 2;
        const double frac = pos - static_cast<double>(b);
        sw[b] += (1.0 - frac) * w[j];
        sw[b + 1] += frac * w[j];
        swx[b] += (1.0 - frac) * w[j] * x[j];
        swx[b + 1] += frac * w[j] * x[j];
    }
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(gauss_cutoff * bw / delta));
    std::vector<double> kern(static_cast<std::size_t>(half) + 1);
    for (std::ptrdiff_t d = 0; d <= half; ++d) {
        const double u = static_cast<double>(d) * delta / bw;
        kern[static_cast<std::size_t>(d)] = std::exp(-0.5 * u * u);
    }
    std::vector<double> num(n_bins), den(n_bins);
    const auto nb = static_cast<std::ptrdiff_t>(n_bins);
    auto conv = [&](std::ptrdiff_t g) {
        double a = 0.0, b = 0.0;
        const std::ptrdiff_t from = std::max<std::ptrdiff_t>(0, g - half);
        const std::ptrdiff_t to = std::min<std::ptrdiff_t>(nb - 1, g + half);
        for (std::ptrdiff_t h = from; h <= to; ++h) {
            const double k = kern[static_cast<std::size_t>(std::abs(g - h))];
            a += k * swx[static_cast<std::size_t>(h)];
            b += k * sw[static_cast<std::size_t>(h)];
        }
        num[static_cast<std::size_t>(g)] = a;
        den[static_cast<std::size_t>(g)] = b;
    };
    if (exec == Exec::serial) {
        for (std::ptrdiff_t g = 0; g < nb; ++g) conv(g);
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t g = 0; g < nb; ++g) conv(g);
    }
    for (std::size_t q = 0; q < y_query.size(); ++q) {
        const double pos = (y_query[q] - lo) / delta;
        auto b = static_cast<std::size_t>(pos);
        if (b >= n_bins - 1) b = n_bins - 2;
        const double frac = pos - static_cast<double>(b);
        const double nn = (1.0 - frac) * num[b] + frac * num[b + 1];
        const double dd = (1.0 - frac) * den[b] + frac * den[b + 1];
        out[q] = dd > 0.0 ? nn / dd : std::numeric_limits<double>::quiet_NaN();
    }
}

void kde_gaussian(std::span<const double> grid, std::span<const double> atoms,
                  std::span<const double> weights, double bw, std::span<double> out, Exec exec) {
    check_bw(bw);
    if (atoms.size() != weights.size() || out.size() != grid.size())
        throw std::invalid_argument("kde_gaussian: size mismatch");
    const auto ng = static_cast<std::ptrdiff_t>(grid.size());
    if (exec == Exec::serial) {
        for (std::ptrdiff_t g = 0; g < ng; ++g) out[g] = kde_point(grid[g], atoms, weights, bw);
        return;
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t g = 0; g < ng; ++g) out[g] = kde_point(grid[g], atoms, weights, bw);
}

}  // namespace wcalc::kernels
