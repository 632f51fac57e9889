#pragma once
#include <cstddef>
#include <functional>
#include <vector>

namespace wcalc {

struct QuadratureRule {
    std::vector<double> nodes;
    std::vector<double> weights;
    std::size_t size() const { return nodes.size(); }
};

// Σ w f(x) ≈ E[f(Z)], Z ~ N(0,1). Golub–Welsch on the probabilists' Hermite recurrence.
QuadratureRule gauss_hermite(std::size_t order);

// Σ w f(x) ≈ ∫_{-1}^{1} f(x) dx.
QuadratureRule gauss_legendre(std::size_t order);

// Adaptive Gauss–Kronrod on [a,b]; throws if the error estimate stays above
// tol * max(1, |result|).
double integrate_adaptive(const std::function<double(double)>& f, double a, double b,
                          double tol = 1e-9);

}  // namespace wcalc

namespace wcalc {
// Process-wide cache of Gauss–Hermite rules; thread-safe.
const QuadratureRule& gauss_hermite_cached(std::size_t order);
}  // namespace wcalc
