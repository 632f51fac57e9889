#include "wcalc/quadrature.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <stdexcept>

namespace wcalc {

namespace {

QuadratureRule golub_welsch(const Eigen::VectorXd& off_diag, double mu0) {
    const Eigen::Index n = off_diag.size() + 1;
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index k = 0; k + 1 < n; ++k) {
        J(k, k + 1) = off_diag(k);
        J(k + 1, k) = off_diag(k);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
    if (es.info() != Eigen::Success) throw std::runtime_error("quadrature eigen-solve failed");
    QuadratureRule r;
    r.nodes.resize(static_cast<std::size_t>(n));
    r.weights.resize(static_cast<std::size_t>(n));
    for (Eigen::Index k = 0; k < n; ++k) {
        r.nodes[static_cast<std::size_t>(k)] = es.eigenvalues()(k);
        const double v = es.eigenvectors()(0, k);
        r.weights[static_cast<std::size_t>(k)] = mu0 * v * v;
    }
    // Symmetrize: the rules are exactly symmetric in exact arithmetic.
    for (std::size_t k = 0; k < r.size() / 2; ++k) {
        const std::size_t m = r.size() - 1 - k;
        const double x = 0.5 * (r.nodes[m] - r.nodes[k]);
        const double w = 0.5 * (r.weights[m] + r.weights[k]);
        r.nodes[k] = -x;
        r.nodes[m] = x;
        r.weights[k] = r.weights[m] = w;
    }
    if (r.size() % 2 == 1) r.nodes[r.size() / 2] = 0.0;
    return r;
}

}  // namespace

QuadratureRule gauss_hermite(std::size_t order) {
    if (order == 0) throw std::invalid_argument("gauss_hermite: order must be >= 1");
    if (order == 1) return {{0.0}, {1.0}};
    Eigen::VectorXd b(static_cast<Eigen::Index>(order - 1));
    for (std::size_t k = 1; k < order; ++k) b(static_cast<Eigen::Index>(k - 1)) = std::sqrt(double(k));
    return golub_welsch(b, 1.0);
}

QuadratureRule gauss_legendre(std::size_t order) {
    if (order == 0) throw std::invalid_argument("gauss_legendre: order must be >= 1");
    if (order == 1) return {{0.0}, {2.0}};
    Eigen::VectorXd b(static_cast<Eigen::Index>(order - 1));
    for (std::size_t k = 1; k < order; ++k) {
        const double kk = double(k);
        b(static_cast<Eigen::Index>(k - 1)) = kk / std::sqrt(4.0 * kk * kk - 1.0);
    }
    return golub_welsch(b, 2.0);
}

namespace {

struct Panel {
    double value;
    double error;
};

// One Gauss–Kronrod 7/15 panel on [a, b] with Boost's nodes; the error is
// |K15 - G7| in the units of the integral.
Panel gk15(const std::function<double(double)>& f, double a, double b) {
    using gk = boost::math::quadrature::gauss_kronrod<double, 15>;
    static const auto& x = gk::abscissa();
    static const auto& wk = gk::weights();
    static const auto& wg = boost::math::quadrature::gauss<double, 7>::weights();
    const double c = 0.5 * (a + b), h = 0.5 * (b - a);
    const double fc = f(c);
    double k = wk[0] * fc, g = wg[0] * fc;
    for (std::size_t i = 1; i < x.size(); ++i) {
        const double s = f(c - h * x[i]) + f(c + h * x[i]);
        k += wk[i] * s;
        if (i % 2 == 0) g += wg[i / 2] * s;
    }
    return {h * k, std::abs(h * (k - g))};
}

double adaptive(const std::function<double(double)>& f, double a, double b, Panel whole, double budget,
                int depth, double& err_sum) {
    if (whole.error <= budget || depth == 0) {
        err_sum += whole.error;
        return whole.value;
    }
    const double m = 0.5 * (a + b);
    const Panel l = gk15(f, a, m), r = gk15(f, m, b);
    return adaptive(f, a, m, l, 0.5 * budget, depth - 1, err_sum) +
           adaptive(f, m, b, r, 0.5 * budget, depth - 1, err_sum);
}

}  // namespace

// Boost's own recursion compares an error floored at 2ε|K| on the reference
// interval with a tolerance scaled to [a, b], so it bisects to full depth on
// short intervals; the driver below budgets the error in absolute terms.
double integrate_adaptive(const std::function<double(double)>& f, double a, double b, double tol) {
    if (a == b) return 0.0;
    const Panel whole = gk15(f, a, b);
    const double budget = tol * std::max(1.0, std::abs(whole.value));
    double err = 0.0;
    const double v = adaptive(f, a, b, whole, budget, 30, err);
    if (!std::isfinite(v) || err > tol * std::max(1.0, std::abs(v)))
        throw std::runtime_error("adaptive quadrature did not converge");
    return v;
}

}  // namespace wcalc

#include <map>
#include <memory>
#include <mutex>

namespace wcalc {

const QuadratureRule& gauss_hermite_cached(std::size_t order) {
    static std::mutex mu;
    static std::map<std::size_t, std::unique_ptr<QuadratureRule>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto& slot = cache[order];
    if (!slot) slot = std::make_unique<QuadratureRule>(gauss_hermite(order));
    return *slot;
}

}  // namespace wcalc
