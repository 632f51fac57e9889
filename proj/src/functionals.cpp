#include "wcalc/functionals.hpp"

#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "wcalc/rng.hpp"

namespace wcalc {

namespace {

const double scalar_probes[] = {-2.3, -1.1, -0.4, 0.0, 0.35, 0.9, 1.7, 2.6};

bool close_rel(double a, double b, double rel) {
    return std::abs(a - b) <= rel * std::max(1.0, std::abs(b));
}

double central_diff(const std::function<double(double)>& f, double x) {
    const double s = 1e-5 * std::max(1.0, std::abs(x));
    return (f(x + s) - f(x - s)) / (2.0 * s);
}

}  // namespace

void check_scalar_derivative(const ScalarFn& s, std::span<const double> probes) {
    if (!s.f || !s.df) throw std::invalid_argument("scalar function '" + s.name + "' lacks f or f'");
    for (double x : probes) {
        const double fd = central_diff(s.f, x);
        if (!close_rel(fd, s.df(x), 1e-6)) {
            std::ostringstream msg;
            msg << "derivative of '" << s.name << "' inconsistent at " << x << ": supplied " << s.df(x)
                << ", finite difference " << fd;
            throw std::invalid_argument(msg.str());
        }
    }
}

void check_field_gradient(const FieldFn& phi, std::size_t n_probes) {
    if (!phi.value || !phi.grad) throw std::invalid_argument("field '" + phi.name + "' lacks value or gradient");
    Rng rng(0x5eed, stream::instances);
    std::vector<double> x(phi.dim), g(phi.dim);
    for (std::size_t k = 0; k < n_probes; ++k) {
        for (auto& v : x) v = rng.uniform(-2.5, 2.5);
        phi.grad(x, g);
        for (std::size_t c = 0; c < phi.dim; ++c) {
            const double base = x[c];
            auto partial = [&](double t) {
                std::vector<double> y = x;
                y[c] = t;
                return phi.value(y);
            };
            const double fd = central_diff(partial, base);
            if (!close_rel(fd, g[c], 1e-6)) {
                std::ostringstream msg;
                msg << "gradient of '" << phi.name << "' inconsistent in component " << c;
                throw std::invalid_argument(msg.str());
            }
        }
    }
}

double CylindricalFn::inner(const EmpiricalLaw& law) const {
    if (law.dim != dim) throw std::invalid_argument("cylindrical functional: dimension mismatch");
    return integrate(law, phi.value);
}

CylindricalFn make_cylindrical(ScalarFn h, FieldFn phi, std::string descriptor) {
    check_scalar_derivative(h, scalar_probes);
    check_field_gradient(phi);
    CylindricalFn f;
    f.dim = phi.dim;
    if (descriptor.empty()) descriptor = h.name + "(<" + phi.name + ">)";
    f.h = std::move(h);
    f.phi = std::move(phi);
    f.descriptor = std::move(descriptor);
    return f;
}

double eval_cyl(const CylindricalFn& f, const EmpiricalLaw& law) {
    if (!law.normalized) throw std::invalid_argument("eval_cyl: law must be normalized");
    return f.h.f(f.inner(law));
}

LionsDerivativeAt::LionsDerivativeAt(const CylindricalFn& f, const EmpiricalLaw& law)
    : f_(&f), hprime_(f.h.df(f.inner(law))) {
    if (!law.normalized) throw std::invalid_argument("lions_derivative: law must be normalized");
}

void LionsDerivativeAt::operator()(std::span<const double> x, std::span<double> out) const {
    f_->phi.grad(x, out);
    for (double& v : out) v *= hprime_;
}

double LionsDerivativeAt::scalar(double x) const {
    double g = 0.0;
    f_->phi.grad(std::span<const double>(&x, 1), std::span<double>(&g, 1));
    return hprime_ * g;
}

std::vector<double> lions_derivative(const CylindricalFn& f, const EmpiricalLaw& law,
                                     std::span<const double> x) {
    if (x.size() != f.dim) throw std::invalid_argument("lions_derivative: point dimension mismatch");
    std::vector<double> out(f.dim);
    LionsDerivativeAt(f, law)(x, out);
    return out;
}

double default_fd_step(std::span<const double> xi_values) {
    double s = 0.0;
    for (double v : xi_values) s += v * v;
    const double rms = xi_values.empty() ? 0.0 : std::sqrt(s / static_cast<double>(xi_values.size()));
    return std::cbrt(std::numeric_limits<double>::epsilon()) * (1.0 + rms);
}

double lifted_derivative_fd(const LawFunctional& f_eval, const PathPool& pool,
                            std::span<const double> density, std::span<const double> xi_values,
                            std::span<const double> direction_values, std::size_t dim,
                            std::optional<double> step) {
    if (xi_values.size() != pool.n_samples * dim || direction_values.size() != xi_values.size())
        throw std::invalid_argument("lifted_derivative_fd: size mismatch");
    const double s = step ? *step : default_fd_step(xi_values);
    if (!(s >= 1e-10)) throw std::invalid_argument("lifted_derivative_fd: step below 1e-10");
    std::vector<double> up(xi_values.size()), dn(xi_values.size());
    for (std::size_t i = 0; i < xi_values.size(); ++i) {
        up[i] = xi_values[i] + s * direction_values[i];
        dn[i] = xi_values[i] - s * direction_values[i];
    }
    const double fu = f_eval(pushforward_law(pool, density, up, dim, true));
    const double fd = f_eval(pushforward_law(pool, density, dn, dim, true));
    return (fu - fd) / (2.0 * s);
}

NestedFn make_nested(ScalarFn g, ScalarFn h, std::function<double(double)> psi, double psi_bound,
                     std::string descriptor) {
    check_scalar_derivative(g, scalar_probes);
    check_scalar_derivative(h, scalar_probes);
    if (!psi) throw std::invalid_argument("nested functional lacks psi");
    for (double x : scalar_probes)
        if (std::abs(psi(x)) > psi_bound) throw std::invalid_argument("psi exceeds its declared bound");
    NestedFn fn;
    if (descriptor.empty()) descriptor = g.name + "(E[" + h.name + "(E[psi|xi2])])";
    fn.g = std::move(g);
    fn.h = std::move(h);
    fn.psi = std::move(psi);
    fn.psi_bound = psi_bound;
    fn.descriptor = std::move(descriptor);
    return fn;
}

namespace {

struct NestedParts {
    std::vector<double> psi1;  // ψ(ξ1)
    std::vector<double> m;     // m(ξ2) at the samples
    double outer = 0.0;        // E^{Q_L}[h(m(ξ2))]
};

NestedParts nested_parts(const NestedFn& fn, const PathPool& pool, std::span<const double> density,
                         std::span<const double> xi1, std::span<const double> xi2,
                         const KernelOptions& opt) {
    if (xi1.size() != pool.n_samples || xi2.size() != pool.n_samples)
        throw std::invalid_argument("nested functional: size mismatch");
    NestedParts parts;
    parts.psi1.resize(xi1.size());
    for (std::size_t i = 0; i < xi1.size(); ++i) parts.psi1[i] = fn.psi(xi1[i]);
    parts.m = conditional_expectation(parts.psi1, xi2, density, opt);
    std::vector<double> hm(parts.m.size());
    for (std::size_t i = 0; i < hm.size(); ++i) hm[i] = fn.h.f(parts.m[i]);
    parts.outer = weighted_expectation(pool, density, hm);
    return parts;
}

}  // namespace

double eval_nested(const NestedFn& fn, const PathPool& pool, std::span<const double> density,
                   std::span<const double> xi1, std::span<const double> xi2,
                   const KernelOptions& opt) {
    return fn.g.f(nested_parts(fn, pool, density, xi1, xi2, opt).outer);
}

std::vector<double> partial_mu_G_nested(const NestedFn& fn, const PathPool& pool,
                                        std::span<const double> density,
                                        std::span<const double> xi1, std::span<const double> xi2,
                                        std::span<const double> x1, std::span<const double> x2,
                                        const KernelOptions& opt) {
    if (x1.size() != x2.size()) throw std::invalid_argument("partial_mu_G_nested: probe size mismatch");
    const NestedParts parts = nested_parts(fn, pool, density, xi1, xi2, opt);
    KernelOptions frozen = opt;
    frozen.bandwidth = resolve_bandwidth(xi2, density, opt);
    const std::vector<double> mq = conditional_expectation_at(parts.psi1, xi2, density, x2, frozen);
    const double gp = fn.g.df(parts.outer);
    std::vector<double> out(x1.size());
    for (std::size_t j = 0; j < x1.size(); ++j) {
        if (!std::isfinite(mq[j]))
            throw std::runtime_error("partial_mu_G_nested: probe outside the kernel support");
        out[j] = gp * (fn.h.f(mq[j]) + fn.h.df(mq[j]) * (fn.psi(x1[j]) - mq[j]));
    }
    return out;
}

ScalarFn identity_fn() {
    return {[](double u) { return u; }, [](double) { return 1.0; }, "id"};
}
ScalarFn square_fn() {
    return {[](double u) { return u * u; }, [](double u) { return 2.0 * u; }, "sq"};
}
ScalarFn sin_fn() {
    return {[](double u) { return std::sin(u); }, [](double u) { return std::cos(u); }, "sin"};
}
ScalarFn cos_fn() {
    return {[](double u) { return std::cos(u); }, [](double u) { return -std::sin(u); }, "cos"};
}
ScalarFn tanh_fn() {
    return {[](double u) { return std::tanh(u); },
            [](double u) {
                const double t = std::tanh(u);
                return 1.0 - t * t;
            },
            "tanh"};
}

FieldFn scalar_field(const ScalarFn& s) {
    FieldFn phi;
    phi.dim = 1;
    phi.name = s.name;
    auto f = s.f;
    auto df = s.df;
    phi.value = [f](std::span<const double> x) { return f(x[0]); };
    phi.grad = [df](std::span<const double> x, std::span<double> g) { g[0] = df(x[0]); };
    return phi;
}

bool is_cylindrical_id(const std::string& id) {
    return id == "mean" || id == "mean_sq" || id == "sin_mean";
}

bool is_nested_id(const std::string& id) { return id == "nested_gauss"; }

std::vector<std::string> builtin_ids() { return {"mean", "mean_sq", "sin_mean", "nested_gauss"}; }

CylindricalFn builtin_cylindrical(const std::string& id) {
    if (id == "mean") return make_cylindrical(identity_fn(), scalar_field(identity_fn()), "mean");
    if (id == "mean_sq") return make_cylindrical(square_fn(), scalar_field(identity_fn()), "mean_sq");
    if (id == "sin_mean") return make_cylindrical(identity_fn(), scalar_field(sin_fn()), "sin_mean");
    throw std::invalid_argument("unknown cylindrical functional id '" + id + "'");
}

NestedFn builtin_nested(const std::string& id) {
    if (id == "nested_gauss")
        return make_nested(identity_fn(), square_fn(), [](double x) { return std::tanh(x); }, 1.0,
                           "nested_gauss");
    throw std::invalid_argument("unknown nested functional id '" + id + "'");
}

}  // namespace wcalc
