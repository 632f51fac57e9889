#pragma once
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcalc/measure_ops.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

struct ScalarFn {
    std::function<double(double)> f;
    std::function<double(double)> df;
    std::string name;
};

struct FieldFn {
    std::size_t dim = 1;
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> grad;
    std::string name;
};

// f(μ) = h(∫ φ dμ)
struct CylindricalFn {
    std::size_t dim = 1;
    ScalarFn h;
    FieldFn phi;
    std::string descriptor;

    double inner(const EmpiricalLaw& law) const;  // ∫ φ dμ
};

// Throws std::invalid_argument if h' or ∇φ disagree with central differences
// by more than 1e-6 relative on the probe set.
CylindricalFn make_cylindrical(ScalarFn h, FieldFn phi, std::string descriptor = {});

void check_scalar_derivative(const ScalarFn& s, std::span<const double> probes);
void check_field_gradient(const FieldFn& phi, std::size_t n_probes = 24);

double eval_cyl(const CylindricalFn& f, const EmpiricalLaw& law);

std::vector<double> lions_derivative(const CylindricalFn& f, const EmpiricalLaw& law,
                                     std::span<const double> x);

// ∂_μ f(μ, ·) with h'(∫φdμ) computed once; use for many evaluation points.
class LionsDerivativeAt {
public:
    LionsDerivativeAt(const CylindricalFn& f, const EmpiricalLaw& law);
    void operator()(std::span<const double> x, std::span<double> out) const;
    double scalar(double x) const;  // dim 1 shortcut
    double h_prime() const { return hprime_; }

private:
    const CylindricalFn* f_;
    double hprime_;
};

using LawFunctional = std::function<double(const EmpiricalLaw&)>;

// cbrt(eps) * (1 + RMS |ξ|)
double default_fd_step(std::span<const double> xi_values);

// [f(law(ξ+sη)) - f(law(ξ-sη))] / (2s) with the density kept fixed.
double lifted_derivative_fd(const LawFunctional& f_eval, const PathPool& pool,
                            std::span<const double> density, std::span<const double> xi_values,
                            std::span<const double> direction_values, std::size_t dim,
                            std::optional<double> step = std::nullopt);

// g(E^{Q_L}[h(E^{Q_L}[ψ(ξ1) | ξ2])])
struct NestedFn {
    ScalarFn g;
    ScalarFn h;
    std::function<double(double)> psi;
    double psi_bound = 1.0;
    std::string descriptor;
};

NestedFn make_nested(ScalarFn g, ScalarFn h, std::function<double(double)> psi, double psi_bound,
                     std::string descriptor = {});

double eval_nested(const NestedFn& fn, const PathPool& pool, std::span<const double> density,
                   std::span<const double> xi1, std::span<const double> xi2,
                   const KernelOptions& opt = {});

// (∂_μG)_1 at the points (x1[j], x2[j]).
std::vector<double> partial_mu_G_nested(const NestedFn& fn, const PathPool& pool,
                                        std::span<const double> density,
                                        std::span<const double> xi1, std::span<const double> xi2,
                                        std::span<const double> x1, std::span<const double> x2,
                                        const KernelOptions& opt = {});

// Registry: "mean", "mean_sq", "sin_mean" (cylindrical, d = 1) and
// "nested_gauss" (nested).
bool is_cylindrical_id(const std::string& id);
bool is_nested_id(const std::string& id);
CylindricalFn builtin_cylindrical(const std::string& id);
NestedFn builtin_nested(const std::string& id);
std::vector<std::string> builtin_ids();

ScalarFn identity_fn();
ScalarFn square_fn();
ScalarFn sin_fn();
ScalarFn cos_fn();
ScalarFn tanh_fn();
FieldFn scalar_field(const ScalarFn& s);

}  // namespace wcalc
