#pragma once
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcalc/clark_ocone.hpp"
#include "wcalc/functionals.hpp"
#include "wcalc/girsanov.hpp"
#include "wcalc/measure_ops.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

// Pathwise density of one row of increments on `grid`.
struct PathDensity {
    TimeGrid grid;
    std::function<double(std::span<const double>)> value;
    std::optional<std::size_t> measurable_level;  // a function of the block sums at this dyadic level
    std::string descriptor;
};

// "one", "tanh_b1" (1 + tanh(B_T)/2), "exp_b1" (exp(B_T - T/2)),
// "sin_b_half" (1 + sin(B_{T/2})/2).
PathDensity named_density(const TimeGrid& grid, const std::string& name);

// λ -> L^λ, evaluated path by path. `value`/`deriv` are raw; the pool
// helpers below renormalize to unit weighted mean.
struct DensityCurve {
    double lo = 0.0, hi = 1.0;
    std::string kind;  // "exponential-family", "mixture", "constant", "user"
    std::string descriptor;
    TimeGrid grid;
    std::function<double(double, std::span<const double>)> value;
    std::function<double(double, std::span<const double>)> deriv;
    std::optional<std::size_t> measurable_level;
};

DensityCurve exponential_family_curve(const CurveFamily& fam);
// (1 - λ) L0 + λ L1 on [0, 1]
DensityCurve mixture_curve(const PathDensity& L0, const PathDensity& L1);
DensityCurve constant_curve(const PathDensity& L, double lo = 0.0, double hi = 1.0);

struct CurveValues {
    std::vector<double> value;  // weighted mean exactly 1 up to rounding
    std::vector<double> deriv;  // quotient rule of the renormalization
};
CurveValues curve_on_pool(const DensityCurve& curve, const PathPool& pool, double lambda);

struct Estimate {
    double value = 0.0;
    double std_err = 0.0;
};

// ∂₁F((Q_L)_ξ, ·) on x_grid. Base point of the primitive is 0.
struct D1FProfile {
    EmpiricalLaw law;
    std::vector<double> x_grid;
    std::vector<double> values;
    double centering_constant = 0.0;
};

// ∫_0^{x_j} ∂_μ f(law, y) dy for every x_j (adaptive quadrature, 1e-9).
std::vector<double> lions_primitive(const CylindricalFn& f, const EmpiricalLaw& law,
                                    std::span<const double> x);

D1FProfile d1F_formula(const CylindricalFn& f, const EmpiricalLaw& law, std::span<const double> x_grid);

// v - E^Q[v] (pool weights, density ignored)
std::vector<double> recenter_to_Q(std::span<const double> values, const PathPool& pool);
// v - E^{Q_L}[v]
std::vector<double> recenter_to_QL(std::span<const double> values, std::span<const double> density,
                                   const PathPool& pool);

struct ChainRuleResult {
    double lhs = 0.0;       // central difference in λ
    double rhs = 0.0;       // E^Q[(∫_0^ξ ∂_μ f) ∂_λ L^λ]
    double rhs_std_err = 0.0;
    double std_err = 0.0;   // of the per-path linearized difference
};

Estimate chain_rule_rhs(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                        std::span<const double> xi, const PathPool& pool);
double chain_rule_lhs_fd(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                         std::span<const double> xi, const PathPool& pool, double h_step);
// Both sides on common random numbers with a paired standard error.
ChainRuleResult chain_rule_check(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                                 std::span<const double> xi, const PathPool& pool, double h_step);

struct SecondOrderRow {
    std::vector<double> x;  // dim entries
    std::vector<double> d1F;
    std::vector<double> fd;      // ∂_x ∂₁F by central differences
    std::vector<double> lions;   // ∂_μ f
    double abs_err = 0.0;
};
struct SecondOrderResult {
    double max_err = 0.0;
    std::vector<SecondOrderRow> rows;
};

SecondOrderResult second_order_check_1d(const CylindricalFn& f, const EmpiricalLaw& law,
                                        std::span<const double> x_grid, double h_step);
// Centered potential x -> h'(∫φdμ) φ(x) - E^{μ}[...]; x_grid row-major n × dim.
SecondOrderResult second_order_check_multidim(const CylindricalFn& f, const EmpiricalLaw& law,
                                              std::span<const double> x_grid, double h_step);

// Per-path DF = Σ_i H_i (B(Δ_i) - γ_i Δt_i), H_i the Q_L-predictable
// projection at the left endpoint of Δ_i. L and every ξ component read the
// same blocks; all need gradients.
struct MultidimRepr {
    std::vector<double> df;          // per path
    std::vector<double> L_values;    // L on the pool
    std::vector<double> xi_values;   // n_samples × d
    double law_inner = 0.0;          // ∫ φ d(LQ)_ξ
};
MultidimRepr multidim_derivative_repr(const CylindricalFn& f, const SmoothFunctional& L,
                                      const std::vector<SmoothFunctional>& xi, const PathPool& pool,
                                      std::size_t quad_order = 16);

struct DirectionalCheck {
    double fd = 0.0;        // central difference of λ -> f((E_T^λ Q)_ξ)
    double repr = 0.0;      // E^Q[DF ∂_λ E_T^λ]
    double std_err = 0.0;   // paired
    double h_step = 0.0;
};
// Curve γ^λ from `fam`; L = E_T^λ must be a smooth functional of the blocks
// of `blocks` (supplied by `make_L`).
DirectionalCheck multidim_directional_check(const CylindricalFn& f, const CurveFamily& fam, double lambda,
                                            const std::function<SmoothFunctional(double)>& make_L,
                                            const std::vector<SmoothFunctional>& xi, const PathPool& pool,
                                            double h_step, std::size_t quad_order = 16);

struct NestedLinkRow {
    double x1 = 0.0, x2 = 0.0;
    double fd = 0.0;       // density-direction difference quotient
    double repr = 0.0;     // E^{Q_L}[∂₁F(ξ) (η - E^{Q_L}η)] from the centered (∂_μG)_1 profile
    double abs_err = 0.0;
};
struct NestedLinkResult {
    double bandwidth = 0.0;
    double max_err = 0.0;
    double repr_std_err = 0.0;  // largest per-probe standard error
    std::vector<NestedLinkRow> rows;
};
struct NestedLinkOptions {
    double alpha = 0.5;      // direction L' = (1 + α(η - E^{Q_L}η)) L
    double s_step = 1e-3;    // mixture step
    double bump_radius = 0.5;
};
// Directions η_j(ξ) = exp(-|ξ - x_j|² / (2 r²)) centered at each probe.
NestedLinkResult nested_link(const NestedFn& fn, const PathPool& pool, std::span<const double> density,
                           std::span<const double> xi1, std::span<const double> xi2,
                           std::span<const double> x1, std::span<const double> x2, const KernelOptions& opt,
                           const NestedLinkOptions& lo = {});

}  // namespace wcalc
