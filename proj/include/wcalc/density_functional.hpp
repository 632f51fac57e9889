#pragma once
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcalc/functionals.hpp"
#include "wcalc/measure_ops.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

struct GridDensity {
    std::vector<double> x_grid;  // uniform
    std::vector<double> values;
    double mass = 0.0;  // trapezoid
    double bandwidth = 0.0;

    double spacing() const { return x_grid[1] - x_grid[0]; }
    std::string to_csv() const;
};

double trapezoid(std::span<const double> values, double dx);

// Window [min - 5 bw, max + 5 bw] with `n_points` nodes.
std::vector<double> default_kde_grid(const EmpiricalLaw& law, double bw, std::size_t n_points = 2048);

// Gaussian KDE of a normalized 1-D law on `x_grid`, renormalized to unit
// trapezoid mass. Without a bandwidth, Silverman's rule on the law.
GridDensity kde_density(const EmpiricalLaw& law, std::span<const double> x_grid,
                        std::optional<double> bandwidth = std::nullopt);
GridDensity kde_density(const EmpiricalLaw& law, std::optional<double> bandwidth = std::nullopt,
                        std::size_t n_points = 2048);

// Φ(h) = Ψ(∫ ρ h dx)
struct DensityFunctionalPhi {
    ScalarFn Psi;
    ScalarFn rho;
    std::string descriptor;

    double operator()(const GridDensity& h) const;
    double inner(const GridDensity& h) const;  // ∫ ρ h dx
    // The measure functional f(μ) = Ψ(∫ ρ dμ).
    CylindricalFn as_cylindrical() const;
};

DensityFunctionalPhi make_density_functional(ScalarFn Psi, ScalarFn rho, std::string descriptor = {});

// Ψ'(∫ρh) ρ(x) minus its dx-mean over the grid window.
double dPhi_representer(const DensityFunctionalPhi& Phi, const GridDensity& h, double x);
std::vector<double> dPhi_representer(const DensityFunctionalPhi& Phi, const GridDensity& h,
                                     std::span<const double> x);

struct BensoussanRow {
    double x = 0.0;
    double dx_dPhi = 0.0;      // ∂_x DΦ(f_ξ, x) by central difference
    double lions = 0.0;        // ∂_μ f(law, x)
    double d1F_density = 0.0;  // DΦ(f_ξ, x) - E^{Q_L}[DΦ(f_ξ, ξ)]
    double d1F_measure = 0.0;  // primitive formula for ∂₁F
    double err_first = 0.0;
    double err_second = 0.0;
};
struct BensoussanResult {
    double bandwidth = 0.0;
    double max_err_first = 0.0;   // ∂_x DΦ vs ∂_μ f
    double max_err_second = 0.0;  // centered DΦ vs ∂₁F
    double max_err = 0.0;
    std::vector<BensoussanRow> rows;
};

BensoussanResult bensoussan_check(const DensityFunctionalPhi& Phi, const PathPool& pool,
                                  std::span<const double> density, std::span<const double> xi,
                                  std::span<const double> x_probe, std::optional<double> bandwidth = std::nullopt,
                                  double fd_step = 1e-4);

// Built-ins: "sin_id" (ρ = sin, Ψ = id), "lin_sq" (ρ = x, Ψ = u²),
// "cos_sq" (ρ = cos, Ψ = u²), "sin_sq" (ρ = sin, Ψ = u²).
DensityFunctionalPhi builtin_density_functional(const std::string& id);

}  // namespace wcalc
