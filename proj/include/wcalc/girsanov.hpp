#pragma once
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wcalc/wiener_grid.hpp"

namespace wcalc {

// Adapted piecewise-constant integrand: on Δ_i its value is
// coeff(i, (B(Δ_1),...,B(Δ_{i-1}))). `coeff_grad` (optional) fills
// ∂γ_i/∂B(Δ_j) for j < i.
struct StepProcess {
    TimeGrid grid;
    std::function<double(std::size_t, std::span<const double>)> coeff;
    std::function<void(std::size_t, std::span<const double>, std::span<double>)> coeff_grad;
    double bound = 0.0;
    std::string descriptor;

    // Throws std::runtime_error when |γ| exceeds `bound`.
    double eval(std::size_t i, std::span<const double> prefix) const;
};

StepProcess constant_process(const TimeGrid& grid, double c);
// scale * table[i]
StepProcess table_process(const TimeGrid& grid, double scale, std::vector<double> table);
// Named smooth functions of the last `lags` increments:
//   "tanh_last": amplitude * tanh(sum of last lags increments)
//   "sin_last":  amplitude * sin(sum of last lags increments)
//   "tanh_level": amplitude * tanh(B_{t_{i-1}})
StepProcess smooth_process(const TimeGrid& grid, const std::string& name, double amplitude,
                           std::size_t lags = 1);
// a + scale * b
StepProcess combine_processes(const StepProcess& a, const StepProcess& b, double scale);

struct CurveFamily {
    double lo = 0.0, hi = 1.0;  // Λ
    std::function<StepProcess(double)> gamma;
    std::function<StepProcess(double)> dgamma;
    std::string descriptor;
};

// γ^λ = base + λ θ
CurveFamily linear_family(const StepProcess& base, const StepProcess& theta, double lo, double hi);
// Throws if dγ disagrees with a central difference of γ in λ (1e-5 relative).
void check_curve_family(const CurveFamily& fam, const PathPool& probe_pool);

std::vector<double> log_doleans(const PathPool& pool, const StepProcess& gamma, double t);
std::vector<double> doleans_exponential(const PathPool& pool, const StepProcess& gamma, double t);
// Exponential from a per-path coefficient matrix (n_samples × n_steps).
std::vector<double> doleans_from_matrix(const PathPool& pool, std::span<const double> gamma,
                                        double t);
// γ evaluated along every path of the pool: n_samples × n_steps.
std::vector<double> gamma_matrix(const PathPool& pool, const StepProcess& gamma);

// E_t {Σ dγ_i B(Δ_i) - Σ γ_i dγ_i Δt_i}
std::vector<double> doleans_lambda_derivative(const PathPool& pool, const StepProcess& gamma,
                                              const StepProcess& dgamma, double t);

PathPool shift_forward(const PathPool& pool, const StepProcess& gamma, double t);
PathPool shift_backward(const PathPool& pool, const StepProcess& gamma, double t);

using PathFunctional = std::function<double(std::span<const double>)>;

struct GirsanovResult {
    double lhs = 0.0;
    double rhs = 0.0;
    double std_err = 0.0;
};

// lhs = mean of E_T φ(B), rhs = mean of φ(T_T B); std_err of their difference.
GirsanovResult girsanov_check(const PathPool& pool, const StepProcess& gamma, const PathFunctional& phi);

std::vector<double> relative_exponential(const PathPool& pool, const StepProcess& gamma,
                                         const StepProcess& gamma_prime, double t);
// exp(Σ (γ'-γ) B^λ(Δ_i) - ½ Σ (γ'-γ)² Δt_i) with B^λ(Δ_i) = B(Δ_i) - γ_i Δt_i.
std::vector<double> relative_exponential_shifted(const PathPool& pool, const StepProcess& gamma,
                                                 const StepProcess& gamma_prime, double t);

}  // namespace wcalc
