#pragma once
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wcalc/wiener_grid.hpp"

namespace wcalc {

// Weighted atoms in R^dim. Signed weights are allowed when !normalized.
struct EmpiricalLaw {
    std::size_t dim = 1;
    std::vector<double> atoms;  // row-major, size() * dim
    std::vector<double> weights;
    bool normalized = true;

    std::size_t size() const { return weights.size(); }
    std::span<const double> atom(std::size_t i) const { return {atoms.data() + i * dim, dim}; }
    double total_mass() const;
};

EmpiricalLaw make_law(std::size_t dim, std::vector<double> atoms, std::vector<double> weights,
                      bool normalized);

// w_i L_i / Σ w. Shared by pushforward_law(normalized=false) and
// weighted_expectation so both sum identical terms in identical order.
std::vector<double> density_weights(const PathPool& pool, std::span<const double> density);

// (LQ)_ξ. `observables` is row-major n_samples × dim.
EmpiricalLaw pushforward_law(const PathPool& pool, std::span<const double> density,
                             std::span<const double> observables, std::size_t dim = 1,
                             bool normalized = true);

double integrate(const EmpiricalLaw& law, const std::function<double(std::span<const double>)>& phi);

double wasserstein1(const EmpiricalLaw& a, const EmpiricalLaw& b);

// Σ w_i L_i g_i / Σ w_i
double weighted_expectation(const PathPool& pool, std::span<const double> density,
                            std::span<const double> g);
// Standard error of the estimator above (i.i.d. paths).
double weighted_std_error(const PathPool& pool, std::span<const double> density,
                          std::span<const double> g);

// 0.9 min(sd, IQR/1.34) n_eff^{-1/5} on the weighted sample.
double silverman_bandwidth(std::span<const double> values, std::span<const double> weights);

enum class KernelMethod { automatic, exact, binned };

struct KernelOptions {
    std::optional<double> bandwidth;  // nullopt: Silverman on the density-weighted y sample
    KernelMethod method = KernelMethod::automatic;
    std::size_t exact_limit = 4096;  // automatic switches to binned above this size
    std::size_t n_bins = 4096;
};

// Bandwidth actually used for (y, density) under `opt`.
double resolve_bandwidth(std::span<const double> y, std::span<const double> density,
                         const KernelOptions& opt);

// Nadaraya–Watson estimate of E^{LQ}[x | y] at every sample y_i.
std::vector<double> conditional_expectation(std::span<const double> x, std::span<const double> y,
                                            std::span<const double> density,
                                            const KernelOptions& opt = {});

// Same estimator evaluated at arbitrary query points.
std::vector<double> conditional_expectation_at(std::span<const double> x,
                                               std::span<const double> y,
                                               std::span<const double> density,
                                               std::span<const double> queries,
                                               const KernelOptions& opt = {});

std::string law_to_csv(const EmpiricalLaw& law);

}  // namespace wcalc
