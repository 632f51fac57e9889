#pragma once
#include <cstddef>
#include <span>

// Data-parallel inner loops. Every kernel has a serial reference and an
// OpenMP variant; each output element is a fixed-order sum, so both
// variants return bit-identical results.
namespace wcalc::kernels {

enum class Exec { serial, parallel };

inline constexpr double gauss_cutoff = 8.0;  // kernel truncated at 8 bandwidths

// out[q] = Σ_j w_j x_j K((yq_q - y_j)/bw) / Σ_j w_j K(...). Queries with an
// empty kernel window get NaN.
void nadaraya_watson(std::span<const double> y_query, std::span<const double> y,
                     std::span<const double> x, std::span<const double> w, double bw,
                     std::span<double> out, Exec exec = Exec::parallel);

// Same estimator with linear binning onto `n_bins` points and a discrete
// convolution; O(n + n_bins * window).
void nadaraya_watson_binned(std::span<const double> y_query, std::span<const double> y,
                            std::span<const double> x, std::span<const double> w, double bw,
                            std::size_t n_bins, std::span<double> out,
                            Exec exec = Exec::parallel);

// out[g] = Σ_j w_j φ_bw(grid_g - a_j). `atoms` must be sorted ascending.
void kde_gaussian(std::span<const double> grid, std::span<const double> atoms,
                  std::span<const double> weights, double bw, std::span<double> out,
                  Exec exec = Exec::parallel);

}  // namespace wcalc::kernels
