#pragma once
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "wcalc/girsanov.hpp"
#include "wcalc/quadrature.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

// Smooth function of the increments over `blocks`. `blocks` must be a
// coarsening of the pool grid it is applied to (same horizon, knots a
// subset); on the pool itself the arguments are block sums of increments.
struct SmoothFunctional {
    TimeGrid blocks;
    std::function<double(std::span<const double>)> value;
    std::function<void(std::span<const double>, std::span<double>)> grad;  // may be empty
    double sup_value = std::numeric_limits<double>::infinity();
    double sup_grad = std::numeric_limits<double>::infinity();
    std::string descriptor;

    std::size_t n_args() const { return blocks.n_steps(); }
};

// Validates grad against central differences (1e-6 relative) when present.
SmoothFunctional make_smooth_functional(TimeGrid blocks,
                                        std::function<double(std::span<const double>)> value,
                                        std::function<void(std::span<const double>, std::span<double>)> grad,
                                        std::string descriptor = {},
                                        double sup_value = std::numeric_limits<double>::infinity(),
                                        double sup_grad = std::numeric_limits<double>::infinity());

// Thrown when tensor quadrature would need more than `max_quadrature_blocks`.
struct QuadratureCapExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};
inline constexpr std::size_t max_quadrature_blocks = 4;

// Fine step -> block index; throws on incompatible grids.
std::vector<std::size_t> block_map(const TimeGrid& fine, const TimeGrid& blocks);

// Block sums of a row of fine increments.
void block_sums(const std::vector<std::size_t>& map, std::size_t n_blocks,
                std::span<const double> fine, std::span<double> out);

// n_samples × n_steps; column i is the partial derivative for the block
// containing Δ_i.
std::vector<double> malliavin_derivative(const SmoothFunctional& F, const PathPool& pool);

// Conditional expectations E[ · | F_{t_k}] of functions of the block vector.
// The integrand receives the block vector and, per block, its unrealized
// (future) part; it writes `n_out` values.
class GaussianSmoother {
public:
    using Integrand = std::function<void(std::span<const double> blocks,
                                         std::span<const double> future, std::span<double> out)>;

    GaussianSmoother(const TimeGrid& fine, const TimeGrid& blocks, std::size_t quad_order);

    std::size_t n_blocks() const { return n_blocks_; }
    std::size_t n_fine() const { return map_.size(); }
    std::size_t block_of(std::size_t fine_step) const { return map_[fine_step]; }
    // Unrealized variance of block j at knot k.
    double future_variance(std::size_t k, std::size_t j) const { return var_[k * n_blocks_ + j]; }
    std::size_t remaining_blocks(std::size_t k) const;
    // Blocks carrying realized information at knot k (touched, not necessarily complete).
    std::vector<std::size_t> touched_blocks(std::size_t k) const;

    // Realized part of every block from the first k fine increments.
    void realized_state(std::size_t k, std::span<const double> prefix, std::span<double> state) const;

    // Tensor Gauss–Hermite; throws QuadratureCapExceeded above the cap.
    void expect_state(std::size_t k, std::span<const double> state, const Integrand& fn,
                      std::size_t n_out, std::span<double> out) const;
    void expect(std::size_t k, std::span<const double> prefix, const Integrand& fn, std::size_t n_out,
                std::span<double> out) const;
    // Plain Monte Carlo over the unrealized parts.
    void expect_mc(std::size_t k, std::span<const double> prefix, const Integrand& fn, std::size_t n_out,
                   std::span<double> out, std::size_t n_inner, std::uint64_t seed) const;

private:
    std::vector<std::size_t> map_;
    std::size_t n_blocks_;
    std::vector<double> var_;  // (n_fine + 1) × n_blocks
    const QuadratureRule* rule_;
};

// E[F | F_s] for the realized prefix up to knot s of `fine`.
double gaussian_smooth(const SmoothFunctional& F, const TimeGrid& fine, double s,
                       std::span<const double> prefix, std::size_t quad_order = 32);
// Same for the partial derivative ∂_j F.
double gaussian_smooth_partial(const SmoothFunctional& F, std::size_t j, const TimeGrid& fine, double s,
                               std::span<const double> prefix, std::size_t quad_order = 32);

struct ClarkOconeOptions {
    std::size_t quad_order = 32;
    std::size_t mc_inner = 512;  // used beyond the quadrature cap
    std::uint64_t seed = 0;
};

struct ClarkOconeResult {
    std::size_t n_samples = 0, n_steps = 0;
    std::vector<double> Z;      // n_samples × n_steps, left endpoints
    std::vector<double> M;      // n_samples × (n_steps + 1), every knot
    std::vector<double> gamma;  // Z / M at left endpoints
    bool used_mc = false;
};

// Z_i = E[D L | F_{t_{i-1}}], M_i = E[L | F_{t_{i-1}}]. Without a gradient, Z
// comes from Gaussian integration by parts. Throws if M < 1e-12.
ClarkOconeResult clark_ocone_decompose(const SmoothFunctional& L, const PathPool& pool,
                                       const ClarkOconeOptions& opt = {});

// sqrt(weighted mean of |L - 1 - Σ Z_i B(Δ_i)|²)
double reconstruction_error(std::span<const double> L_values, std::span<const double> Z,
                            const PathPool& pool);

// γ = Z/M as an adapted step process on `fine` (recomputed by quadrature
// from any prefix), so flows and exponentials can consume it.
StepProcess gamma_step_process(const SmoothFunctional& L, const TimeGrid& fine,
                               std::size_t quad_order = 32,
                               double bound = std::numeric_limits<double>::infinity());

}  // namespace wcalc
