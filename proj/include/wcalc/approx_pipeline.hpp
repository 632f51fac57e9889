#pragma once
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "wcalc/clark_ocone.hpp"
#include "wcalc/density_deriv.hpp"
#include "wcalc/girsanov.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

struct PipelineConfig {
    std::size_t dyadic_level = 2;      // 2^n blocks
    double truncation_level = 6.0;     // ℓ
    double mollify_eps = 0.1;          // ε
    double positivity_floor = 0.01;    // ε_pos
    std::size_t step_count = 8;        // k
    std::size_t inner_mc = 16;         // bridge shapes when the curve is not block-measurable
    std::size_t quad_order = 10;       // Gauss–Hermite nodes per unrealized block
    std::size_t mollifier_nodes = 0;   // 0: symmetric degree-3 rule; else fixed sampled nodes
    std::uint64_t seed = 0;

    // Throws std::invalid_argument naming the offending field.
    void validate(const TimeGrid& working) const;
};

// (λ, x) -> (value, ∂_λ value) for x in R^{n_args}.
struct LambdaField {
    std::size_t n_args = 0;
    std::function<void(double, std::span<const double>, double&, double&)> eval;
    std::string descriptor;

    double value(double lambda, std::span<const double> x) const;
};

// Step 1: E[L^λ | block sums] as a deterministic function of the block
// sums, averaged over `m_inner` common Brownian-bridge shapes. Exact (one
// shape, no noise) when the curve is measurable at the block level.
struct ConditionedCurve {
    DensityCurve curve;
    TimeGrid fine;
    std::size_t block_len = 1;
    std::size_t m_inner = 1;
    bool exact = false;
    std::vector<double> shapes;  // m_inner × n_fine standard normals

    std::size_t n_blocks() const { return fine.n_steps() / block_len; }
    TimeGrid block_grid() const;
    void eval(double lambda, std::span<const double> block_sums, double& v, double& dv) const;
    LambdaField field() const;
};

ConditionedCurve condition_on_blocks(const DensityCurve& curve, const TimeGrid& fine, std::size_t block_len,
                                     std::size_t m_inner, std::uint64_t seed);
ConditionedCurve stage1_dyadic_condition(const DensityCurve& curve, std::size_t level, const PathPool& pool,
                                         std::size_t m_inner, std::uint64_t seed);

// Block sums of every path (n_samples × n_blocks).
std::vector<double> block_sums_of(const PathPool& pool, std::size_t block_len);
// Field values on the pool: (value, ∂_λ) per path.
void field_on_pool(const LambdaField& f, double lambda, std::span<const double> sums, std::size_t n_samples,
                   std::vector<double>& v, std::vector<double>& dv);

// Cutoffs used by the truncation step.
double smooth_step(double t);        // 0 for t <= 0, 1 for t >= 1, C^∞
double smooth_step_deriv(double t);
double cutoff(double r, double ell);        // 1 on |r| <= ℓ-2, 0 on |r| >= ℓ
double cutoff_deriv(double r, double ell);  // d/dr
double clip(double r, double ell);          // identity on |r| <= ℓ-2, |·| <= ℓ-1
double clip_deriv(double r, double ell);

// Step 3: ψ_ℓ(h(ψ_ℓ(λ), x)) φ_ℓ(|x|) φ̃_ℓ(|λ|).
LambdaField stage3_truncate(const LambdaField& h, double ell);

// Step 4: convolution with the product bump kernel of radius ε in (λ, x).
struct MollifierRule {
    std::vector<double> offsets;  // n_nodes × (1 + n_args), unit-radius kernel coordinates
    std::vector<double> weights;
    std::size_t n_nodes() const { return weights.size(); }
};
// Second moment of one coordinate under exp(-1/(1-|u|²)) on the unit ball of R^dim.
double bump_coordinate_variance(std::size_t dim);
MollifierRule make_mollifier_rule(std::size_t n_args, std::size_t n_nodes, std::uint64_t seed);
LambdaField stage4_mollify(const LambdaField& h, double eps, const MollifierRule& rule);

// Step 5: (ε_pos + F) / (ε_pos + mean F), mean over the pool.
std::vector<double> stage5_normalize(std::span<const double> F, double eps_pos);

// L_ε^λ at a fixed λ as a function of the block sums, with its λ-derivative.
struct NormalizedDensity {
    LambdaField F;
    double lambda = 0.0;
    double eps_pos = 0.0;
    double mean_F = 1.0;
    double mean_dF = 0.0;

    void eval(std::span<const double> x, double& L, double& dL) const;
    SmoothFunctional as_smooth_functional(const TimeGrid& blocks) const;
};
NormalizedDensity make_normalized_density(const LambdaField& F, double lambda, double eps_pos,
                                          std::span<const double> sums, std::size_t n_samples);

// Step 6: M, Z and their λ-derivatives at every knot of the working grid.
// Knots with at most three touched blocks are tabulated over the realized
// block state by a backward one-step recursion; the rest use tensor
// quadrature path by path.
class GammaField {
public:
    GammaField(const NormalizedDensity& L, const TimeGrid& fine, const TimeGrid& blocks, std::size_t quad_order);

    // out = {M, Z, ∂_λM, ∂_λZ} at knot k from the first k increments.
    void eval(std::size_t k, std::span<const double> prefix, std::span<double> out) const;
    double gamma(std::size_t k, std::span<const double> prefix) const;
    std::size_t n_steps() const;
    bool tabulated(std::size_t k) const;

private:
    struct Impl;
    std::shared_ptr<const Impl> impl_;
};

struct GammaMatrices {
    std::size_t n_samples = 0, n_steps = 0;
    std::vector<double> gamma;   // n_samples × n_steps
    std::vector<double> dgamma;  // ∂_λ γ
};
GammaMatrices stage6_clark_ocone(const GammaField& field, const PathPool& pool);

// Step 7: freeze γ at the left endpoints of the k-grid.
GammaMatrices stage7_stepify(const GammaMatrices& g, std::size_t k);
StepProcess stage7_step_process(const GammaField& field, const TimeGrid& fine, std::size_t k);

// E_T and ∂_λE_T from coefficient matrices.
void exponential_from_matrices(const PathPool& pool, const GammaMatrices& g, std::vector<double>& E,
                               std::vector<double>& dE);

struct StageReport {
    int stage = 0;
    double l2_error_value = 0.0;
    double l2_error_deriv = 0.0;
    double along_segment_error = 0.0;        // value, L²(ds dQ)
    double along_segment_error_deriv = 0.0;
    double se_value = 0.0;
    double se_deriv = 0.0;
};

struct LadderRow {
    std::string parameter;
    double setting = 0.0;
    double err_value = 0.0, se_value = 0.0;
    double err_deriv = 0.0, se_deriv = 0.0;
    // Distance of the stage-7 exponential to the stage-5 density it represents.
    double err_value_stage5 = 0.0, se_value_stage5 = 0.0;
};

struct PipelineReport {
    PipelineConfig config;
    double lambda = 0.0, lambda_prime = 0.0;
    std::vector<StageReport> stages;  // 1, 3, 4, 5, 6, 7
    double final_value_error = 0.0, final_deriv_error = 0.0;
    double final_value_se = 0.0, final_deriv_se = 0.0;
    double segment_value_error = 0.0, segment_deriv_error = 0.0;
    double exponential_mean = 0.0, exponential_mean_se = 0.0;
    double min_density = 0.0;
    std::vector<double> gamma_mean;  // per working-grid step at λ
    std::vector<double> gamma_sd;
    std::vector<double> gamma_rows;  // first rows of the γ matrix at λ
    std::size_t gamma_row_count = 0;
    std::vector<std::size_t> tabulated_knots;
};

PipelineReport pipeline_run(const DensityCurve& curve, double lambda, double lambda_prime,
                            const PipelineConfig& config, const PathPool& pool, std::size_t gamma_rows = 256);

// Final errors at λ for each setting of one parameter ("n", "ell",
// "eps" or "k"), others from `base`. The k ladder reuses one Step 6.
std::vector<LadderRow> pipeline_ladder(const DensityCurve& curve, double lambda, const PipelineConfig& base,
                                       const PathPool& pool, const std::string& parameter,
                                       const std::vector<double>& settings);

}  // namespace wcalc
