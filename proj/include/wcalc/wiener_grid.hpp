#pragma once
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace wcalc {

class TimeGrid {
public:
    TimeGrid() = default;
    // Arbitrary strictly increasing knots starting at 0.
    explicit TimeGrid(std::vector<double> knots);

    std::size_t n_steps() const { return knots_.size() - 1; }
    double horizon() const { return knots_.back(); }
    double knot(std::size_t i) const { return knots_[i]; }
    double dt(std::size_t i) const { return knots_[i + 1] - knots_[i]; }
    const std::vector<double>& knots() const { return knots_; }

    bool is_uniform() const;
    bool is_dyadic() const;
    // Index of the knot equal to t; throws if t is not a knot.
    std::size_t knot_index(double t) const;
    bool has_knot(double t) const;

private:
    std::vector<double> knots_{0.0, 1.0};
};

TimeGrid make_grid(std::size_t n_steps, double horizon = 1.0);

// Increment matrix is row-major: row p holds B(Δ_1),...,B(Δ_N) of path p.
struct PathPool {
    TimeGrid grid;
    std::size_t n_samples = 0;
    std::vector<double> increments;
    std::vector<double> weights;
    std::uint64_t seed = 0;

    std::size_t n_steps() const { return grid.n_steps(); }
    std::span<const double> row(std::size_t p) const {
        return {increments.data() + p * n_steps(), n_steps()};
    }
    std::span<double> row(std::size_t p) { return {increments.data() + p * n_steps(), n_steps()}; }
    double weight_sum() const;
};

PathPool sample_paths(const TimeGrid& grid, std::size_t n_samples, std::uint64_t seed);

// Per-path B_t; t must be a knot.
std::vector<double> brownian_at(const PathPool& pool, double t);

// Number of fine steps per block at the given dyadic level.
std::size_t block_length(const TimeGrid& grid, std::size_t level);

PathPool dyadic_coarsen(const PathPool& pool, std::size_t level);

// Inner samples for every outer path: layout [outer][inner][step].
struct BridgeBatch {
    TimeGrid grid;
    std::size_t n_outer = 0;
    std::size_t m_inner = 0;
    std::vector<double> increments;

    std::span<const double> inner(std::size_t p, std::size_t k) const {
        const std::size_t n = grid.n_steps();
        return {increments.data() + (p * m_inner + k) * n, n};
    }
};

BridgeBatch bridge_resample(const PathPool& pool, std::size_t level, std::size_t m_inner,
                            std::uint64_t seed);

// Fine increments with prescribed block sums, built from N(0,1) draws z
// (one per fine step). Exact Gaussian conditional law inside each block.
void bridge_fill(const TimeGrid& fine, std::size_t level, std::span<const double> block_sums,
                 std::span<const double> z, std::span<double> out);
// Same with blocks of `block_len` consecutive steps (any grid it divides).
void bridge_fill_blocks(const TimeGrid& fine, std::size_t block_len, std::span<const double> block_sums,
                        std::span<const double> z, std::span<double> out);

void write_pool_csv(const PathPool& pool, const std::string& path);
PathPool read_pool_csv(const std::string& path);

}  // namespace wcalc
