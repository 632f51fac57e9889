#include "wcalc/wiener_grid.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "wcalc/io.hpp"
#include "wcalc/rng.hpp"

namespace wcalc {

namespace {
constexpr double knot_tol = 1e-12;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }
}  // namespace

TimeGrid::TimeGrid(std::vector<double> knots) : knots_(std::move(knots)) {
    if (knots_.size() < 2) throw std::invalid_argument("TimeGrid: need at least two knots");
    if (knots_.front() != 0.0) throw std::invalid_argument("TimeGrid: first knot must be 0");
    for (std::size_t i = 1; i < knots_.size(); ++i) {
        if (!(knots_[i] > knots_[i - 1]) || !std::isfinite(knots_[i]))
            throw std::invalid_argument("TimeGrid: knots must be finite and strictly increasing");
    }
}

bool TimeGrid::is_uniform() const {
    const double h = horizon() / static_cast<double>(n_steps());
    for (std::size_t i = 0; i < n_steps(); ++i)
        if (std::abs(dt(i) - h) > knot_tol * std::max(1.0, horizon())) return false;
    return true;
}

bool TimeGrid::is_dyadic() const { return is_power_of_two(n_steps()) && is_uniform(); }

bool TimeGrid::has_knot(double t) const {
    const double tol = knot_tol * std::max(1.0, horizon());
    for (double k : knots_)
        if (std::abs(k - t) <= tol) return true;
    return false;
}

std::size_t TimeGrid::knot_index(double t) const {
    const double tol = knot_tol * std::max(1.0, horizon());
    for (std::size_t i = 0; i < knots_.size(); ++i)
        if (std::abs(knots_[i] - t) <= tol) return i;
    std::ostringstream msg;
    msg << "time " << t << " is not a grid knot";
    throw std::invalid_argument(msg.str());
}

TimeGrid make_grid(std::size_t n_steps, double horizon) {
    if (n_steps == 0) throw std::invalid_argument("make_grid: n_steps must be >= 1");
    if (!(horizon > 0.0) || !std::isfinite(horizon))
        throw std::invalid_argument("make_grid: horizon must be positive");
    std::vector<double> k(n_steps + 1);
    for (std::size_t i = 0; i <= n_steps; ++i)
        k[i] = horizon * static_cast<double>(i) / static_cast<double>(n_steps);
    k.back() = horizon;
    return TimeGrid(std::move(k));
}

double PathPool::weight_sum() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

PathPool sample_paths(const TimeGrid& grid, std::size_t n_samples, std::uint64_t seed) {
    PathPool pool;
    pool.grid = grid;
    pool.n_samples = n_samples;
    pool.seed = seed;
    pool.weights.assign(n_samples, 1.0);
    const std::size_t n = grid.n_steps();
    pool.increments.resize(n_samples * n);
    std::vector<double> sd(n);
    for (std::size_t i = 0; i < n; ++i) sd[i] = std::sqrt(grid.dt(i));
    Rng rng(seed, stream::paths);
    for (std::size_t p = 0; p < n_samples; ++p)
        for (std::size_t i = 0; i < n; ++i) pool.increments[p * n + i] = sd[i] * rng.normal();
    return pool;
}

std::vector<double> brownian_at(const PathPool& pool, double t) {
    const std::size_t k = pool.grid.knot_index(t);
    std::vector<double> out(pool.n_samples, 0.0);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        double s = 0.0;
        for (std::size_t i = 0; i < k; ++i) s += r[i];
        out[p] = s;
    }
    return out;
}

std::size_t block_length(const TimeGrid& grid, std::size_t level) {
    if (!grid.is_dyadic()) throw std::invalid_argument("dyadic operation on a non-dyadic grid");
    if (level >= 64 || (std::size_t{1} << level) > grid.n_steps())
        throw std::invalid_argument("dyadic level finer than the grid");
    const std::size_t blocks = std::size_t{1} << level;
    if (grid.n_steps() % blocks != 0) throw std::invalid_argument("level does not divide n_steps");
    return grid.n_steps() / blocks;
}

PathPool dyadic_coarsen(const PathPool& pool, std::size_t level) {
    const std::size_t len = block_length(pool.grid, level);
    const std::size_t nb = pool.n_steps() / len;
    PathPool out;
    out.grid = make_grid(nb, pool.grid.horizon());
    out.n_samples = pool.n_samples;
    out.weights = pool.weights;
    out.seed = pool.seed;
    out.increments.assign(pool.n_samples * nb, 0.0);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        for (std::size_t b = 0; b < nb; ++b) {
            double s = 0.0;
            for (std::size_t j = 0; j < len; ++j) s += r[b * len + j];
            out.increments[p * nb + b] = s;
        }
    }
    return out;
}

void bridge_fill(const TimeGrid& fine, std::size_t level, std::span<const double> block_sums,
                 std::span<const double> z, std::span<double> out) {
    bridge_fill_blocks(fine, block_length(fine, level), block_sums, z, out);
}

void bridge_fill_blocks(const TimeGrid& fine, std::size_t len, std::span<const double> block_sums,
                        std::span<const double> z, std::span<double> out) {
    if (len == 0 || fine.n_steps() % len != 0)
        throw std::invalid_argument("bridge_fill: block length does not divide the grid");
    const std::size_t nb = fine.n_steps() / len;
    if (block_sums.size() != nb || z.size() != fine.n_steps() || out.size() != fine.n_steps())
        throw std::invalid_argument("bridge_fill: size mismatch");
    for (std::size_t b = 0; b < nb; ++b) {
        const std::size_t lo = b * len;
        double total_dt = 0.0, y_sum = 0.0;
        for (std::size_t j = lo; j < lo + len; ++j) {
            out[j] = std::sqrt(fine.dt(j)) * z[j];
            y_sum += out[j];
            total_dt += fine.dt(j);
        }
        if (len == 1) {
            out[lo] = block_sums[b];
            continue;
        }
        const double excess = y_sum - block_sums[b];
        for (std::size_t j = lo; j < lo + len; ++j) out[j] -= fine.dt(j) / total_dt * excess;
    }
}

BridgeBatch bridge_resample(const PathPool& pool, std::size_t level, std::size_t m_inner,
                            std::uint64_t seed) {
    if (m_inner == 0) throw std::invalid_argument("bridge_resample: m_inner must be >= 1");
    const std::size_t len = block_length(pool.grid, level);
    const std::size_t n = pool.n_steps();
    const std::size_t nb = n / len;
    BridgeBatch batch;
    batch.grid = pool.grid;
    batch.n_outer = pool.n_samples;
    batch.m_inner = m_inner;
    batch.increments.resize(pool.n_samples * m_inner * n);
    Rng rng(seed, stream::bridge);
    std::vector<double> sums(nb), z(n);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        for (std::size_t b = 0; b < nb; ++b) {
            double s = 0.0;
            for (std::size_t j = 0; j < len; ++j) s += r[b * len + j];
            sums[b] = s;
        }
        for (std::size_t k = 0; k < m_inner; ++k) {
            for (auto& v : z) v = rng.normal();
            std::span<double> out(batch.increments.data() + (p * m_inner + k) * n, n);
            bridge_fill(pool.grid, level, sums, z, out);
        }
    }
    return batch;
}

void write_pool_csv(const PathPool& pool, const std::string& path) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "n_steps,horizon,seed\n" << pool.n_steps() << ',' << pool.grid.horizon() << ',' << pool.seed
       << '\n';
    os << "weight";
    for (std::size_t i = 0; i < pool.n_steps(); ++i) os << ",dB" << i + 1;
    os << '\n';
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        os << pool.weights[p];
        for (double v : pool.row(p)) os << ',' << v;
        os << '\n';
    }
    write_file_atomic(path, os.str());
}

PathPool read_pool_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    std::getline(in, line);
    if (line != "n_steps,horizon,seed") throw std::runtime_error("bad pool header in " + path);
    std::getline(in, line);
    std::size_t n = 0;
    double horizon = 0.0;
    unsigned long long seed = 0;
    char c1 = 0, c2 = 0;
    std::istringstream hs(line);
    if (!(hs >> n >> c1 >> horizon >> c2 >> seed)) throw std::runtime_error("bad pool header values");
    PathPool pool;
    pool.grid = make_grid(n, horizon);
    pool.seed = seed;
    std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::vector<double> vals;
        while (std::getline(ls, cell, ',')) vals.push_back(std::stod(cell));
        if (vals.size() != n + 1) throw std::runtime_error("bad pool row in " + path);
        pool.weights.push_back(vals[0]);
        pool.increments.insert(pool.increments.end(), vals.begin() + 1, vals.end());
        ++pool.n_samples;
    }
    return pool;
}

}  // namespace wcalc
