#include "wcalc/clark_ocone.hpp"

#include <cmath>
#include <memory>
#include <sstream>

#include "wcalc/parallel.hpp"
#include "wcalc/rng.hpp"

namespace wcalc {

SmoothFunctional make_smooth_functional(TimeGrid blocks,
                                        std::function<double(std::span<const double>)> value,
                                        std::function<void(std::span<const double>, std::span<double>)> grad,
                                        std::string descriptor, double sup_value, double sup_grad) {
    if (!value) throw std::invalid_argument("smooth functional without a value function");
    SmoothFunctional F{std::move(blocks), std::move(value), std::move(grad), sup_value, sup_grad,
                       std::move(descriptor)};
    if (F.grad) {
        const std::size_t n = F.n_args();
        Rng rng(0xC0FFEE, stream::instances);
        std::vector<double> x(n), g(n);
        for (int probe = 0; probe < 16; ++probe) {
            for (std::size_t j = 0; j < n; ++j) x[j] = std::sqrt(F.blocks.dt(j)) * rng.normal();
            F.grad(x, g);
            for (std::size_t j = 0; j < n; ++j) {
                const double h = 1e-5 * std::max(1.0, std::abs(x[j]));
                std::vector<double> up = x, dn = x;
                up[j] += h;
                dn[j] -= h;
                const double fd = (F.value(up) - F.value(dn)) / (2.0 * h);
                if (std::abs(fd - g[j]) > 1e-6 * std::max(1.0, std::abs(g[j]))) {
                    std::ostringstream msg;
                    msg << "smooth functional '" << F.descriptor << "': gradient component " << j
                        << " disagrees with finite difference (" << g[j] << " vs " << fd << ")";
                    throw std::invalid_argument(msg.str());
                }
            }
        }
    }
    return F;
}

std::vector<std::size_t> block_map(const TimeGrid& fine, const TimeGrid& blocks) {
    const double tol = 1e-12 * std::max(1.0, fine.horizon());
    if (std::abs(fine.horizon() - blocks.horizon()) > tol)
        throw std::invalid_argument("functional blocks and pool grid have different horizons");
    std::vector<std::size_t> map(fine.n_steps());
    std::size_t b = 0;
    for (std::size_t i = 0; i < fine.n_steps(); ++i) {
        if (b < blocks.n_steps() && std::abs(fine.knot(i) - blocks.knot(b + 1)) <= tol) ++b;
        if (b >= blocks.n_steps())
            throw std::invalid_argument("functional blocks are not a coarsening of the pool grid");
        map[i] = b;
    }
    for (std::size_t j = 1; j < blocks.n_steps(); ++j)
        if (!fine.has_knot(blocks.knot(j)))
            throw std::invalid_argument("dimension mismatch: block knot is not a pool knot");
    return map;
}

void block_sums(const std::vector<std::size_t>& map, std::size_t n_blocks, std::span<const double> fine,
                std::span<double> out) {
    for (std::size_t j = 0; j < n_blocks; ++j) out[j] = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) out[map[i]] += fine[i];
}

std::vector<double> malliavin_derivative(const SmoothFunctional& F, const PathPool& pool) {
    if (!F.grad) throw std::invalid_argument("malliavin_derivative: functional has no gradient");
    const auto map = block_map(pool.grid, F.blocks);
    const std::size_t nb = F.n_args(), n = pool.n_steps();
    std::vector<double> out(pool.n_samples * n);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        std::vector<double> x(nb), g(nb);
        block_sums(map, nb, pool.row(p), x);
        F.grad(x, g);
        for (std::size_t i = 0; i < n; ++i) out[p * n + i] = g[map[i]];
    });
    return out;
}

GaussianSmoother::GaussianSmoother(const TimeGrid& fine, const TimeGrid& blocks, std::size_t quad_order)
    : map_(block_map(fine, blocks)), n_blocks_(blocks.n_steps()) {
    if (quad_order < 8) throw std::invalid_argument("quadrature order must be >= 8");
    rule_ = &gauss_hermite_cached(quad_order);
    const std::size_t n = fine.n_steps();
    var_.assign((n + 1) * n_blocks_, 0.0);
    for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t i = k; i < n; ++i) var_[k * n_blocks_ + map_[i]] += fine.dt(i);
}

std::size_t GaussianSmoother::remaining_blocks(std::size_t k) const {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n_blocks_; ++j)
        if (future_variance(k, j) > 0.0) ++c;
    return c;
}

std::vector<std::size_t> GaussianSmoother::touched_blocks(std::size_t k) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < k; ++i)
        if (out.empty() || out.back() != map_[i]) out.push_back(map_[i]);
    return out;
}

void GaussianSmoother::realized_state(std::size_t k, std::span<const double> prefix,
                                      std::span<double> state) const {
    if (prefix.size() < k) throw std::invalid_argument("realized_state: prefix shorter than knot index");
    for (std::size_t j = 0; j < n_blocks_; ++j) state[j] = 0.0;
    for (std::size_t i = 0; i < k; ++i) state[map_[i]] += prefix[i];
}

void GaussianSmoother::expect_state(std::size_t k, std::span<const double> state, const Integrand& fn,
                                    std::size_t n_out, std::span<double> out) const {
    std::vector<std::size_t> dims;
    std::vector<double> sd;
    for (std::size_t j = 0; j < n_blocks_; ++j) {
        const double v = future_variance(k, j);
        if (v > 0.0) {
            dims.push_back(j);
            sd.push_back(std::sqrt(v));
        }
    }
    if (dims.size() > max_quadrature_blocks) {
        std::ostringstream msg;
        msg << dims.size() << " unrealized blocks exceed the tensor quadrature cap of "
            << max_quadrature_blocks << "; use the Monte Carlo fallback";
        throw QuadratureCapExceeded(msg.str());
    }
    std::vector<double> blocks(state.begin(), state.begin() + static_cast<std::ptrdiff_t>(n_blocks_));
    std::vector<double> future(n_blocks_, 0.0), tmp(n_out);
    for (std::size_t o = 0; o < n_out; ++o) out[o] = 0.0;
    const std::size_t q = rule_->size(), u = dims.size();
    std::vector<std::size_t> idx(u, 0);
    while (true) {
        double w = 1.0;
        for (std::size_t d = 0; d < u; ++d) {
            const double z = sd[d] * rule_->nodes[idx[d]];
            future[dims[d]] = z;
            blocks[dims[d]] = state[dims[d]] + z;
            w *= rule_->weights[idx[d]];
        }
        fn(blocks, future, tmp);
        for (std::size_t o = 0; o < n_out; ++o) out[o] += w * tmp[o];
        std::size_t d = 0;
        while (d < u && ++idx[d] == q) idx[d++] = 0;
        if (d == u) break;
    }
}

void GaussianSmoother::expect(std::size_t k, std::span<const double> prefix, const Integrand& fn,
                              std::size_t n_out, std::span<double> out) const {
    std::vector<double> state(n_blocks_);
    realized_state(k, prefix, state);
    expect_state(k, state, fn, n_out, out);
}

void GaussianSmoother::expect_mc(std::size_t k, std::span<const double> prefix, const Integrand& fn,
                                 std::size_t n_out, std::span<double> out, std::size_t n_inner,
                                 std::uint64_t seed) const {
    if (n_inner == 0) throw std::invalid_argument("expect_mc: n_inner must be >= 1");
    std::vector<double> state(n_blocks_), blocks(n_blocks_), future(n_blocks_, 0.0), tmp(n_out);
    realized_state(k, prefix, state);
    for (std::size_t o = 0; o < n_out; ++o) out[o] = 0.0;
    Rng rng(seed, stream::inner_mc);
    for (std::size_t s = 0; s < n_inner; ++s) {
        for (std::size_t j = 0; j < n_blocks_; ++j) {
            const double v = future_variance(k, j);
            future[j] = v > 0.0 ? std::sqrt(v) * rng.normal() : 0.0;
            blocks[j] = state[j] + future[j];
        }
        fn(blocks, future, tmp);
        for (std::size_t o = 0; o < n_out; ++o) out[o] += tmp[o];
    }
    for (std::size_t o = 0; o < n_out; ++o) out[o] /= static_cast<double>(n_inner);
}

double gaussian_smooth(const SmoothFunctional& F, const TimeGrid& fine, double s,
                       std::span<const double> prefix, std::size_t quad_order) {
    GaussianSmoother sm(fine, F.blocks, quad_order);
    const std::size_t k = fine.knot_index(s);
    double out = 0.0;
    sm.expect(k, prefix,
              [&](std::span<const double> b, std::span<const double>, std::span<double> o) { o[0] = F.value(b); },
              1, std::span<double>(&out, 1));
    return out;
}

double gaussian_smooth_partial(const SmoothFunctional& F, std::size_t j, const TimeGrid& fine, double s,
                               std::span<const double> prefix, std::size_t quad_order) {
    if (!F.grad) throw std::invalid_argument("gaussian_smooth_partial: functional has no gradient");
    if (j >= F.n_args()) throw std::invalid_argument("gaussian_smooth_partial: index out of range");
    GaussianSmoother sm(fine, F.blocks, quad_order);
    const std::size_t k = fine.knot_index(s);
    double out = 0.0;
    std::vector<double> g(F.n_args());
    sm.expect(k, prefix,
              [&](std::span<const double> b, std::span<const double>, std::span<double> o) {
                  F.grad(b, g);
                  o[0] = g[j];
              },
              1, std::span<double>(&out, 1));
    return out;
}

namespace {

// Outputs: [L, ∂_0 L, ..., ∂_{nb-1} L]; without a gradient the partials are
// L·U_j / v_j (Gaussian integration by parts over the unrealized part U_j).
GaussianSmoother::Integrand value_and_partials(const SmoothFunctional& L, const GaussianSmoother& sm,
                                               std::size_t k) {
    const std::size_t nb = L.n_args();
    if (L.grad) {
        return [&L, nb](std::span<const double> b, std::span<const double>, std::span<double> o) {
            o[0] = L.value(b);
            L.grad(b, o.subspan(1, nb));
        };
    }
    std::vector<double> inv_var(nb, 0.0);
    for (std::size_t j = 0; j < nb; ++j) {
        const double v = sm.future_variance(k, j);
        inv_var[j] = v > 0.0 ? 1.0 / v : 0.0;
    }
    return [&L, nb, inv_var](std::span<const double> b, std::span<const double> fut, std::span<double> o) {
        const double v = L.value(b);
        o[0] = v;
        for (std::size_t j = 0; j < nb; ++j) o[1 + j] = v * fut[j] * inv_var[j];
    };
}

}  // namespace

ClarkOconeResult clark_ocone_decompose(const SmoothFunctional& L, const PathPool& pool,
                                       const ClarkOconeOptions& opt) {
    const GaussianSmoother sm(pool.grid, L.blocks, opt.quad_order);
    const std::size_t n = pool.n_steps(), nb = L.n_args();
    ClarkOconeResult res;
    res.n_samples = pool.n_samples;
    res.n_steps = n;
    res.Z.assign(pool.n_samples * n, 0.0);
    res.M.assign(pool.n_samples * (n + 1), 0.0);
    res.gamma.assign(pool.n_samples * n, 0.0);

    std::vector<GaussianSmoother::Integrand> integrands;
    for (std::size_t k = 0; k < n; ++k) integrands.push_back(value_and_partials(L, sm, k));

    auto smooth_at = [&](std::size_t p, std::size_t k, std::span<const double> prefix, std::span<double> out,
                         bool& mc) {
        if (sm.remaining_blocks(k) <= max_quadrature_blocks) {
            sm.expect(k, prefix, integrands[k], nb + 1, out);
        } else {
            mc = true;
            sm.expect_mc(k, prefix, integrands[k], nb + 1, out, opt.mc_inner,
                         derive_seed(opt.seed, p * (n + 1) + k));
        }
    };

    // Knot 0 carries no realized information: shared by all paths.
    std::vector<double> first(nb + 1);
    bool mc0 = false;
    smooth_at(0, 0, {}, first, mc0);
    std::vector<char> path_mc(pool.n_samples, 0);

    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto r = pool.row(p);
        std::vector<double> out(nb + 1), blocks(nb);
        bool mc = false;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == 0 && !mc0)
                out = first;
            else
                smooth_at(p, k, r.first(k), out, mc);
            const double M = out[0];
            if (!(M >= 1e-12)) {
                std::ostringstream msg;
                msg << "conditional density M = " << M << " below positivity floor at path " << p << ", knot " << k;
                throw std::runtime_error(msg.str());
            }
            const double Z = out[1 + sm.block_of(k)];
            res.M[p * (n + 1) + k] = M;
            res.Z[p * n + k] = Z;
            res.gamma[p * n + k] = Z / M;
        }
        block_sums(block_map(pool.grid, L.blocks), nb, r, blocks);
        const double LT = L.value(blocks);
        if (!(LT >= 1e-12)) throw std::runtime_error("density below positivity floor at the horizon");
        res.M[p * (n + 1) + n] = LT;
        path_mc[p] = mc ? 1 : 0;
    });
    res.used_mc = mc0;
    for (char c : path_mc) res.used_mc = res.used_mc || c;
    return res;
}

double reconstruction_error(std::span<const double> L_values, std::span<const double> Z, const PathPool& pool) {
    const std::size_t n = pool.n_steps();
    if (L_values.size() != pool.n_samples || Z.size() != pool.n_samples * n)
        throw std::invalid_argument("reconstruction_error: shape mismatch");
    double acc = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        double d = L_values[p] - 1.0;
        for (std::size_t i = 0; i < n; ++i) d -= Z[p * n + i] * r[i];
        acc += pool.weights[p] * d * d;
    }
    return std::sqrt(acc / pool.weight_sum());
}

StepProcess gamma_step_process(const SmoothFunctional& L, const TimeGrid& fine, std::size_t quad_order,
                               double bound) {
    auto sm = std::make_shared<const GaussianSmoother>(fine, L.blocks, quad_order);
    auto Lp = std::make_shared<const SmoothFunctional>(L);
    StepProcess s;
    s.grid = fine;
    s.bound = bound;
    s.descriptor = "clark_ocone(" + L.descriptor + ")";
    s.coeff = [sm, Lp](std::size_t i, std::span<const double> prefix) {
        const std::size_t nb = Lp->n_args();
        std::vector<double> out(nb + 1);
        sm->expect(i, prefix, value_and_partials(*Lp, *sm, i), nb + 1, out);
        if (!(out[0] >= 1e-12)) throw std::runtime_error("conditional density below positivity floor");
        return out[1 + sm->block_of(i)] / out[0];
    };
    return s;
}

}  // namespace wcalc
