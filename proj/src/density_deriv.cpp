#include "wcalc/density_deriv.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <limits>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wcalc/parallel.hpp"
#include "wcalc/quadrature.hpp"

namespace wcalc {

namespace {

double pool_mean(const PathPool& pool, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) s += pool.weights[p] * v[p];
    return s / pool.weight_sum();
}

Estimate pool_estimate(const PathPool& pool, std::span<const double> terms) {
    const std::vector<double> ones(pool.n_samples, 1.0);
    return {pool_mean(pool, terms), weighted_std_error(pool, ones, terms)};
}

double sum_to(std::span<const double> row, const TimeGrid& grid, double t) {
    const std::size_t k = grid.knot_index(t);
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += row[i];
    return s;
}

void require_grid(const DensityCurve& c, const PathPool& pool) {
    if (c.grid.knots() != pool.grid.knots())
        throw std::invalid_argument("density curve '" + c.descriptor + "' built on a different grid than the pool");
}

}  // namespace

PathDensity named_density(const TimeGrid& grid, const std::string& name) {
    const double T = grid.horizon();
    PathDensity d;
    d.grid = grid;
    d.descriptor = name;
    if (name == "one") {
        d.value = [](std::span<const double>) { return 1.0; };
        d.measurable_level = 0;
    } else if (name == "tanh_b1") {
        d.value = [](std::span<const double> r) {
            return 1.0 + 0.5 * std::tanh(std::accumulate(r.begin(), r.end(), 0.0));
        };
        d.measurable_level = 0;
    } else if (name == "exp_b1") {
        d.value = [T](std::span<const double> r) {
            return std::exp(std::accumulate(r.begin(), r.end(), 0.0) - 0.5 * T);
        };
        d.measurable_level = 0;
    } else if (name == "sin_b_half") {
        const double half = 0.5 * T;
        grid.knot_index(half);
        d.value = [grid, half](std::span<const double> r) { return 1.0 + 0.5 * std::sin(sum_to(r, grid, half)); };
        if (grid.is_dyadic()) d.measurable_level = 1;
    } else {
        throw std::invalid_argument("unknown density '" + name + "'");
    }
    return d;
}

namespace {

// γ^λ and ∂_λγ^λ rebuilt only when λ or the curve changes (per thread).
struct FamilyCache {
    std::uint64_t owner = 0;
    double lambda = std::numeric_limits<double>::quiet_NaN();
    StepProcess g, dg;
};

// A few λ per thread: mollification cycles through nearby parameters.
const FamilyCache& family_at(const CurveFamily& fam, std::uint64_t id, double lambda) {
    constexpr std::size_t slots = 8;
    thread_local std::array<FamilyCache, slots> cache;
    thread_local std::size_t next = 0;
    for (const FamilyCache& c : cache)
        if (c.owner == id && c.lambda == lambda) return c;
    FamilyCache& c = cache[next];
    next = (next + 1) % slots;
    c.g = fam.gamma(lambda);
    c.dg = fam.dgamma(lambda);
    c.owner = id;
    c.lambda = lambda;
    return c;
}

std::atomic<std::uint64_t> next_family_id{1};

}  // namespace

DensityCurve exponential_family_curve(const CurveFamily& fam) {
    DensityCurve c;
    c.lo = fam.lo;
    c.hi = fam.hi;
    c.kind = "exponential-family";
    c.descriptor = "exp(" + fam.descriptor + ")";
    c.grid = fam.gamma(fam.lo).grid;
    const TimeGrid grid = c.grid;
    const std::uint64_t id = next_family_id++;
    c.value = [fam, grid, id](double lambda, std::span<const double> r) {
        const StepProcess& g = family_at(fam, id, lambda).g;
        double acc = 0.0;
        for (std::size_t i = 0; i < grid.n_steps(); ++i) {
            const double gi = g.eval(i, r.first(i));
            acc += gi * r[i] - 0.5 * gi * gi * grid.dt(i);
        }
        return std::exp(acc);
    };
    c.deriv = [fam, grid, id](double lambda, std::span<const double> r) {
        const FamilyCache& fc = family_at(fam, id, lambda);
        double acc = 0.0, bracket = 0.0;
        for (std::size_t i = 0; i < grid.n_steps(); ++i) {
            const double gi = fc.g.eval(i, r.first(i));
            const double di = fc.dg.coeff(i, r.first(i));
            acc += gi * r[i] - 0.5 * gi * gi * grid.dt(i);
            bracket += di * r[i] - gi * di * grid.dt(i);
        }
        return std::exp(acc) * bracket;
    };
    // Deterministic coefficients constant on dyadic blocks make L a function
    // of those block sums; only the all-constant case is detected here.
    bool constant = true;
    for (double lam : {fam.lo, 0.5 * (fam.lo + fam.hi), fam.hi}) {
        const StepProcess g = fam.gamma(lam);
        const std::vector<double> zeros(grid.n_steps(), 0.0), ones(grid.n_steps(), 1.0);
        for (std::size_t i = 0; i < grid.n_steps(); ++i)
            if (g.coeff(i, std::span<const double>(zeros).first(i)) != g.coeff(0, {}) ||
                g.coeff(i, std::span<const double>(ones).first(i)) != g.coeff(0, {}))
                constant = false;
    }
    if (constant) c.measurable_level = 0;
    return c;
}

DensityCurve mixture_curve(const PathDensity& L0, const PathDensity& L1) {
    if (L0.grid.knots() != L1.grid.knots()) throw std::invalid_argument("mixture of densities on different grids");
    DensityCurve c;
    c.lo = 0.0;
    c.hi = 1.0;
    c.kind = "mixture";
    c.descriptor = "mix(" + L0.descriptor + "," + L1.descriptor + ")";
    c.grid = L0.grid;
    auto a = L0.value, b = L1.value;
    c.value = [a, b](double s, std::span<const double> r) { return (1.0 - s) * a(r) + s * b(r); };
    c.deriv = [a, b](double, std::span<const double> r) { return b(r) - a(r); };
    if (L0.measurable_level && L1.measurable_level)
        c.measurable_level = std::max(*L0.measurable_level, *L1.measurable_level);
    return c;
}

DensityCurve constant_curve(const PathDensity& L, double lo, double hi) {
    DensityCurve c;
    c.lo = lo;
    c.hi = hi;
    c.kind = "constant";
    c.descriptor = "const(" + L.descriptor + ")";
    c.grid = L.grid;
    auto a = L.value;
    c.value = [a](double, std::span<const double> r) { return a(r); };
    c.deriv = [](double, std::span<const double>) { return 0.0; };
    c.measurable_level = L.measurable_level;
    return c;
}

CurveValues curve_on_pool(const DensityCurve& curve, const PathPool& pool, double lambda) {
    require_grid(curve, pool);
    if (lambda < curve.lo || lambda > curve.hi) {
        std::ostringstream msg;
        msg << "lambda " << lambda << " outside [" << curve.lo << ", " << curve.hi << "] for " << curve.descriptor;
        throw std::invalid_argument(msg.str());
    }
    CurveValues cv;
    cv.value.resize(pool.n_samples);
    cv.deriv.resize(pool.n_samples);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        cv.value[p] = curve.value(lambda, pool.row(p));
        cv.deriv[p] = curve.deriv(lambda, pool.row(p));
    });
    const double m = pool_mean(pool, cv.value);
    const double dm = pool_mean(pool, cv.deriv);
    if (!(m > 0.0)) throw std::runtime_error("density curve has non-positive mean");
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        if (cv.value[p] < 0.0) throw std::runtime_error("density curve takes negative values");
        cv.deriv[p] = cv.deriv[p] / m - cv.value[p] * dm / (m * m);
        cv.value[p] /= m;
    }
    return cv;
}

std::vector<double> lions_primitive(const CylindricalFn& f, const EmpiricalLaw& law, std::span<const double> x) {
    if (f.dim != 1 || law.dim != 1) throw std::invalid_argument("lions_primitive: one-dimensional only");
    const LionsDerivativeAt d(f, law);
    const auto g = [&d](double y) { return d.scalar(y); };
    std::vector<std::size_t> idx(x.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> out(x.size(), 0.0);
    const auto first_pos = std::partition_point(idx.begin(), idx.end(), [&](std::size_t i) { return x[i] < 0.0; });
    double prev = 0.0, acc = 0.0;
    for (auto it = first_pos; it != idx.end(); ++it) {
        const double xi = x[*it];
        if (xi > prev) acc += integrate_adaptive(g, prev, xi);
        prev = xi;
        out[*it] = acc;
    }
    prev = 0.0;
    acc = 0.0;
    for (auto it = std::make_reverse_iterator(first_pos); it != idx.rend(); ++it) {
        const double xi = x[*it];
        if (xi < prev) acc -= integrate_adaptive(g, xi, prev);
        prev = xi;
        out[*it] = acc;
    }
    return out;
}

D1FProfile d1F_formula(const CylindricalFn& f, const EmpiricalLaw& law, std::span<const double> x_grid) {
    if (law.dim != 1 || !law.normalized) throw std::invalid_argument("d1F_formula: needs a normalized 1-D law");
    D1FProfile prof;
    prof.law = law;
    prof.x_grid.assign(x_grid.begin(), x_grid.end());
    const std::vector<double> at_atoms = lions_primitive(f, law, law.atoms);
    double c = 0.0;
    for (std::size_t i = 0; i < law.size(); ++i) c += law.weights[i] * at_atoms[i];
    prof.centering_constant = c;
    prof.values = lions_primitive(f, law, x_grid);
    for (double& v : prof.values) v -= c;
    return prof;
}

std::vector<double> recenter_to_Q(std::span<const double> values, const PathPool& pool) {
    if (values.size() != pool.n_samples) throw std::invalid_argument("recenter_to_Q: size mismatch");
    const double m = pool_mean(pool, values);
    std::vector<double> out(values.begin(), values.end());
    for (double& v : out) v -= m;
    return out;
}

std::vector<double> recenter_to_QL(std::span<const double> values, std::span<const double> density,
                                   const PathPool& pool) {
    if (values.size() != pool.n_samples || density.size() != pool.n_samples)
        throw std::invalid_argument("recenter_to_QL: size mismatch");
    double num = 0.0, den = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        num += pool.weights[p] * density[p] * values[p];
        den += pool.weights[p] * density[p];
    }
    if (!(den > 0.0)) throw std::invalid_argument("recenter_to_QL: density has zero mass");
    const double m = num / den;
    std::vector<double> out(values.begin(), values.end());
    for (double& v : out) v -= m;
    return out;
}

Estimate chain_rule_rhs(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                        std::span<const double> xi, const PathPool& pool) {
    const CurveValues cv = curve_on_pool(curve, pool, lambda);
    const EmpiricalLaw law = pushforward_law(pool, cv.value, xi);
    const std::vector<double> P = lions_primitive(f, law, xi);
    std::vector<double> terms(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) terms[p] = P[p] * cv.deriv[p];
    return pool_estimate(pool, terms);
}

double chain_rule_lhs_fd(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                         std::span<const double> xi, const PathPool& pool, double h_step) {
    if (!(h_step > 0.0)) throw std::invalid_argument("chain_rule_lhs_fd: step must be positive");
    if (lambda - h_step < curve.lo || lambda + h_step > curve.hi)
        throw std::invalid_argument("chain_rule_lhs_fd: lambda +- h leaves the curve domain");
    const CurveValues up = curve_on_pool(curve, pool, lambda + h_step);
    const CurveValues dn = curve_on_pool(curve, pool, lambda - h_step);
    return (eval_cyl(f, pushforward_law(pool, up.value, xi)) - eval_cyl(f, pushforward_law(pool, dn.value, xi))) /
           (2.0 * h_step);
}

ChainRuleResult chain_rule_check(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                                 std::span<const double> xi, const PathPool& pool, double h_step) {
    if (f.dim != 1) throw std::invalid_argument("chain_rule_check: one-dimensional functional expected");
    ChainRuleResult r;
    r.lhs = chain_rule_lhs_fd(f, curve, lambda, xi, pool, h_step);
    const CurveValues cv = curve_on_pool(curve, pool, lambda);
    const CurveValues up = curve_on_pool(curve, pool, lambda + h_step);
    const CurveValues dn = curve_on_pool(curve, pool, lambda - h_step);
    const EmpiricalLaw law = pushforward_law(pool, cv.value, xi);
    const double hp = f.h.df(f.inner(law));
    const std::vector<double> P = lions_primitive(f, law, xi);
    std::vector<double> b(pool.n_samples), diff(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        const double x = xi[p];
        const double a = hp * f.phi.value(std::span<const double>(&x, 1)) * (up.value[p] - dn.value[p]) /
                         (2.0 * h_step);
        b[p] = P[p] * cv.deriv[p];
        diff[p] = a - b[p];
    }
    const Estimate rhs = pool_estimate(pool, b);
    r.rhs = rhs.value;
    r.rhs_std_err = rhs.std_err;
    r.std_err = pool_estimate(pool, diff).std_err;
    return r;
}

SecondOrderResult second_order_check_1d(const CylindricalFn& f, const EmpiricalLaw& law,
                                        std::span<const double> x_grid, double h_step) {
    if (!(h_step > 0.0)) throw std::invalid_argument("second_order_check_1d: step must be positive");
    const std::size_t n = x_grid.size();
    std::vector<double> pts(3 * n);
    for (std::size_t j = 0; j < n; ++j) {
        pts[3 * j] = x_grid[j] - h_step;
        pts[3 * j + 1] = x_grid[j];
        pts[3 * j + 2] = x_grid[j] + h_step;
    }
    const D1FProfile prof = d1F_formula(f, law, pts);
    const LionsDerivativeAt d(f, law);
    SecondOrderResult res;
    for (std::size_t j = 0; j < n; ++j) {
        SecondOrderRow row;
        row.x = {x_grid[j]};
        row.d1F = {prof.values[3 * j + 1]};
        row.fd = {(prof.values[3 * j + 2] - prof.values[3 * j]) / (2.0 * h_step)};
        row.lions = {d.scalar(x_grid[j])};
        row.abs_err = std::abs(row.fd[0] - row.lions[0]);
        res.max_err = std::max(res.max_err, row.abs_err);
        res.rows.push_back(std::move(row));
    }
    return res;
}

SecondOrderResult second_order_check_multidim(const CylindricalFn& f, const EmpiricalLaw& law,
                                              std::span<const double> x_grid, double h_step) {
    const std::size_t d = f.dim;
    if (law.dim != d || x_grid.size() % d != 0)
        throw std::invalid_argument("second_order_check_multidim: dimension mismatch");
    const LionsDerivativeAt lions(f, law);
    const double hp = lions.h_prime();
    double c = 0.0;
    for (std::size_t i = 0; i < law.size(); ++i) c += law.weights[i] * hp * f.phi.value(law.atom(i));
    const auto potential = [&](std::span<const double> x) { return hp * f.phi.value(x) - c; };
    SecondOrderResult res;
    std::vector<double> y(d);
    for (std::size_t j = 0; j < x_grid.size() / d; ++j) {
        SecondOrderRow row;
        row.x.assign(x_grid.begin() + j * d, x_grid.begin() + (j + 1) * d);
        row.d1F = {potential(row.x)};
        row.lions.resize(d);
        lions(row.x, row.lions);
        row.fd.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            y = row.x;
            y[k] += h_step;
            const double up = potential(y);
            y[k] -= 2.0 * h_step;
            row.fd[k] = (up - potential(y)) / (2.0 * h_step);
            row.abs_err = std::max(row.abs_err, std::abs(row.fd[k] - row.lions[k]));
        }
        res.max_err = std::max(res.max_err, row.abs_err);
        res.rows.push_back(std::move(row));
    }
    return res;
}

MultidimRepr multidim_derivative_repr(const CylindricalFn& f, const SmoothFunctional& L,
                                      const std::vector<SmoothFunctional>& xi, const PathPool& pool,
                                      std::size_t quad_order) {
    const std::size_t d = f.dim;
    if (xi.size() != d) throw std::invalid_argument("multidim_derivative_repr: need one functional per dimension");
    if (!L.grad) throw std::invalid_argument("multidim_derivative_repr: density functional needs a gradient");
    for (const auto& x : xi) {
        if (x.blocks.knots() != L.blocks.knots())
            throw std::invalid_argument("multidim_derivative_repr: observables must share the density's blocks");
        if (!x.grad) throw std::invalid_argument("multidim_derivative_repr: observables need gradients");
    }
    const GaussianSmoother sm(pool.grid, L.blocks, quad_order);
    if (sm.remaining_blocks(0) > max_quadrature_blocks)
        throw QuadratureCapExceeded("multidim_derivative_repr: too many blocks for tensor quadrature");
    const auto map = block_map(pool.grid, L.blocks);
    const std::size_t nb = L.n_args(), n = pool.n_steps();

    MultidimRepr out;
    out.L_values.resize(pool.n_samples);
    out.xi_values.resize(pool.n_samples * d);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        std::vector<double> b(nb);
        block_sums(map, nb, pool.row(p), b);
        out.L_values[p] = L.value(b);
        for (std::size_t c = 0; c < d; ++c) out.xi_values[p * d + c] = xi[c].value(b);
    });
    const EmpiricalLaw law = pushforward_law(pool, out.L_values, out.xi_values, d);
    out.law_inner = f.inner(law);
    const double hp = f.h.df(out.law_inner);

    // Outputs per node: L, L·G, ∂_j L, ∂_j(L·G) with G = h'(m) φ(ξ).
    struct Scratch {
        std::vector<double> gL, gx, xv, gphi;
        explicit Scratch(std::size_t nb, std::size_t d) : gL(nb), gx(nb), xv(d), gphi(d) {}
    };
    const auto make_integrand = [&](std::size_t j, Scratch& s) {
        return [&, j](std::span<const double> blk, std::span<const double>, std::span<double> o) {
            const double Lv = L.value(blk);
            L.grad(blk, s.gL);
            double dxi_phi = 0.0;
            for (std::size_t c = 0; c < d; ++c) s.xv[c] = xi[c].value(blk);
            if (f.phi.grad) f.phi.grad(s.xv, s.gphi);
            for (std::size_t c = 0; c < d; ++c) {
                xi[c].grad(blk, s.gx);
                dxi_phi += s.gphi[c] * s.gx[j];
            }
            const double G = hp * f.phi.value(s.xv);
            o[0] = Lv;
            o[1] = Lv * G;
            o[2] = s.gL[j];
            o[3] = s.gL[j] * G + Lv * hp * dxi_phi;
        };
    };
    std::vector<double> first(4);
    {
        Scratch s(nb, d);
        sm.expect(0, {}, make_integrand(sm.block_of(0), s), 4, first);
    }
    out.df.assign(pool.n_samples, 0.0);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        Scratch s(nb, d);
        auto r = pool.row(p);
        std::vector<double> o(4);
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            if (k == 0)
                o = first;
            else
                sm.expect(k, r.first(k), make_integrand(sm.block_of(k), s), 4, o);
            const double M = o[0];
            if (!(M >= 1e-12)) throw std::runtime_error("multidim_derivative_repr: density below positivity floor");
            const double N = o[1] / M, gamma = o[2] / M;
            const double H = (o[3] - N * o[2]) / M;
            acc += H * (r[k] - gamma * pool.grid.dt(k));
        }
        out.df[p] = acc;
    });
    return out;
}

DirectionalCheck multidim_directional_check(const CylindricalFn& f, const CurveFamily& fam, double lambda,
                                            const std::function<SmoothFunctional(double)>& make_L,
                                            const std::vector<SmoothFunctional>& xi, const PathPool& pool,
                                            double h_step, std::size_t quad_order) {
    if (lambda - h_step < fam.lo || lambda + h_step > fam.hi)
        throw std::invalid_argument("multidim_directional_check: lambda +- h leaves the family domain");
    const double T = pool.grid.horizon();
    const SmoothFunctional E = make_L(lambda);
    const auto map = block_map(pool.grid, E.blocks);
    const std::size_t nb = E.n_args();

    std::vector<double> Ev(pool.n_samples), xv(pool.n_samples * xi.size());
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        std::vector<double> b(nb);
        block_sums(map, nb, pool.row(p), b);
        Ev[p] = E.value(b);
        for (std::size_t c = 0; c < xi.size(); ++c) xv[p * xi.size() + c] = xi[c].value(b);
    }
    const std::vector<double> Edirect = doleans_exponential(pool, fam.gamma(lambda), T);
    for (std::size_t p = 0; p < pool.n_samples; ++p)
        if (std::abs(Edirect[p] - Ev[p]) > 1e-9 * std::max(1.0, std::abs(Ev[p])))
            throw std::invalid_argument("multidim_directional_check: make_L disagrees with the curve family");

    const double c = pool_mean(pool, Ev);
    SmoothFunctional Ln = E;
    Ln.value = [E, c](std::span<const double> b) { return E.value(b) / c; };
    Ln.grad = [E, c](std::span<const double> b, std::span<double> g) {
        E.grad(b, g);
        for (double& v : g) v /= c;
    };
    const MultidimRepr rep = multidim_derivative_repr(f, Ln, xi, pool, quad_order);

    const std::vector<double> dE = doleans_lambda_derivative(pool, fam.gamma(lambda), fam.dgamma(lambda), T);
    const double dc = pool_mean(pool, dE);
    const double hp = f.h.df(rep.law_inner);
    std::vector<double> b(pool.n_samples), diff(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        const double dLn = dE[p] / c - Ev[p] * dc / (c * c);
        const double phi = f.phi.value(std::span<const double>(&xv[p * xi.size()], xi.size()));
        b[p] = rep.df[p] * dLn;
        diff[p] = hp * (phi - rep.law_inner) * dLn - b[p];
    }
    DirectionalCheck out;
    out.h_step = h_step;
    out.repr = pool_mean(pool, b);
    out.std_err = pool_estimate(pool, diff).std_err;
    const auto value_at = [&](double lam) {
        const std::vector<double> e = doleans_exponential(pool, fam.gamma(lam), T);
        return eval_cyl(f, pushforward_law(pool, e, xv, xi.size()));
    };
    out.fd = (value_at(lambda + h_step) - value_at(lambda - h_step)) / (2.0 * h_step);
    return out;
}

NestedLinkResult nested_link(const NestedFn& fn, const PathPool& pool, std::span<const double> density,
                           std::span<const double> xi1, std::span<const double> xi2,
                           std::span<const double> x1, std::span<const double> x2, const KernelOptions& opt,
                           const NestedLinkOptions& lo) {
    if (x1.size() != x2.size()) throw std::invalid_argument("nested_link: probe size mismatch");
    const std::size_t n = pool.n_samples;
    KernelOptions frozen = opt;
    frozen.bandwidth = resolve_bandwidth(xi2, density, opt);

    // Q_L-centered (∂_μG)_1 at the atoms.
    const std::vector<double> g1 = partial_mu_G_nested(fn, pool, density, xi1, xi2, xi1, xi2, frozen);
    const std::vector<double> d1F = recenter_to_QL(g1, density, pool);

    NestedLinkResult res;
    res.bandwidth = *frozen.bandwidth;
    std::vector<double> eta(n), dir(n), dens(n), terms(n);
    const double r2 = lo.bump_radius * lo.bump_radius;
    for (std::size_t j = 0; j < x1.size(); ++j) {
        for (std::size_t p = 0; p < n; ++p) {
            const double a = xi1[p] - x1[j], b = xi2[p] - x2[j];
            eta[p] = std::exp(-(a * a + b * b) / (2.0 * r2));
        }
        const std::vector<double> eta_c = recenter_to_QL(eta, density, pool);
        for (std::size_t p = 0; p < n; ++p) dir[p] = lo.alpha * density[p] * eta_c[p];
        const auto value_at = [&](double s) {
            for (std::size_t p = 0; p < n; ++p) dens[p] = density[p] + s * dir[p];
            return eval_nested(fn, pool, dens, xi1, xi2, frozen);
        };
        NestedLinkRow row;
        row.x1 = x1[j];
        row.x2 = x2[j];
        row.fd = (value_at(lo.s_step) - value_at(-lo.s_step)) / (2.0 * lo.s_step * lo.alpha);
        for (std::size_t p = 0; p < n; ++p) terms[p] = d1F[p] * eta_c[p];
        row.repr = weighted_expectation(pool, density, terms);
        res.repr_std_err = std::max(res.repr_std_err, weighted_std_error(pool, density, terms));
        row.abs_err = std::abs(row.fd - row.repr);
        res.max_err = std::max(res.max_err, row.abs_err);
        res.rows.push_back(row);
    }
    return res;
}

}  // namespace wcalc
