#include "wcalc/approx_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wcalc/parallel.hpp"
#include "wcalc/quadrature.hpp"
#include "wcalc/rng.hpp"

namespace wcalc {

namespace {

std::size_t pow2(std::size_t n) { return std::size_t{1} << n; }

double pool_mean(const PathPool& pool, std::span<const double> v) {
    double s = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) s += pool.weights[p] * v[p];
    return s / pool.weight_sum();
}

struct L2Error {
    double mean_sq = 0.0;  // weighted mean of d²
    double se_mean_sq = 0.0;
};

L2Error l2_error(const PathPool& pool, std::span<const double> a, std::span<const double> b) {
    std::vector<double> d2(pool.n_samples), ones(pool.n_samples, 1.0);
    for (std::size_t p = 0; p < pool.n_samples; ++p) d2[p] = (a[p] - b[p]) * (a[p] - b[p]);
    return {pool_mean(pool, d2), weighted_std_error(pool, ones, d2)};
}

// sqrt of a mean square and its delta-method standard error
void finish(const L2Error& e, double& err, double& se) {
    err = std::sqrt(e.mean_sq);
    se = err > 0.0 ? e.se_mean_sq / (2.0 * err) : e.se_mean_sq;
}

}  // namespace

void PipelineConfig::validate(const TimeGrid& working) const {
    const auto fail = [](const std::string& what) { throw std::invalid_argument("pipeline config: " + what); };
    if (!working.is_dyadic()) fail("working grid must be dyadic");
    if (pow2(dyadic_level) > working.n_steps()) fail("dyadic_level finer than the working grid");
    if (pow2(dyadic_level) > max_quadrature_blocks)
        fail("dyadic_level gives more than 4 blocks; mollification and quadrature are limited to 4 increments");
    if (!(truncation_level >= 3.0)) fail("truncation_level must be >= 3");
    if (!(mollify_eps > 0.0 && mollify_eps < 1.0)) fail("mollify_eps must lie in (0, 1)");
    if (!(positivity_floor > 0.0 && positivity_floor <= 1.0)) fail("positivity_floor must lie in (0, 1]");
    if (step_count == 0 || step_count > working.n_steps() || working.n_steps() % step_count != 0)
        fail("step_count must divide the working grid");
    if (inner_mc == 0) fail("inner_mc must be >= 1");
    if (quad_order < 8) fail("quad_order must be >= 8");
    if (mollifier_nodes % 2 != 0) fail("mollifier_nodes must be even (antithetic pairs)");
}

double LambdaField::value(double lambda, std::span<const double> x) const {
    double v = 0.0, dv = 0.0;
    eval(lambda, x, v, dv);
    return v;
}

TimeGrid ConditionedCurve::block_grid() const {
    std::vector<double> k;
    for (std::size_t b = 0; b <= n_blocks(); ++b) k.push_back(fine.knot(b * block_len));
    return TimeGrid(std::move(k));
}

void ConditionedCurve::eval(double lambda, std::span<const double> sums, double& v, double& dv) const {
    const double lam = std::clamp(lambda, curve.lo, curve.hi);
    const bool inside = lam == lambda;
    const std::size_t n = fine.n_steps();
    thread_local std::vector<double> row;
    row.resize(n);
    double sv = 0.0, sd = 0.0;
    for (std::size_t k = 0; k < m_inner; ++k) {
        bridge_fill_blocks(fine, block_len, sums, std::span<const double>(shapes.data() + k * n, n), row);
        sv += curve.value(lam, row);
        if (inside) sd += curve.deriv(lam, row);
    }
    v = sv / static_cast<double>(m_inner);
    dv = sd / static_cast<double>(m_inner);
}

LambdaField ConditionedCurve::field() const {
    auto self = std::make_shared<const ConditionedCurve>(*this);
    LambdaField f;
    f.n_args = n_blocks();
    f.eval = [self](double l, std::span<const double> x, double& v, double& dv) { self->eval(l, x, v, dv); };
    f.descriptor = "E[" + curve.descriptor + "|blocks]";
    return f;
}

ConditionedCurve condition_on_blocks(const DensityCurve& curve, const TimeGrid& fine, std::size_t block_len,
                                     std::size_t m_inner, std::uint64_t seed) {
    if (curve.grid.knots() != fine.knots()) throw std::invalid_argument("stage 1: curve and pool grids differ");
    if (block_len == 0 || fine.n_steps() % block_len != 0)
        throw std::invalid_argument("stage 1: block length does not divide the grid");
    if (m_inner == 0) throw std::invalid_argument("stage 1: m_inner must be >= 1");
    ConditionedCurve c;
    c.curve = curve;
    c.fine = fine;
    c.block_len = block_len;
    const std::size_t nb = fine.n_steps() / block_len;
    std::size_t level = 0;
    while (pow2(level) < nb) ++level;
    c.exact = block_len == 1 || (fine.is_dyadic() && pow2(level) == nb && curve.measurable_level &&
                                 *curve.measurable_level <= level);
    c.m_inner = c.exact ? 1 : m_inner;
    c.shapes.assign(c.m_inner * fine.n_steps(), 0.0);
    if (!c.exact) {
        Rng rng(seed, stream::bridge);
        for (double& z : c.shapes) z = rng.normal();
    }
    return c;
}

ConditionedCurve stage1_dyadic_condition(const DensityCurve& curve, std::size_t level, const PathPool& pool,
                                         std::size_t m_inner, std::uint64_t seed) {
    return condition_on_blocks(curve, pool.grid, block_length(pool.grid, level), m_inner, seed);
}

std::vector<double> block_sums_of(const PathPool& pool, std::size_t block_len) {
    const std::size_t n = pool.n_steps();
    if (block_len == 0 || n % block_len != 0) throw std::invalid_argument("block_sums_of: bad block length");
    const std::size_t nb = n / block_len;
    std::vector<double> out(pool.n_samples * nb, 0.0);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        for (std::size_t i = 0; i < n; ++i) out[p * nb + i / block_len] += r[i];
    }
    return out;
}

void field_on_pool(const LambdaField& f, double lambda, std::span<const double> sums, std::size_t n_samples,
                   std::vector<double>& v, std::vector<double>& dv) {
    const std::size_t nb = f.n_args;
    if (sums.size() != n_samples * nb) throw std::invalid_argument("field_on_pool: size mismatch");
    v.assign(n_samples, 0.0);
    dv.assign(n_samples, 0.0);
    parallel_for(n_samples, [&](std::size_t p) { f.eval(lambda, sums.subspan(p * nb, nb), v[p], dv[p]); });
}

double smooth_step(double t) {
    if (t <= 0.0) return 0.0;
    if (t >= 1.0) return 1.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    return a / (a + b);
}

double smooth_step_deriv(double t) {
    if (t <= 0.0 || t >= 1.0) return 0.0;
    const double a = std::exp(-1.0 / t), b = std::exp(-1.0 / (1.0 - t));
    const double s = a + b;
    return a * b * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t))) / (s * s);
}

double cutoff(double r, double ell) { return 1.0 - smooth_step((std::abs(r) - (ell - 2.0)) / 2.0); }

double cutoff_deriv(double r, double ell) {
    const double d = -0.5 * smooth_step_deriv((std::abs(r) - (ell - 2.0)) / 2.0);
    return r < 0.0 ? -d : d;
}

double clip(double r, double ell) {
    const double a = std::abs(r), flat = ell - 2.0;
    if (a <= flat) return r;
    const double u = a - flat;
    double excess = 1.0;  // ∫_0^2 (1 - S(v/2)) dv
    if (u < 2.0) {
        static const QuadratureRule gl = gauss_legendre(24);
        excess = 0.0;
        for (std::size_t i = 0; i < gl.size(); ++i) {
            const double v = 0.5 * u * (gl.nodes[i] + 1.0);
            excess += gl.weights[i] * (1.0 - smooth_step(v / 2.0));
        }
        excess *= 0.5 * u;
    }
    return r < 0.0 ? -(flat + excess) : flat + excess;
}

double clip_deriv(double r, double ell) {
    const double a = std::abs(r), flat = ell - 2.0;
    if (a <= flat) return 1.0;
    return 1.0 - smooth_step((a - flat) / 2.0);
}

LambdaField stage3_truncate(const LambdaField& h, double ell) {
    if (!(ell >= 3.0)) throw std::invalid_argument("stage 3: truncation level must be >= 3");
    LambdaField out;
    out.n_args = h.n_args;
    std::ostringstream d;
    d << "trunc" << ell << "(" << h.descriptor << ")";
    out.descriptor = d.str();
    out.eval = [h, ell](double lambda, std::span<const double> x, double& v, double& dv) {
        double r2 = 0.0;
        for (double xi : x) r2 += xi * xi;
        const double phx = cutoff(std::sqrt(r2), ell);
        const double phl = cutoff(lambda, ell);
        const double dphl = cutoff_deriv(lambda, ell);
        v = 0.0;
        dv = 0.0;
        if (phx == 0.0 || (phl == 0.0 && dphl == 0.0)) return;
        const double lam = clip(lambda, ell);
        double hv = 0.0, hd = 0.0;
        h.eval(lam, x, hv, hd);
        const double c = clip(hv, ell);
        v = c * phx * phl;
        dv = clip_deriv(hv, ell) * hd * clip_deriv(lambda, ell) * phx * phl + c * phx * dphl;
    };
    return out;
}

double bump_coordinate_variance(std::size_t dim) {
    if (dim == 0) throw std::invalid_argument("bump kernel dimension must be >= 1");
    const auto bump = [](double r) { return r >= 1.0 ? 0.0 : std::exp(-1.0 / (1.0 - r * r)); };
    const double D = static_cast<double>(dim);
    const double num = integrate_adaptive([&](double r) { return std::pow(r, D + 1.0) * bump(r); }, 0.0, 1.0, 1e-12);
    const double den = integrate_adaptive([&](double r) { return std::pow(r, D - 1.0) * bump(r); }, 0.0, 1.0, 1e-12);
    return num / den / D;
}

namespace {

// Uniform point of the unit ball accepted with probability ∝ bump.
void sample_bump(Rng& rng, std::span<double> u) {
    while (true) {
        double r2 = 0.0;
        for (double& v : u) {
            v = rng.uniform(-1.0, 1.0);
            r2 += v * v;
        }
        if (r2 >= 1.0) continue;
        if (rng.uniform() < std::exp(1.0 - 1.0 / (1.0 - r2))) return;
    }
}

}  // namespace

MollifierRule make_mollifier_rule(std::size_t n_args, std::size_t n_nodes, std::uint64_t seed) {
    if (n_args == 0 || n_args > max_quadrature_blocks)
        throw std::invalid_argument("stage 4: mollification is limited to 1..4 increments");
    const std::size_t D = n_args + 1;
    MollifierRule rule;
    if (n_nodes == 0) {
        // ±c e_j with weights 1/(2D): exact for polynomials of degree <= 3
        // under the product kernel.
        const double c_lambda = std::sqrt(D * bump_coordinate_variance(1));
        const double c_x = std::sqrt(D * bump_coordinate_variance(n_args));
        if (c_lambda > 1.0 || c_x > 1.0) throw std::logic_error("mollifier nodes outside the kernel support");
        for (std::size_t j = 0; j < D; ++j)
            for (double sgn : {1.0, -1.0}) {
                std::vector<double> off(D, 0.0);
                off[j] = sgn * (j == 0 ? c_lambda : c_x);
                rule.offsets.insert(rule.offsets.end(), off.begin(), off.end());
                rule.weights.push_back(1.0 / (2.0 * D));
            }
        return rule;
    }
    if (n_nodes % 2 != 0) throw std::invalid_argument("stage 4: sampled mollifier needs an even node count");
    Rng rng(seed, stream::mollifier);
    std::vector<double> lam(1), x(n_args);
    for (std::size_t k = 0; k < n_nodes / 2; ++k) {
        sample_bump(rng, lam);
        sample_bump(rng, x);
        for (double sgn : {1.0, -1.0}) {
            rule.offsets.push_back(sgn * lam[0]);
            for (double v : x) rule.offsets.push_back(sgn * v);
            rule.weights.push_back(1.0 / static_cast<double>(n_nodes));
        }
    }
    return rule;
}

LambdaField stage4_mollify(const LambdaField& h, double eps, const MollifierRule& rule) {
    if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("stage 4: eps must lie in (0, 1)");
    const std::size_t n = h.n_args, D = n + 1;
    if (rule.offsets.size() != rule.n_nodes() * D) throw std::invalid_argument("stage 4: rule dimension mismatch");
    LambdaField out;
    out.n_args = n;
    std::ostringstream d;
    d << "moll" << eps << "(" << h.descriptor << ")";
    out.descriptor = d.str();
    out.eval = [h, eps, rule, n, D](double lambda, std::span<const double> x, double& v, double& dv) {
        thread_local std::vector<double> y;
        y.resize(n);
        v = 0.0;
        dv = 0.0;
        for (std::size_t k = 0; k < rule.n_nodes(); ++k) {
            const double* off = rule.offsets.data() + k * D;
            for (std::size_t j = 0; j < n; ++j) y[j] = x[j] - eps * off[1 + j];
            double hv = 0.0, hd = 0.0;
            h.eval(lambda - eps * off[0], y, hv, hd);
            v += rule.weights[k] * hv;
            dv += rule.weights[k] * hd;
        }
    };
    return out;
}

std::vector<double> stage5_normalize(std::span<const double> F, double eps_pos) {
    if (!(eps_pos > 0.0)) throw std::invalid_argument("stage 5: positivity floor must be positive");
    if (F.empty()) throw std::invalid_argument("stage 5: no values");
    double m = 0.0;
    for (double f : F) {
        if (f < 0.0) throw std::invalid_argument("stage 5: negative input value");
        m += f;
    }
    m /= static_cast<double>(F.size());
    std::vector<double> L(F.size());
    for (std::size_t i = 0; i < F.size(); ++i) L[i] = (eps_pos + F[i]) / (eps_pos + m);
    return L;
}

void NormalizedDensity::eval(std::span<const double> x, double& L, double& dL) const {
    double f = 0.0, df = 0.0;
    F.eval(lambda, x, f, df);
    const double den = eps_pos + mean_F;
    L = (eps_pos + f) / den;
    dL = df / den - (eps_pos + f) * mean_dF / (den * den);
}

SmoothFunctional NormalizedDensity::as_smooth_functional(const TimeGrid& blocks) const {
    if (blocks.n_steps() != F.n_args) throw std::invalid_argument("normalized density: block count mismatch");
    const NormalizedDensity self = *this;
    SmoothFunctional s;
    s.blocks = blocks;
    s.value = [self](std::span<const double> x) {
        double L = 0.0, dL = 0.0;
        self.eval(x, L, dL);
        return L;
    };
    s.descriptor = "L_eps(" + F.descriptor + ")";
    return s;
}

NormalizedDensity make_normalized_density(const LambdaField& F, double lambda, double eps_pos,
                                          std::span<const double> sums, std::size_t n_samples) {
    std::vector<double> v, dv;
    field_on_pool(F, lambda, sums, n_samples, v, dv);
    NormalizedDensity nd;
    nd.F = F;
    nd.lambda = lambda;
    nd.eps_pos = eps_pos;
    double m = 0.0, dm = 0.0;
    for (std::size_t p = 0; p < n_samples; ++p) {
        if (v[p] < 0.0) throw std::invalid_argument("stage 5: negative input value");
        m += v[p];
        dm += dv[p];
    }
    nd.mean_F = m / static_cast<double>(n_samples);
    nd.mean_dF = dm / static_cast<double>(n_samples);
    return nd;
}

struct GammaField::Impl {
    NormalizedDensity L;
    GaussianSmoother sm;
    std::size_t n_fine = 0, nb = 0;

    struct Knot {
        bool table = false;
        std::vector<std::size_t> dims;  // touched blocks
        std::vector<double> lo, step;
        std::size_t G = 0;
        std::vector<double> values;  // G^d × 4
    };
    std::vector<Knot> knots;

    Impl(const NormalizedDensity& L_, const TimeGrid& fine, const TimeGrid& blocks, std::size_t q)
        : L(L_), sm(fine, blocks, q), n_fine(fine.n_steps()), nb(blocks.n_steps()) {}

    GaussianSmoother::Integrand integrand(std::size_t k) const {
        const std::size_t j = sm.block_of(k);
        const double inv_v = 1.0 / sm.future_variance(k, j);
        return [this, j, inv_v](std::span<const double> b, std::span<const double> fut, std::span<double> o) {
            double Lv = 0.0, dL = 0.0;
            L.eval(b, Lv, dL);
            o[0] = Lv;
            o[1] = Lv * fut[j] * inv_v;
            o[2] = dL;
            o[3] = dL * fut[j] * inv_v;
        };
    }

    void direct(std::size_t k, std::span<const double> state, std::span<double> out) const {
        sm.expect_state(k, state, integrand(k), 4, out);
    }

    void lookup(const Knot& kn, std::span<const double> state, std::span<double> out) const {
        const std::size_t d = kn.dims.size();
        std::size_t base[4];
        double w[4][4];
        for (std::size_t a = 0; a < d; ++a) {
            double t = (state[kn.dims[a]] - kn.lo[a]) / kn.step[a];
            t = std::clamp(t, 0.0, static_cast<double>(kn.G - 1));
            std::size_t i = static_cast<std::size_t>(std::floor(t));
            i = std::clamp<std::size_t>(i, 1, kn.G - 3);
            const double u = t - static_cast<double>(i);
            base[a] = i - 1;
            w[a][0] = -u * (u - 1.0) * (u - 2.0) / 6.0;
            w[a][1] = (u + 1.0) * (u - 1.0) * (u - 2.0) / 2.0;
            w[a][2] = -(u + 1.0) * u * (u - 2.0) / 2.0;
            w[a][3] = (u + 1.0) * u * (u - 1.0) / 6.0;
        }
        for (std::size_t o = 0; o < 4; ++o) out[o] = 0.0;
        std::size_t corner[4] = {0, 0, 0, 0};
        while (true) {
            double wt = 1.0;
            std::size_t flat = 0;
            for (std::size_t a = 0; a < d; ++a) {
                wt *= w[a][corner[a]];
                flat = flat * kn.G + base[a] + corner[a];
            }
            for (std::size_t o = 0; o < 4; ++o) out[o] += wt * kn.values[flat * 4 + o];
            std::size_t a = 0;
            while (a < d && ++corner[a] == 4) corner[a++] = 0;
            if (a == d) break;
        }
    }
};

namespace {

// Points per dimension of the state tables; spacing is half a standard
// deviation of the realized block part at d = 3.
std::size_t table_points(std::size_t d) {
    switch (d) {
        case 0: return 1;
        case 1: return 97;
        case 2: return 41;
        default: return 21;
    }
}
constexpr double table_radius = 5.0;  // standard deviations of the realized part

}  // namespace

GammaField::GammaField(const NormalizedDensity& L, const TimeGrid& fine, const TimeGrid& blocks,
                       std::size_t quad_order) {
    auto impl = std::make_shared<Impl>(L, fine, blocks, quad_order);
    const std::size_t n = impl->n_fine;
    impl->knots.resize(n);
    const QuadratureRule& gh = gauss_hermite_cached(quad_order);
    // Backward from the last knot: M_k = E[M_{k+1}] and Z_k = E[M_{k+1} ΔW_k] / dt_k
    // over the single increment ΔW_k, reading M_{k+1} from its table.
    for (std::size_t k = n; k-- > 0;) {
        auto& kn = impl->knots[k];
        kn.dims = impl->sm.touched_blocks(k);
        const std::size_t d = kn.dims.size();
        if (d > 3) continue;
        const bool chained = k + 1 == n || impl->knots[k + 1].table;
        if (!chained && impl->sm.remaining_blocks(k) > max_quadrature_blocks) continue;
        kn.table = true;
        kn.G = table_points(d);
        std::size_t n_states = 1;
        for (std::size_t a = 0; a < d; ++a) n_states *= kn.G;
        for (std::size_t a = 0; a < d; ++a) {
            const std::size_t j = kn.dims[a];
            const double realized = blocks.dt(j) - impl->sm.future_variance(k, j);
            const double r = table_radius * std::sqrt(std::max(realized, 0.0));
            kn.lo.push_back(-r);
            kn.step.push_back(d == 0 ? 0.0 : 2.0 * r / static_cast<double>(kn.G - 1));
        }
        kn.values.assign(n_states * 4, 0.0);
        const Impl& cimpl = *impl;
        const std::size_t j = impl->sm.block_of(k);
        const double sd = std::sqrt(fine.dt(k));
        parallel_for(n_states, [&](std::size_t s) {
            std::vector<double> state(cimpl.nb, 0.0), next(cimpl.nb);
            std::size_t rem = s;
            for (std::size_t a = d; a-- > 0;) {
                const std::size_t i = rem % kn.G;
                rem /= kn.G;
                state[kn.dims[a]] = kn.lo[a] + kn.step[a] * static_cast<double>(i);
            }
            double* out = kn.values.data() + s * 4;
            if (!chained) {
                cimpl.direct(k, state, std::span<double>(out, 4));
                return;
            }
            double o[4];
            for (std::size_t q = 0; q < gh.size(); ++q) {
                next = state;
                next[j] += sd * gh.nodes[q];
                if (k + 1 == n) {
                    cimpl.L.eval(next, o[0], o[2]);
                } else {
                    cimpl.lookup(cimpl.knots[k + 1], next, o);
                }
                const double w = gh.weights[q], wz = w * gh.nodes[q] / sd;
                out[0] += w * o[0];
                out[1] += wz * o[0];
                out[2] += w * o[2];
                out[3] += wz * o[2];
            }
        });
    }
    impl_ = impl;
}

std::size_t GammaField::n_steps() const { return impl_->n_fine; }
bool GammaField::tabulated(std::size_t k) const { return impl_->knots.at(k).table; }

void GammaField::eval(std::size_t k, std::span<const double> prefix, std::span<double> out) const {
    const Impl& im = *impl_;
    const auto& kn = im.knots.at(k);
    std::vector<double> state(im.nb);
    im.sm.realized_state(k, prefix, state);
    if (!kn.table)
        im.direct(k, state, out);
    else if (kn.dims.empty())
        std::copy(kn.values.begin(), kn.values.end(), out.begin());
    else
        im.lookup(kn, state, out);
}

double GammaField::gamma(std::size_t k, std::span<const double> prefix) const {
    double o[4];
    eval(k, prefix, o);
    if (!(o[0] >= 1e-12)) throw std::runtime_error("stage 6: conditional density below positivity floor");
    return o[1] / o[0];
}

GammaMatrices stage6_clark_ocone(const GammaField& field, const PathPool& pool) {
    const std::size_t n = pool.n_steps();
    if (field.n_steps() != n) throw std::invalid_argument("stage 6: field and pool grids differ");
    GammaMatrices g;
    g.n_samples = pool.n_samples;
    g.n_steps = n;
    g.gamma.assign(pool.n_samples * n, 0.0);
    g.dgamma.assign(pool.n_samples * n, 0.0);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto r = pool.row(p);
        double o[4];
        for (std::size_t k = 0; k < n; ++k) {
            field.eval(k, r.first(k), o);
            if (!(o[0] >= 1e-12)) {
                std::ostringstream msg;
                msg << "stage 6: conditional density " << o[0] << " below positivity floor (path " << p << ", knot "
                    << k << ")";
                throw std::runtime_error(msg.str());
            }
            const double gam = o[1] / o[0];
            g.gamma[p * n + k] = gam;
            g.dgamma[p * n + k] = (o[3] - gam * o[2]) / o[0];
        }
    });
    return g;
}

GammaMatrices stage7_stepify(const GammaMatrices& g, std::size_t k) {
    if (k == 0 || g.n_steps % k != 0) throw std::invalid_argument("stage 7: k must divide the working grid");
    const std::size_t stride = g.n_steps / k;
    GammaMatrices out = g;
    for (std::size_t p = 0; p < g.n_samples; ++p)
        for (std::size_t i = 0; i < g.n_steps; ++i) {
            const std::size_t src = p * g.n_steps + (i / stride) * stride;
            out.gamma[p * g.n_steps + i] = g.gamma[src];
            out.dgamma[p * g.n_steps + i] = g.dgamma[src];
        }
    return out;
}

StepProcess stage7_step_process(const GammaField& field, const TimeGrid& fine, std::size_t k) {
    if (k == 0 || fine.n_steps() % k != 0) throw std::invalid_argument("stage 7: k must divide the working grid");
    if (field.n_steps() != fine.n_steps()) throw std::invalid_argument("stage 7: field and grid differ");
    const std::size_t stride = fine.n_steps() / k;
    StepProcess s;
    s.grid = fine;
    s.bound = std::numeric_limits<double>::infinity();
    std::ostringstream d;
    d << "stepify" << k;
    s.descriptor = d.str();
    s.coeff = [field, stride](std::size_t i, std::span<const double> prefix) {
        const std::size_t i0 = (i / stride) * stride;
        return field.gamma(i0, prefix.first(i0));
    };
    return s;
}

void exponential_from_matrices(const PathPool& pool, const GammaMatrices& g, std::vector<double>& E,
                               std::vector<double>& dE) {
    const std::size_t n = pool.n_steps();
    if (g.n_samples != pool.n_samples || g.n_steps != n) throw std::invalid_argument("exponential: shape mismatch");
    E.assign(pool.n_samples, 0.0);
    dE.assign(pool.n_samples, 0.0);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        double logE = 0.0, bracket = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double gm = g.gamma[p * n + i], dg = g.dgamma[p * n + i], dt = pool.grid.dt(i);
            logE += gm * r[i] - 0.5 * gm * gm * dt;
            bracket += dg * r[i] - gm * dg * dt;
        }
        E[p] = std::exp(logE);
        dE[p] = E[p] * bracket;
    }
}

namespace {

struct Chain {
    ConditionedCurve cond;
    LambdaField h1, h3, h4;
    TimeGrid blocks;
    std::vector<double> sums;
};

Chain build_chain(const DensityCurve& curve, const PipelineConfig& cfg, const PathPool& pool) {
    cfg.validate(pool.grid);
    Chain c;
    c.cond = stage1_dyadic_condition(curve, cfg.dyadic_level, pool, cfg.inner_mc, cfg.seed);
    c.h1 = c.cond.field();
    c.h3 = stage3_truncate(c.h1, cfg.truncation_level);
    c.h4 = stage4_mollify(c.h3, cfg.mollify_eps, make_mollifier_rule(c.h1.n_args, cfg.mollifier_nodes, cfg.seed));
    c.blocks = c.cond.block_grid();
    c.sums = block_sums_of(pool, c.cond.block_len);
    return c;
}

struct AtLambda {
    std::vector<double> target_v, target_d;
    std::vector<double> v[4], d[4];  // stages 1, 3, 4, 5
    GammaMatrices g6;
    std::vector<double> E6, dE6;
    std::vector<std::size_t> tabulated;
    std::shared_ptr<GammaField> field;
};

AtLambda run_at(const Chain& c, const DensityCurve& curve, double lambda, const PipelineConfig& cfg,
                const PathPool& pool) {
    AtLambda a;
    const CurveValues target = curve_on_pool(curve, pool, lambda);
    a.target_v = target.value;
    a.target_d = target.deriv;
    field_on_pool(c.h1, lambda, c.sums, pool.n_samples, a.v[0], a.d[0]);
    field_on_pool(c.h3, lambda, c.sums, pool.n_samples, a.v[1], a.d[1]);
    field_on_pool(c.h4, lambda, c.sums, pool.n_samples, a.v[2], a.d[2]);

    NormalizedDensity nd;
    nd.F = c.h4;
    nd.lambda = lambda;
    nd.eps_pos = cfg.positivity_floor;
    for (double f : a.v[2])
        if (f < 0.0) throw std::runtime_error("stage 5: mollified functional is negative");
    nd.mean_F = pool_mean(pool, a.v[2]);
    nd.mean_dF = pool_mean(pool, a.d[2]);
    a.v[3].resize(pool.n_samples);
    a.d[3].resize(pool.n_samples);
    const std::size_t nb = c.h4.n_args;
    for (std::size_t p = 0; p < pool.n_samples; ++p)
        nd.eval(std::span<const double>(c.sums).subspan(p * nb, nb), a.v[3][p], a.d[3][p]);

    a.field = std::make_shared<GammaField>(nd, pool.grid, c.blocks, cfg.quad_order);
    for (std::size_t k = 0; k < pool.n_steps(); ++k)
        if (a.field->tabulated(k)) a.tabulated.push_back(k);
    a.g6 = stage6_clark_ocone(*a.field, pool);
    exponential_from_matrices(pool, a.g6, a.E6, a.dE6);
    return a;
}

void final_errors(const PathPool& pool, const AtLambda& a, const GammaMatrices& g, LadderRow& row) {
    std::vector<double> E, dE;
    exponential_from_matrices(pool, g, E, dE);
    finish(l2_error(pool, E, a.target_v), row.err_value, row.se_value);
    finish(l2_error(pool, dE, a.target_d), row.err_deriv, row.se_deriv);
    finish(l2_error(pool, E, a.v[3]), row.err_value_stage5, row.se_value_stage5);
}

}  // namespace

PipelineReport pipeline_run(const DensityCurve& curve, double lambda, double lambda_prime,
                            const PipelineConfig& config, const PathPool& pool, std::size_t gamma_rows) {
    for (double l : {lambda, lambda_prime})
        if (l < curve.lo || l > curve.hi) throw std::invalid_argument("pipeline: lambda outside the curve domain");
    const Chain c = build_chain(curve, config, pool);
    PipelineReport rep;
    rep.config = config;
    rep.lambda = lambda;
    rep.lambda_prime = lambda_prime;

    const double s_pts[3] = {0.0, 0.5, 1.0};
    const double simpson[3] = {1.0 / 6.0, 4.0 / 6.0, 1.0 / 6.0};
    std::vector<AtLambda> runs;
    for (double s : s_pts) runs.push_back(run_at(c, curve, s * lambda_prime + (1.0 - s) * lambda, config, pool));

    std::vector<GammaMatrices> g7;
    std::vector<std::vector<double>> E7(3), dE7(3);
    for (std::size_t i = 0; i < 3; ++i) {
        g7.push_back(stage7_stepify(runs[i].g6, config.step_count));
        exponential_from_matrices(pool, g7[i], E7[i], dE7[i]);
    }

    const int ids[6] = {1, 3, 4, 5, 6, 7};
    for (int st = 0; st < 6; ++st) {
        StageReport sr;
        sr.stage = ids[st];
        double seg_v = 0.0, seg_d = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            const AtLambda& a = runs[i];
            std::span<const double> v, d;
            if (st < 4) {
                v = a.v[st];
                d = a.d[st];
            } else if (st == 4) {
                v = a.E6;
                d = a.dE6;
            } else {
                v = E7[i];
                d = dE7[i];
            }
            const L2Error ev = l2_error(pool, v, a.target_v), ed = l2_error(pool, d, a.target_d);
            seg_v += simpson[i] * ev.mean_sq;
            seg_d += simpson[i] * ed.mean_sq;
            if (i == 0) {
                finish(ev, sr.l2_error_value, sr.se_value);
                finish(ed, sr.l2_error_deriv, sr.se_deriv);
            }
        }
        sr.along_segment_error = std::sqrt(seg_v);
        sr.along_segment_error_deriv = std::sqrt(seg_d);
        rep.stages.push_back(sr);
    }
    const StageReport& last = rep.stages.back();
    rep.final_value_error = last.l2_error_value;
    rep.final_deriv_error = last.l2_error_deriv;
    rep.final_value_se = last.se_value;
    rep.final_deriv_se = last.se_deriv;
    rep.segment_value_error = last.along_segment_error;
    rep.segment_deriv_error = last.along_segment_error_deriv;

    const std::vector<double> ones(pool.n_samples, 1.0);
    rep.exponential_mean = pool_mean(pool, E7[0]);
    rep.exponential_mean_se = weighted_std_error(pool, ones, E7[0]);
    rep.min_density = *std::min_element(runs[0].v[3].begin(), runs[0].v[3].end());
    rep.tabulated_knots = runs[0].tabulated;

    const std::size_t n = pool.n_steps();
    const GammaMatrices& g = runs[0].g6;
    rep.gamma_mean.assign(n, 0.0);
    rep.gamma_sd.assign(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0, s2 = 0.0;
        for (std::size_t p = 0; p < pool.n_samples; ++p) {
            s += g.gamma[p * n + i];
            s2 += g.gamma[p * n + i] * g.gamma[p * n + i];
        }
        const double m = s / pool.n_samples;
        rep.gamma_mean[i] = m;
        rep.gamma_sd[i] = std::sqrt(std::max(0.0, s2 / pool.n_samples - m * m));
    }
    rep.gamma_row_count = std::min(gamma_rows, pool.n_samples);
    rep.gamma_rows.assign(g.gamma.begin(), g.gamma.begin() + rep.gamma_row_count * n);
    return rep;
}

std::vector<LadderRow> pipeline_ladder(const DensityCurve& curve, double lambda, const PipelineConfig& base,
                                       const PathPool& pool, const std::string& parameter,
                                       const std::vector<double>& settings) {
    std::vector<LadderRow> rows;
    if (parameter == "k") {
        const Chain c = build_chain(curve, base, pool);
        const AtLambda a = run_at(c, curve, lambda, base, pool);
        for (double s : settings) {
            LadderRow row{parameter, s};
            final_errors(pool, a, stage7_stepify(a.g6, static_cast<std::size_t>(s)), row);
            rows.push_back(row);
        }
        return rows;
    }
    for (double s : settings) {
        PipelineConfig cfg = base;
        if (parameter == "n")
            cfg.dyadic_level = static_cast<std::size_t>(s);
        else if (parameter == "ell")
            cfg.truncation_level = s;
        else if (parameter == "eps")
            cfg.mollify_eps = s;
        else
            throw std::invalid_argument("pipeline ladder: unknown parameter '" + parameter + "'");
        const Chain c = build_chain(curve, cfg, pool);
        const AtLambda a = run_at(c, curve, lambda, cfg, pool);
        LadderRow row{parameter, s};
        final_errors(pool, a, stage7_stepify(a.g6, cfg.step_count), row);
        rows.push_back(row);
    }
    return rows;
}

}  // namespace wcalc
