#include "wcalc/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>

#include "wcalc/approx_pipeline.hpp"
#include "wcalc/clark_ocone.hpp"
#include "wcalc/density_deriv.hpp"
#include "wcalc/density_functional.hpp"
#include "wcalc/functionals.hpp"
#include "wcalc/girsanov.hpp"
#include "wcalc/parallel.hpp"
#include "wcalc/quadrature.hpp"
#include "wcalc/rng.hpp"

namespace wcalc {

using nlohmann::json;

namespace {

using clk = std::chrono::steady_clock;

double seconds_since(clk::time_point t0) { return std::chrono::duration<double>(clk::now() - t0).count(); }

std::string num(double v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

Estimate plain_estimate(std::span<const double> v) {
    const double n = static_cast<double>(v.size());
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / n;
    double s2 = 0.0;
    for (double x : v) s2 += (x - m) * (x - m);
    return {m, std::sqrt(s2 / (n - 1.0) / n)};
}

// Density values on the pool, renormalized to unit weighted mean.
std::vector<double> density_on_pool(const PathDensity& d, const PathPool& pool) {
    std::vector<double> v(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) v[p] = d.value(pool.row(p));
    const std::vector<double> ones(pool.n_samples, 1.0);
    const double m = weighted_expectation(pool, ones, v);
    for (double& x : v) x /= m;
    return v;
}

double b_at(std::span<const double> row, std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i < k; ++i) s += row[i];
    return s;
}

// E[g(√T Z)] by 64-point Gauss–Hermite.
double gauss_expect(double T, const std::function<double(double)>& g) {
    const QuadratureRule& r = gauss_hermite_cached(64);
    double s = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i) s += r.weights[i] * g(std::sqrt(T) * r.nodes[i]);
    return s;
}

// Named densities that are functions of B_T, as functions of B_T.
std::optional<std::function<double(double)>> density_of_BT(const std::string& name, const TimeGrid& grid) {
    if (name != "one" && name != "tanh_b1" && name != "exp_b1") return std::nullopt;
    const PathDensity d = named_density(grid, name);
    const std::size_t n = grid.n_steps();
    return [d, n](double b) {
        std::vector<double> row(n, 0.0);
        row[n - 1] = b;
        return d.value(row);
    };
}

double phi1(const CylindricalFn& f, double x) { return f.phi.value(std::span<const double>(&x, 1)); }
double dphi1(const CylindricalFn& f, double x) {
    double g = 0.0;
    f.phi.grad(std::span<const double>(&x, 1), std::span<double>(&g, 1));
    return g;
}

std::optional<double> constant_process_value(const json& spec) {
    if (spec.value("type", "") == "constant") return spec["value"].get<double>();
    if (spec.value("type", "") == "table" && spec["values"].size() == 1)
        return spec.value("scale", 1.0) * spec["values"][0].get<double>();
    return std::nullopt;
}

// d/dλ f((L^λ Q)_{B_T}) in closed form where the curve allows it:
// exponential families with constant coefficients (B_T ~ N((b + λc)T, T))
// and mixtures of densities that are functions of B_T.
std::optional<double> chain_rule_closed_form(const CylindricalFn& f, const json& spec, const TimeGrid& grid,
                                             double lambda) {
    const double T = grid.horizon();
    const std::string kind = spec["kind"].get<std::string>();
    if (kind == "exponential-family") {
        const auto c = constant_process_value(spec["theta"]);
        const auto b = spec.contains("base") ? constant_process_value(spec["base"]) : std::optional<double>(0.0);
        if (!b || !c) return std::nullopt;
        const double m = (*b + lambda * *c) * T;
        const double inner = gauss_expect(T, [&](double z) { return phi1(f, m + z); });
        const double dinner = gauss_expect(T, [&](double z) { return dphi1(f, m + z); }) * *c * T;
        return f.h.df(inner) * dinner;
    }
    if (kind == "mixture") {
        const auto L0 = density_of_BT(spec["L0"].get<std::string>(), grid);
        const auto L1 = density_of_BT(spec["L1"].get<std::string>(), grid);
        if (!L0 || !L1) return std::nullopt;
        const double A0 = gauss_expect(T, [&](double z) { return phi1(f, z) * (*L0)(z); });
        const double A1 = gauss_expect(T, [&](double z) { return phi1(f, z) * (*L1)(z); });
        return f.h.df((1.0 - lambda) * A0 + lambda * A1) * (A1 - A0);
    }
    if (kind == "constant") return 0.0;
    return std::nullopt;
}

// Delta-method standard error of the representation side as an estimator
// of its population value. rhs = h'(I) J with I = mean(Lφ)/mean(L) and
// J = mean(φ̃ ∂_λ(L/mean L)), φ̃ = φ(ξ) - φ(0); both I and J are sample
// quantities, so h'(I) carries first-order noise whenever h is not affine.
double representation_delta_se(const CylindricalFn& f, const DensityCurve& curve, double lambda,
                               std::span<const double> xi, const PathPool& pool) {
    const std::size_t n = pool.n_samples;
    std::vector<double> L(n), dL(n), ph(n), pt(n);
    const double zero = 0.0;
    const double phi0 = f.phi.value(std::span<const double>(&zero, 1));
    for (std::size_t p = 0; p < n; ++p) {
        L[p] = curve.value(lambda, pool.row(p));
        dL[p] = curve.deriv(lambda, pool.row(p));
        ph[p] = phi1(f, xi[p]);
        pt[p] = ph[p] - phi0;
    }
    const auto mean = [n](const std::function<double(std::size_t)>& g) {
        double s = 0.0;
        for (std::size_t p = 0; p < n; ++p) s += g(p);
        return s / static_cast<double>(n);
    };
    const double m = mean([&](std::size_t p) { return L[p]; });
    const double md = mean([&](std::size_t p) { return dL[p]; });
    const double A = mean([&](std::size_t p) { return L[p] * ph[p]; });
    const double a = mean([&](std::size_t p) { return pt[p] * dL[p]; });
    const double b = mean([&](std::size_t p) { return pt[p] * L[p]; });
    const double I = A / m;
    const double J = a / m - md * b / (m * m);
    const double eps = 1e-5 * (1.0 + std::abs(I));
    const double h1 = f.h.df(I), h2 = (f.h.df(I + eps) - f.h.df(I - eps)) / (2.0 * eps);
    std::vector<double> infl(n);
    for (std::size_t p = 0; p < n; ++p) {
        const double dI = (L[p] * ph[p] - I * L[p]) / m;
        const double dJ = (pt[p] * dL[p] - a) / m - a * (L[p] - m) / (m * m) - (dL[p] - md) * b / (m * m) -
                          md * (pt[p] * L[p] - b) / (m * m) + 2.0 * md * b * (L[p] - m) / (m * m * m);
        infl[p] = h2 * J * dI + h1 * dJ;
    }
    return plain_estimate(infl).std_err;
}

std::vector<std::string> cylindrical_ids(const RunConfig& cfg) {
    std::vector<std::string> ids;
    const std::vector<std::string> all = cfg.functionals.empty()
                                             ? std::vector<std::string>{"mean", "mean_sq", "sin_mean"}
                                             : cfg.functionals;
    for (const auto& id : all)
        if (is_cylindrical_id(id)) ids.push_back(id);
    if (ids.empty()) throw ConfigError("this check needs at least one cylindrical functional");
    return ids;
}

std::vector<double> linspace(double a, double b, std::size_t n) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = n == 1 ? a : a + (b - a) * static_cast<double>(i) / (n - 1);
    return v;
}

std::size_t quarter_knot(const TimeGrid& grid, std::size_t q) {
    if (grid.n_steps() % 4 != 0) throw ConfigError("this check needs n_steps divisible by 4");
    return grid.n_steps() / 4 * q;
}

// Least-squares slope of log(err) against log(h).
double loglog_slope(const std::vector<double>& h, const std::vector<double>& err) {
    const std::size_t n = h.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(h[i]);
        my += std::log(err[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (std::log(h[i]) - mx) * (std::log(err[i]) - my);
        sxx += (std::log(h[i]) - mx) * (std::log(h[i]) - mx);
    }
    return sxy / sxx;
}

// Two-dimensional cylindrical instances for the multidimensional relation.
std::vector<CylindricalFn> cylindrical_2d() {
    FieldFn a;
    a.dim = 2;
    a.name = "sin(x1)+x2^2";
    a.value = [](std::span<const double> x) { return std::sin(x[0]) + x[1] * x[1]; };
    a.grad = [](std::span<const double> x, std::span<double> g) {
        g[0] = std::cos(x[0]);
        g[1] = 2.0 * x[1];
    };
    FieldFn b;
    b.dim = 2;
    b.name = "x1*x2+x1";
    b.value = [](std::span<const double> x) { return x[0] * x[1] + x[0]; };
    b.grad = [](std::span<const double> x, std::span<double> g) {
        g[0] = x[1] + 1.0;
        g[1] = x[0];
    };
    FieldFn c;
    c.dim = 2;
    c.name = "cos(x1)+x2^2/2";
    c.value = [](std::span<const double> x) { return std::cos(x[0]) + 0.5 * x[1] * x[1]; };
    c.grad = [](std::span<const double> x, std::span<double> g) {
        g[0] = -std::sin(x[0]);
        g[1] = x[1];
    };
    return {make_cylindrical(identity_fn(), a, "id(sin(x1)+x2^2)"), make_cylindrical(square_fn(), b, "sq(x1*x2+x1)"),
            make_cylindrical(sin_fn(), c, "sin(cos(x1)+x2^2/2)")};
}

}  // namespace

// ---------------------------------------------------------------- chain rule

BatteryResult run_chain_rule(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const std::vector<double> xi = brownian_at(pool, grid.horizon());
    if (cfg.curves.empty()) throw ConfigError("chain-rule needs at least one curve");

    struct Instance {
        std::string f_id;
        std::size_t curve;
        double lambda;
    };
    std::vector<DensityCurve> curves;
    std::vector<Instance> inst;
    const auto ids = cylindrical_ids(cfg);
    for (std::size_t c = 0; c < cfg.curves.size(); ++c) curves.push_back(build_curve(cfg.curves[c], grid));
    for (const auto& id : ids)
        for (std::size_t c = 0; c < curves.size(); ++c)
            for (double l : curve_lambdas(cfg.curves[c], curves[c], cfg.lambdas, cfg.h_step)) inst.push_back({id, c, l});

    std::vector<ChainRuleResult> res(inst.size());
    std::vector<double> secs(inst.size());
    parallel_for(inst.size(), [&](std::size_t i) {
        const auto t0 = clk::now();
        res[i] = chain_rule_check(builtin_cylindrical(inst[i].f_id), curves[inst[i].curve], inst[i].lambda, xi, pool,
                                  cfg.h_step);
        secs[i] = seconds_since(t0);
    });

    BatteryResult out;
    CsvTable tab{"chain_rule",
                 {"functional", "curve", "lambda", "lhs_fd", "rhs", "rhs_std_err", "paired_std_err", "closed_form", "delta_std_err",
                  "tolerance", "pass", "seconds"},
                 {}};
    const double h2 = cfg.h_step * cfg.h_step;
    double slowest = 0.0;
    for (std::size_t i = 0; i < inst.size(); ++i) {
        const auto& in = inst[i];
        const auto& r = res[i];
        const std::string tag = in.f_id + "/" + curves[in.curve].kind + "#" + std::to_string(in.curve) + "/lambda=" +
                                num(in.lambda);
        const double tol = cfg.tol.apply(cfg.tol.n_std_err * r.std_err + cfg.tol.fd_constant * h2);
        auto rec = make_record(tag + "/fd_vs_rhs", r.lhs, r.rhs, r.std_err, tol);
        out.records.push_back(rec);
        const auto exact = chain_rule_closed_form(builtin_cylindrical(in.f_id), cfg.curves[in.curve], grid, in.lambda);
        const double dse = exact ? representation_delta_se(builtin_cylindrical(in.f_id), curves[in.curve], in.lambda, xi, pool)
                                 : std::nan("");
        if (exact) {
            out.records.push_back(make_record(tag + "/rhs_vs_closed_form", r.rhs, *exact, dse,
                                              cfg.tol.apply(cfg.tol.n_std_err * dse)));
            const double se = dse + r.std_err;
            out.records.push_back(make_record(tag + "/fd_vs_closed_form", r.lhs, *exact, se,
                                              cfg.tol.apply(cfg.tol.n_std_err * se + cfg.tol.fd_constant * h2)));
        }
        slowest = std::max(slowest, secs[i]);
        tab.rows.push_back({in.f_id, curves[in.curve].descriptor, fmt_double(in.lambda), fmt_double(r.lhs),
                            fmt_double(r.rhs), fmt_double(r.rhs_std_err), fmt_double(r.std_err),
                            exact ? fmt_double(*exact) : "", exact ? fmt_double(dse) : "", fmt_double(tol), rec.pass ? "1" : "0",
                            fmt_double(secs[i])});
    }
    out.records.push_back(make_record("runtime/slowest_instance_s", slowest, 0.0, 0.0, 30.0,
                                      "per-instance budget 30 s"));
    out.tables.push_back(std::move(tab));
    out.summary["n_instances"] = inst.size();
    return out;
}

// --------------------------------------------------------------- second order

BatteryResult run_second_order(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const double T = grid.horizon();
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const std::string dens_name = cfg.options.value("density", std::string("exp_b1"));
    const std::vector<double> dens = density_on_pool(named_density(grid, dens_name), pool);
    const std::vector<double> xi = brownian_at(pool, T);
    const EmpiricalLaw law = pushforward_law(pool, dens, xi);
    const std::vector<double> x_grid = cfg.option_list("x_grid", linspace(-2.0, 3.0, 11));
    const std::vector<double> ladder = cfg.option_list("h_ladder", {1e-1, 1e-2, 1e-3});
    const std::vector<double> slope_range = cfg.option_list("slope_range", {1.8, 2.2});

    BatteryResult out;
    CsvTable tab{"second_order_1d", {"functional", "h_step", "x", "d1F", "dx_d1F_fd", "lions", "abs_err"}, {}};
    for (const auto& id : cylindrical_ids(cfg)) {
        const CylindricalFn f = builtin_cylindrical(id);
        std::vector<double> errs;
        for (double h : ladder) {
            const SecondOrderResult r = second_order_check_1d(f, law, x_grid, h);
            errs.push_back(r.max_err);
            out.records.push_back(make_record("1d/" + id + "/h=" + num(h), r.max_err, 0.0, 0.0,
                                              cfg.tol.apply(cfg.tol.fd_constant * h * h + 1e-9)));
            for (const auto& row : r.rows)
                tab.add(id, {h, row.x[0], row.d1F[0], row.fd[0], row.lions[0], row.abs_err});
        }
        // The slope is only defined when the difference quotient has a
        // resolvable truncation error.
        if (std::all_of(errs.begin(), errs.end(), [](double e) { return e > 1e-13; }) && errs.front() > 1e-8) {
            const double slope = loglog_slope(ladder, errs);
            out.records.push_back(make_record("1d/" + id + "/loglog_slope", slope,
                                              0.5 * (slope_range[0] + slope_range[1]), 0.0,
                                              0.5 * (slope_range[1] - slope_range[0])));
        }
    }

    // Closed forms at the law of B_T under the density.
    if (const auto L = density_of_BT(dens_name, grid)) {
        const double mean = gauss_expect(T, [&](double z) { return z * (*L)(z); });
        std::vector<double> g(xi.begin(), xi.end());
        const double se = weighted_std_error(pool, dens, g);
        const CylindricalFn msq = builtin_cylindrical("mean_sq");
        out.records.push_back(make_record("closed_form/mean_sq_lions", LionsDerivativeAt(msq, law).scalar(0.0),
                                          2.0 * mean, 2.0 * se, cfg.tol.apply(cfg.tol.n_std_err * 2.0 * se)));
        const double zero = 0.0;
        const D1FProfile prof = d1F_formula(builtin_cylindrical("mean"), law, std::span<const double>(&zero, 1));
        out.records.push_back(make_record("closed_form/mean_d1F_at_0", prof.values[0], -mean, se,
                                          cfg.tol.apply(cfg.tol.n_std_err * se)));
    }

    // Two dimensions: ξ = (B_{T/2}, B_T).
    const std::size_t half = grid.knot_index(0.5 * T);
    std::vector<double> xi2(2 * pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        xi2[2 * p] = b_at(pool.row(p), half);
        xi2[2 * p + 1] = xi[p];
    }
    const EmpiricalLaw law2 = pushforward_law(pool, dens, xi2, 2);
    std::vector<double> pts;
    for (double a : {-1.0, 0.0, 1.0})
        for (double b : {-1.0, 0.0, 1.0}) {
            pts.push_back(a);
            pts.push_back(b);
        }
    CsvTable tab2{"second_order_2d", {"functional", "h_step", "x1", "x2", "fd1", "fd2", "lions1", "lions2", "abs_err"}, {}};
    const auto fns = cylindrical_2d();
    for (const auto& f : fns) {
        for (double h : ladder) {
            const SecondOrderResult r = second_order_check_multidim(f, law2, pts, h);
            out.records.push_back(make_record("2d/" + f.descriptor + "/h=" + num(h), r.max_err, 0.0, 0.0,
                                              cfg.tol.apply(cfg.tol.fd_constant * h * h + 1e-9)));
            for (const auto& row : r.rows)
                tab2.add(f.descriptor, {h, row.x[0], row.x[1], row.fd[0], row.fd[1], row.lions[0], row.lions[1],
                                        row.abs_err});
        }
    }

    // Stochastic-integral representation against the directional difference
    // along γ^λ = λ θ, θ = 1 on [0, T/2) and -1/2 after.
    {
        const std::size_t n_md = std::min<std::size_t>(cfg.n_paths, static_cast<std::size_t>(cfg.option("multidim_paths", 20000)));
        const PathPool mpool = sample_paths(grid, n_md, derive_seed(cfg.seed, stream::instances));
        std::vector<double> table(grid.n_steps());
        for (std::size_t i = 0; i < table.size(); ++i) table[i] = i < half ? 1.0 : -0.5;
        const CurveFamily fam = linear_family(constant_process(grid, 0.0), table_process(grid, 1.0, table), -1.0, 2.0);
        const TimeGrid blocks(std::vector<double>{0.0, 0.5 * T, T});
        const double var = 0.5 * T * (1.0 + 0.25);
        const auto make_L = [blocks, var](double lam) {
            return make_smooth_functional(
                blocks,
                [lam, var](std::span<const double> x) { return std::exp(lam * (x[0] - 0.5 * x[1]) - 0.5 * lam * lam * var); },
                [lam, var](std::span<const double> x, std::span<double> g) {
                    const double v = std::exp(lam * (x[0] - 0.5 * x[1]) - 0.5 * lam * lam * var);
                    g[0] = lam * v;
                    g[1] = -0.5 * lam * v;
                },
                "exp(lam*(x1-x2/2))");
        };
        const std::vector<SmoothFunctional> xis{
            make_smooth_functional(
                blocks, [](std::span<const double> x) { return x[0]; },
                [](std::span<const double>, std::span<double> g) {
                    g[0] = 1.0;
                    g[1] = 0.0;
                },
                "B_half"),
            make_smooth_functional(
                blocks, [](std::span<const double> x) { return x[0] + x[1]; },
                [](std::span<const double>, std::span<double> g) {
                    g[0] = 1.0;
                    g[1] = 1.0;
                },
                "B_T")};
        const double lam = cfg.lambdas.empty() ? 0.3 : cfg.lambdas.front();
        const DirectionalCheck d =
            multidim_directional_check(fns.front(), fam, lam, make_L, xis, mpool, cfg.h_step,
                                       static_cast<std::size_t>(cfg.option("quad_order", 16)));
        out.records.push_back(make_record("2d/representation_vs_directional_fd", d.fd, d.repr, d.std_err,
                                          cfg.tol.apply(cfg.tol.n_std_err * d.std_err +
                                                        cfg.tol.fd_constant * d.h_step * d.h_step)));
        out.summary["directional"] = {{"fd", d.fd}, {"repr", d.repr}, {"std_err", d.std_err}, {"paths", n_md}};
    }
    out.tables.push_back(std::move(tab));
    out.tables.push_back(std::move(tab2));
    return out;
}

// ------------------------------------------------------------------ girsanov

BatteryResult run_girsanov(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const double T = grid.horizon();
    const std::size_t n = grid.n_steps();
    const std::size_t q1 = quarter_knot(grid, 1), q2 = quarter_knot(grid, 2), q3 = quarter_knot(grid, 3);
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);

    struct Pair {
        std::string name;
        StepProcess gamma;
        PathFunctional phi;
        std::optional<double> exact;
    };
    std::vector<double> alt(n);
    for (std::size_t i = 0; i < n; ++i) alt[i] = i % 2 == 0 ? 0.8 : -0.4;
    const auto BT = [n](std::span<const double> r) { return b_at(r, n); };
    const std::vector<Pair> pairs{
        {"const0.5/B_T", constant_process(grid, 0.5), BT, 0.5 * T},
        {"const0.5/B_T^2", constant_process(grid, 0.5), [=](auto r) { return BT(r) * BT(r); }, T + 0.25 * T * T},
        {"const-0.7/cos(B_T)", constant_process(grid, -0.7), [=](auto r) { return std::cos(BT(r)); },
         std::cos(0.7 * T) * std::exp(-0.5 * T)},
        {"table/B_half*B_T", table_process(grid, 1.0, alt), [=](auto r) { return b_at(r, q2) * BT(r); }, std::nullopt},
        {"tanh_last/B_T", smooth_process(grid, "tanh_last", 1.0), BT, std::nullopt},
        {"tanh_last2/exp(-B_T^2/2)", smooth_process(grid, "tanh_last", 1.5, 2),
         [=](auto r) { return std::exp(-0.5 * BT(r) * BT(r)); }, std::nullopt},
        {"sin_last/cos(B_half)+B_T", smooth_process(grid, "sin_last", 1.0),
         [=](auto r) { return std::cos(b_at(r, q2)) + BT(r); }, std::nullopt},
        {"tanh_level/B_T^2", smooth_process(grid, "tanh_level", 1.0), [=](auto r) { return BT(r) * BT(r); },
         std::nullopt},
        {"tanh_level0.8/sin(B_q1)*B_q3", smooth_process(grid, "tanh_level", 0.8),
         [=](auto r) { return std::sin(b_at(r, q1)) * b_at(r, q3); }, std::nullopt},
        {"combined/B_half^2-B_T", combine_processes(constant_process(grid, 0.3), smooth_process(grid, "tanh_last", 1.0), 0.5),
         [=](auto r) { return b_at(r, q2) * b_at(r, q2) - BT(r); }, std::nullopt},
    };

    BatteryResult out;
    CsvTable tab{"girsanov", {"pair", "lhs", "rhs", "std_err", "tolerance", "flow_inversion_err"}, {}};
    CsvTable mart{"girsanov_martingale", {"process", "knot", "mean", "std_err"}, {}};
    std::vector<GirsanovResult> gres(pairs.size());
    std::vector<double> inv_err(pairs.size());
    parallel_for(pairs.size(), [&](std::size_t i) { gres[i] = girsanov_check(pool, pairs[i].gamma, pairs[i].phi); });
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const PathPool back = shift_backward(shift_forward(pool, pairs[i].gamma, T), pairs[i].gamma, T);
        double e = 0.0;
        for (std::size_t k = 0; k < pool.increments.size(); ++k)
            e = std::max(e, std::abs(back.increments[k] - pool.increments[k]));
        inv_err[i] = e;
    }
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& pr = pairs[i];
        const auto& g = gres[i];
        const double tol = cfg.tol.apply(cfg.tol.n_std_err * g.std_err);
        out.records.push_back(make_record("identity/" + pr.name, g.lhs, g.rhs, g.std_err, tol));
        out.records.push_back(make_record("flow_inversion/" + pr.name, inv_err[i], 0.0, 0.0, cfg.tol.apply(1e-10)));
        tab.add(pr.name, {g.lhs, g.rhs, g.std_err, tol, inv_err[i]});
        if (pr.exact) {
            const std::vector<double> E = doleans_exponential(pool, pr.gamma, T);
            std::vector<double> phi(pool.n_samples);
            for (std::size_t p = 0; p < pool.n_samples; ++p) phi[p] = pr.phi(pool.row(p));
            const double se_l = weighted_std_error(pool, E, phi);
            out.records.push_back(make_record("closed_form_lhs/" + pr.name, g.lhs, *pr.exact, se_l,
                                              cfg.tol.apply(cfg.tol.n_std_err * se_l)));
            const PathPool shifted = shift_forward(pool, pr.gamma, T);
            for (std::size_t p = 0; p < pool.n_samples; ++p) phi[p] = pr.phi(shifted.row(p));
            const Estimate r = plain_estimate(phi);
            out.records.push_back(make_record("closed_form_rhs/" + pr.name, g.rhs, *pr.exact, r.std_err,
                                              cfg.tol.apply(cfg.tol.n_std_err * r.std_err)));
        }
    }

    // Martingale property at every knot, battery processes and random
    // bounded tables.
    std::vector<std::pair<std::string, StepProcess>> procs;
    for (std::size_t i = 0; i < pairs.size(); ++i)
        if (i == 0 || pairs[i].gamma.descriptor != pairs[i - 1].gamma.descriptor ||
            pairs[i].name.substr(0, pairs[i].name.find('/')) != pairs[i - 1].name.substr(0, pairs[i - 1].name.find('/')))
            procs.emplace_back(pairs[i].name.substr(0, pairs[i].name.find('/')), pairs[i].gamma);
    Rng rng(cfg.seed, stream::instances);
    const std::size_t n_random = static_cast<std::size_t>(cfg.option("n_random_processes", 20));
    for (std::size_t r = 0; r < n_random; ++r) {
        std::vector<double> t(n);
        for (double& v : t) v = rng.uniform(-2.0, 2.0);
        procs.emplace_back("random_table" + std::to_string(r), table_process(grid, 1.0, t));
    }
    for (const auto& [name, proc] : procs) {
        for (std::size_t k = 1; k <= n; ++k) {
            const std::vector<double> E = doleans_exponential(pool, proc, grid.knot(k));
            const Estimate e = plain_estimate(E);
            out.records.push_back(make_record("martingale/" + name + "/t=" + num(grid.knot(k)), e.value, 1.0, e.std_err,
                                              cfg.tol.apply(cfg.tol.n_std_err * e.std_err)));
            mart.add(name, {grid.knot(k), e.value, e.std_err});
        }
    }

    // Relative exponentials.
    {
        const double s = 0.4, sp = -0.3;
        const auto a = constant_process(grid, s), b = constant_process(grid, sp);
        const std::vector<double> rel = relative_exponential(pool, a, b, T);
        double err = 0.0;
        for (std::size_t p = 0; p < pool.n_samples; ++p) {
            const double B = b_at(pool.row(p), n);
            const double exact = std::exp((sp - s) * B - 0.5 * (sp * sp - s * s) * T);
            err = std::max(err, std::abs(rel[p] - exact) / exact);
        }
        out.records.push_back(make_record("relative_exponential/constants_closed_form", err, 0.0, 0.0,
                                          cfg.tol.apply(1e-12)));
        const auto g1 = smooth_process(grid, "tanh_last", 1.0), g2 = smooth_process(grid, "sin_last", 0.7);
        const std::vector<double> E1 = doleans_exponential(pool, g1, T);
        const std::vector<double> r12 = relative_exponential(pool, g1, g2, T);
        const double m = weighted_expectation(pool, E1, r12), se = weighted_std_error(pool, E1, r12);
        out.records.push_back(make_record("relative_exponential/mean_under_Q_lambda", m, 1.0, se,
                                          cfg.tol.apply(cfg.tol.n_std_err * se)));
    }
    out.tables.push_back(std::move(tab));
    out.tables.push_back(std::move(mart));
    return out;
}

// --------------------------------------------------------------- Clark–Ocone

BatteryResult run_clark_ocone(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const double T = grid.horizon();
    const std::size_t n = grid.n_steps();
    const TimeGrid one_block(std::vector<double>{0.0, T});
    ClarkOconeOptions opt;
    opt.quad_order = static_cast<std::size_t>(cfg.option("quad_order", 32));
    opt.seed = derive_seed(cfg.seed, stream::inner_mc);
    BatteryResult out;

    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const double sigma = cfg.option("sigma", 0.7);
    const SmoothFunctional Lexp = make_smooth_functional(
        one_block, [=](std::span<const double> x) { return std::exp(sigma * x[0] - 0.5 * sigma * sigma * T); },
        [=](std::span<const double> x, std::span<double> g) { g[0] = sigma * std::exp(sigma * x[0] - 0.5 * sigma * sigma * T); },
        "exp(sigma*B_T)");
    {
        const ClarkOconeResult r = clark_ocone_decompose(Lexp, pool, opt);
        double err = 0.0;
        for (double g : r.gamma) err = std::max(err, std::abs(g - sigma));
        out.records.push_back(make_record("exponential/gamma_equals_sigma", err, 0.0, 0.0, cfg.tol.apply(1e-8)));
        double terminal = 0.0;
        for (std::size_t p = 0; p < pool.n_samples; ++p) {
            const double L = Lexp.value(std::vector<double>{b_at(pool.row(p), n)});
            terminal = std::max(terminal, std::abs(r.M[p * (n + 1) + n] - L) / L);
        }
        out.records.push_back(make_record("exponential/terminal_M_equals_L", terminal, 0.0, 0.0, cfg.tol.apply(1e-12)));
    }
    {
        const SmoothFunctional one = make_smooth_functional(
            one_block, [](std::span<const double>) { return 1.0; },
            [](std::span<const double>, std::span<double> g) { g[0] = 0.0; }, "one");
        const ClarkOconeResult r = clark_ocone_decompose(one, pool, opt);
        double z = 0.0, m = 0.0;
        for (double v : r.Z) z = std::max(z, std::abs(v));
        for (double v : r.M) m = std::max(m, std::abs(v - 1.0));
        out.records.push_back(make_record("constant/Z_zero", z, 0.0, 0.0, cfg.tol.apply(0.0)));
        out.records.push_back(make_record("constant/M_one", m, 0.0, 0.0, cfg.tol.apply(1e-15)));
    }

    const SmoothFunctional Ltanh = make_smooth_functional(
        one_block, [](std::span<const double> x) { return 1.0 + 0.5 * std::tanh(x[0]); },
        [](std::span<const double> x, std::span<double> g) {
            const double t = std::tanh(x[0]);
            g[0] = 0.5 * (1.0 - t * t);
        },
        "1+tanh(B_T)/2");
    {
        const ClarkOconeResult r = clark_ocone_decompose(Ltanh, pool, opt);
        CsvTable tab{"clark_ocone_martingale", {"knot", "mean_M", "std_err"}, {}};
        std::vector<double> col(pool.n_samples);
        for (std::size_t k = 0; k <= n; ++k) {
            for (std::size_t p = 0; p < pool.n_samples; ++p) col[p] = r.M[p * (n + 1) + k];
            const Estimate e = plain_estimate(col);
            // M_0 is deterministic: compare it with the quadrature value of E[L].
            const double se = k == 0 ? 0.0 : e.std_err;
            const double tol = k == 0 ? 1e-12 : cfg.tol.n_std_err * se;
            out.records.push_back(make_record("tanh/mean_M/t=" + num(grid.knot(k)), e.value, 1.0, se, cfg.tol.apply(tol)));
            tab.add({grid.knot(k), e.value, se});
        }
        out.tables.push_back(std::move(tab));

        // Predictability: scrambling the increments after knot k leaves
        // everything at or before k unchanged.
        const std::size_t k = n / 2;
        const std::size_t m = std::min<std::size_t>(pool.n_samples, 256);
        PathPool head;
        head.grid = grid;
        head.n_samples = m;
        head.increments.assign(pool.increments.begin(), pool.increments.begin() + m * n);
        head.weights.assign(m, 1.0);
        PathPool scrambled = head;
        Rng rng(cfg.seed, stream::instances);
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t i = k; i < n; ++i) scrambled.increments[p * n + i] = std::sqrt(grid.dt(i)) * rng.normal();
        const ClarkOconeResult a = clark_ocone_decompose(Ltanh, head, opt);
        const ClarkOconeResult b = clark_ocone_decompose(Ltanh, scrambled, opt);
        double diff = 0.0;
        for (std::size_t p = 0; p < m; ++p)
            for (std::size_t i = 0; i <= k; ++i) {
                if (i < n) diff = std::max(diff, std::abs(a.Z[p * n + i] - b.Z[p * n + i]));
                diff = std::max(diff, std::abs(a.M[p * (n + 1) + i] - b.M[p * (n + 1) + i]));
            }
        out.records.push_back(make_record("tanh/predictable_under_future_scramble", diff, 0.0, 0.0, cfg.tol.apply(0.0)));
    }

    // Reconstruction defect on the dyadic refinement ladder.
    std::vector<double> ladder;
    for (double v : cfg.option_list("refinement", {4, 8, 16, 32})) ladder.push_back(v);
    const std::vector<double> ratio_range = cfg.option_list("ratio_range", {1.2, 1.8});
    CsvTable rt{"clark_ocone_refinement", {"n_steps", "defect_tanh", "defect_exponential"}, {}};
    std::vector<double> defects;
    for (std::size_t j = 0; j < ladder.size(); ++j) {
        const TimeGrid g = make_grid(static_cast<std::size_t>(ladder[j]), T);
        const PathPool pj = sample_paths(g, cfg.n_paths, derive_seed(cfg.seed, 100 + j));
        const ClarkOconeResult r = clark_ocone_decompose(Ltanh, pj, opt);
        const ClarkOconeResult re = clark_ocone_decompose(Lexp, pj, opt);
        std::vector<double> L(pj.n_samples), Le(pj.n_samples);
        for (std::size_t p = 0; p < pj.n_samples; ++p) {
            const std::vector<double> x{b_at(pj.row(p), g.n_steps())};
            L[p] = Ltanh.value(x);
            Le[p] = Lexp.value(x);
        }
        defects.push_back(reconstruction_error(L, r.Z, pj));
        rt.add({ladder[j], defects.back(), reconstruction_error(Le, re.Z, pj)});
    }
    for (std::size_t j = 0; j + 1 < defects.size(); ++j) {
        const double ratio = defects[j] / defects[j + 1];
        out.records.push_back(make_record("tanh/defect_ratio/n=" + num(ladder[j]) + "->" + num(ladder[j + 1]), ratio,
                                          0.5 * (ratio_range[0] + ratio_range[1]), 0.0,
                                          0.5 * (ratio_range[1] - ratio_range[0])));
    }
    out.tables.push_back(std::move(rt));
    return out;
}

// ----------------------------------------------------------------- nested functionals

BatteryResult run_nested_link(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const double T = grid.horizon();
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const std::size_t half = grid.knot_index(0.5 * T);
    const std::vector<double> dens =
        density_on_pool(named_density(grid, cfg.options.value("density", std::string("tanh_b1"))), pool);
    std::vector<double> b_half(pool.n_samples), b_T = brownian_at(pool, T), b_tail(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        b_half[p] = b_at(pool.row(p), half);
        b_tail[p] = b_T[p] - b_half[p];
    }
    const std::vector<double> probes = cfg.option_list("probes", {-1.0, -1.0, 0.0, 0.0, 1.0, 0.5, 0.5, 1.5});
    if (probes.size() % 2 != 0) throw ConfigError("lemma34 probes must be (x1, x2) pairs");
    std::vector<double> x1, x2;
    for (std::size_t j = 0; j < probes.size(); j += 2) {
        x1.push_back(probes[j]);
        x2.push_back(probes[j + 1]);
    }
    NestedLinkOptions lo;
    lo.alpha = cfg.option("alpha", lo.alpha);
    lo.s_step = cfg.option("s_step", lo.s_step);
    lo.bump_radius = cfg.option("bump_radius", lo.bump_radius);
    const std::vector<double> bws = cfg.option_list("bandwidth_ladder", {0.4, 0.2, 0.1});
    const double K = cfg.tol.kernel_constant > 0.0 ? cfg.tol.kernel_constant : nested_kernel_constant;

    std::vector<std::string> ids;
    for (const auto& id : cfg.functionals)
        if (is_nested_id(id)) ids.push_back(id);
    if (ids.empty()) ids.push_back("nested_gauss");

    BatteryResult out;
    CsvTable tab{"nested_link",
                 {"instance", "bandwidth", "x1", "x2", "fd", "repr", "abs_err", "repr_std_err", "tolerance"},
                 {}};
    for (const auto& id : ids) {
        const NestedFn fn = builtin_nested(id);
        for (int inst = 0; inst < 2; ++inst) {
            const std::string name = id + (inst == 0 ? "/correlated" : "/independent");
            const std::vector<double>& xi2 = inst == 0 ? b_T : b_tail;
            double prev_tol = INFINITY;
            for (double bw : bws) {
                KernelOptions ko;
                ko.bandwidth = bw;
                const NestedLinkResult r = nested_link(fn, pool, dens, b_half, xi2, x1, x2, ko, lo);
                const double tol =
                    cfg.tol.apply(cfg.tol.n_std_err * r.repr_std_err + K * bw * bw + cfg.tol.fd_constant * lo.s_step * lo.s_step);
                for (std::size_t j = 0; j < r.rows.size(); ++j) {
                    const auto& row = r.rows[j];
                    out.records.push_back(make_record(name + "/bw=" + num(bw) + "/probe=(" + num(row.x1) + "," +
                                                          num(row.x2) + ")",
                                                      row.fd, row.repr, r.repr_std_err, tol));
                    tab.add(name, {bw, row.x1, row.x2, row.fd, row.repr, row.abs_err, r.repr_std_err, tol});
                }
                if (std::isfinite(prev_tol))
                    out.records.push_back(make_record(name + "/bw=" + num(bw) + "/tolerance_decreases",
                                                      std::max(tol - prev_tol, 0.0), 0.0, 0.0, 0.0,
                                                      "increase over the previous rung"));
                prev_tol = tol;
            }
        }
    }
    out.tables.push_back(std::move(tab));
    out.summary["kernel_constant"] = K;
    return out;
}

// ---------------------------------------------------------------- Bensoussan

namespace {

// Sup-norm bounds used in the kernel-bias term: Lip(Ψ'), sup|Ψ'|-free
// bounds of ρ and its first three derivatives.
struct PhiBounds {
    double psi_lip;
    double rho0, rho1, rho2, rho3;
};

PhiBounds phi_bounds(const std::string& id) {
    if (id == "sin_id") return {0.0, 1.0, 1.0, 1.0, 1.0};
    if (id == "lin_sq") return {2.0, 0.0, 1.0, 0.0, 0.0};  // ρ'' ≡ 0: no bias, ρ0 unused
    if (id == "cos_sq" || id == "sin_sq") return {2.0, 1.0, 1.0, 1.0, 1.0};
    throw ConfigError("no derivative bounds for density functional '" + id + "'");
}

// Window truncation and renormalization of the grid KDE.
constexpr double kde_window_term = 1e-5;

}  // namespace

BatteryResult run_bensoussan(const RunConfig& cfg) {
    const TimeGrid grid = cfg.grid();
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const std::vector<double> dens =
        density_on_pool(named_density(grid, cfg.options.value("density", std::string("one"))), pool);
    const std::vector<double> xi = brownian_at(pool, grid.horizon());
    const std::vector<double> probes = cfg.option_list("probes", linspace(-2.0, 2.0, 9));
    const std::vector<double> bws = cfg.option_list("bandwidth_ladder", {0.4, 0.2, 0.1});
    const double fd = cfg.option("fd_step", 1e-4);
    std::vector<std::string> ids;
    if (cfg.options.contains("density_functionals"))
        for (const auto& s : cfg.options["density_functionals"]) ids.push_back(s.get<std::string>());
    else
        ids = {"sin_id", "lin_sq", "cos_sq", "sin_sq"};

    BatteryResult out;
    CsvTable tab{"bensoussan",
                 {"functional", "bandwidth", "x", "dx_dPhi", "lions", "d1F_density", "d1F_measure", "err_first",
                  "err_second"},
                 {}};
    for (const auto& id : ids) {
        const DensityFunctionalPhi Phi = builtin_density_functional(id);
        const PhiBounds B = phi_bounds(id);
        const EmpiricalLaw law = pushforward_law(pool, dens, xi);
        double prev_tol = INFINITY;
        for (double bw : bws) {
            const BensoussanResult r = bensoussan_check(Phi, pool, dens, xi, probes, bw, fd);
            const double bias = B.psi_lip * B.rho2 * 0.5 * bw * bw;
            const double a = Phi.inner(kde_density(law, bw));
            const double fd_term = std::abs(Phi.Psi.df(a)) * B.rho3 * fd * fd / 6.0;
            const double tol1 = cfg.tol.apply(bias * B.rho1 + fd_term + kde_window_term);
            const double tol2 = cfg.tol.apply(bias * 2.0 * B.rho0 + kde_window_term + 1e-8);
            out.records.push_back(make_record(id + "/bw=" + num(bw) + "/dx_DPhi_vs_lions", r.max_err_first, 0.0, 0.0, tol1,
                                              "tolerance = KDE bias bound + FD + window"));
            out.records.push_back(make_record(id + "/bw=" + num(bw) + "/centered_DPhi_vs_d1F", r.max_err_second, 0.0, 0.0,
                                              tol2, "tolerance = KDE bias bound + window + quadrature"));
            if (std::isfinite(prev_tol))
                out.records.push_back(make_record(id + "/bw=" + num(bw) + "/tolerance_non_increasing",
                                                  std::max(tol1 + tol2 - prev_tol, 0.0), 0.0, 0.0, 0.0,
                                                  "increase over the previous rung"));
            prev_tol = tol1 + tol2;
            for (const auto& row : r.rows)
                tab.add(id, {bw, row.x, row.dx_dPhi, row.lions, row.d1F_density, row.d1F_measure, row.err_first,
                             row.err_second});
        }
    }
    out.tables.push_back(std::move(tab));
    return out;
}

// ------------------------------------------------------------------ pipeline

BatteryResult run_pipeline(const RunConfig& cfg) {
    if (cfg.curves.empty()) throw ConfigError("pipeline needs a curve");
    const auto t0 = clk::now();
    const TimeGrid grid = cfg.grid();
    const PathPool pool = sample_paths(grid, cfg.n_paths, cfg.seed);
    const json& pj = cfg.pipeline;
    const DensityCurve curve = build_curve(cfg.curves[0], grid);
    PipelineConfig pc;
    pc.dyadic_level = pj.value("dyadic_level", pc.dyadic_level);
    pc.truncation_level = pj.value("truncation_level", pc.truncation_level);
    pc.mollify_eps = pj.value("mollify_eps", pc.mollify_eps);
    pc.positivity_floor = pj.value("positivity_floor", pc.positivity_floor);
    pc.step_count = pj.value("step_count", pc.step_count);
    pc.inner_mc = pj.value("inner_mc", pc.inner_mc);
    pc.quad_order = pj.value("quad_order", pc.quad_order);
    pc.mollifier_nodes = pj.value("mollifier_nodes", pc.mollifier_nodes);
    pc.seed = cfg.seed;
    const double lam = pj.value("lambda", 0.3), lam_p = pj.value("lambda_prime", 0.5);
    const double thr_v = pj.contains("thresholds") ? pj["thresholds"].value("value", pipeline_value_threshold)
                                                   : pipeline_value_threshold;
    const double thr_d = pj.contains("thresholds") ? pj["thresholds"].value("deriv", pipeline_deriv_threshold)
                                                   : pipeline_deriv_threshold;
    const PipelineReport rep = pipeline_run(curve, lam, lam_p, pc, pool, pj.value("gamma_rows", std::size_t{64}));

    BatteryResult out;
    out.records.push_back(make_record("final/value_l2_error", rep.final_value_error, 0.0, rep.final_value_se,
                                      cfg.tol.apply(thr_v), "frozen threshold"));
    out.records.push_back(make_record("final/deriv_l2_error", rep.final_deriv_error, 0.0, rep.final_deriv_se,
                                      cfg.tol.apply(thr_d), "frozen threshold"));
    out.records.push_back(make_record("stage7/exponential_mean", rep.exponential_mean, 1.0, rep.exponential_mean_se,
                                      cfg.tol.apply(cfg.tol.n_std_err * rep.exponential_mean_se)));
    out.records.push_back(make_record("stage5/min_density_positive", std::min(rep.min_density, 0.0), 0.0, 0.0,
                                      cfg.tol.apply(0.0)));
    if (curve.kind == "exponential-family") {
        const auto c = constant_process_value(cfg.curves[0]["theta"]);
        const auto b = cfg.curves[0].contains("base") ? constant_process_value(cfg.curves[0]["base"])
                                                      : std::optional<double>(0.0);
        if (b && c) {
            const double target = *b + lam * *c;
            double worst = 0.0;
            for (double g : rep.gamma_mean) worst = std::max(worst, std::abs(g - target));
            out.records.push_back(make_record("stage6/gamma_mean_vs_constant_coefficient", target + worst, target, 0.0,
                                              cfg.tol.apply(thr_v), "largest per-step deviation"));
        }
    }

    CsvTable st{"pipeline_stages",
                {"stage", "l2_error_value", "se_value", "l2_error_deriv", "se_deriv", "segment_error_value",
                 "segment_error_deriv"},
                {}};
    for (const auto& s : rep.stages)
        st.add({static_cast<double>(s.stage), s.l2_error_value, s.se_value, s.l2_error_deriv, s.se_deriv,
                s.along_segment_error, s.along_segment_error_deriv});

    CsvTable lt{"pipeline_ladder",
                {"parameter", "setting", "err_value", "se_value", "err_deriv", "se_deriv", "err_value_stage5",
                 "se_value_stage5"},
                {}};
    const json ladders = pj.value("ladders", json::object());
    const std::vector<std::pair<std::string, std::vector<double>>> defaults{
        {"n", {0, 1, 2}}, {"ell", {3, 4, 6}}, {"eps", {0.5, 0.25, 0.125}}, {"k", {2, 4, 8}}};
    for (const auto& [param, def] : defaults) {
        std::vector<double> settings = def;
        if (ladders.contains(param)) {
            settings.clear();
            for (const auto& v : ladders[param]) settings.push_back(v.get<double>());
        }
        if (settings.empty()) continue;
        const auto rows = pipeline_ladder(curve, lam, pc, pool, param, settings);
        for (const auto& r : rows) lt.add(param, {r.setting, r.err_value, r.se_value, r.err_deriv, r.se_deriv, r.err_value_stage5,
                                                  r.se_value_stage5});
        for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
            const auto& a = rows[i];
            const auto& b = rows[i + 1];
            const std::string tag = "ladder/" + param + "/" + num(a.setting) + "->" + num(b.setting);
            const double sv = std::max(a.se_value, b.se_value), sd = std::max(a.se_deriv, b.se_deriv);
            out.records.push_back(make_record(tag + "/value_non_increasing", std::max(b.err_value - a.err_value, 0.0), 0.0,
                                              sv, cfg.tol.apply(sv), "increase allowed up to 1 std_err"));
            out.records.push_back(make_record(tag + "/deriv_non_increasing", std::max(b.err_deriv - a.err_deriv, 0.0), 0.0,
                                              sd, cfg.tol.apply(sd), "increase allowed up to 1 std_err"));
            // Stepping refines toward the stage-5 density, not toward the curve itself.
            if (param == "k") {
                const double s5 = std::max(a.se_value_stage5, b.se_value_stage5);
                out.records.push_back(make_record(tag + "/stage5_distance_non_increasing",
                                                  std::max(b.err_value_stage5 - a.err_value_stage5, 0.0), 0.0, s5,
                                                  cfg.tol.apply(s5), "increase allowed up to 1 std_err"));
            }
        }
    }

    CsvTable gt{"pipeline_gamma", {"path"}, {}};
    const std::size_t n = grid.n_steps();
    for (std::size_t i = 0; i < n; ++i) gt.header.push_back("gamma_" + std::to_string(i));
    for (std::size_t r = 0; r < rep.gamma_row_count; ++r) {
        std::vector<double> row{static_cast<double>(r)};
        row.insert(row.end(), rep.gamma_rows.begin() + r * n, rep.gamma_rows.begin() + (r + 1) * n);
        gt.add(row);
    }

    const double secs = seconds_since(t0);
    out.records.push_back(make_record("runtime/pipeline_and_ladders_s", secs, 0.0, 0.0, pipeline_runtime_budget_s,
                                      "budget 5 min"));
    out.summary["final"] = {{"value_error", rep.final_value_error},   {"value_se", rep.final_value_se},
                            {"deriv_error", rep.final_deriv_error},   {"deriv_se", rep.final_deriv_se},
                            {"segment_value", rep.segment_value_error}, {"segment_deriv", rep.segment_deriv_error}};
    out.summary["gamma_mean"] = rep.gamma_mean;
    out.summary["gamma_sd"] = rep.gamma_sd;
    out.summary["tabulated_knots"] = rep.tabulated_knots;
    out.tables.push_back(std::move(st));
    out.tables.push_back(std::move(lt));
    out.tables.push_back(std::move(gt));
    return out;
}

// ------------------------------------------------------------------ dispatch

const std::vector<std::string>& verify_checks() {
    static const std::vector<std::string> names{"chain-rule", "second-order", "girsanov",
                                                "clark-ocone", "lemma34",      "bensoussan"};
    return names;
}

BatteryResult run_check(const std::string& name, const RunConfig& cfg) {
    if (name == "chain-rule") return run_chain_rule(cfg);
    if (name == "second-order") return run_second_order(cfg);
    if (name == "girsanov") return run_girsanov(cfg);
    if (name == "clark-ocone") return run_clark_ocone(cfg);
    if (name == "lemma34") return run_nested_link(cfg);
    if (name == "bensoussan") return run_bensoussan(cfg);
    if (name == "pipeline") return run_pipeline(cfg);
    throw ConfigError("unknown check '" + name + "'");
}

// --------------------------------------------------------- property batteries

BatteryResult run_recentering_properties(std::uint64_t seed, std::size_t n_instances) {
    Rng rng(seed, stream::instances);
    const TimeGrid grid = make_grid(4);
    double mean_q = 0.0, mean_ql = 0.0, trip_a = 0.0, trip_b = 0.0, idem = 0.0;
    CsvTable tab{"recentering", {"instance", "n", "scale", "q_mean", "ql_mean", "roundtrip_ql", "roundtrip_q"}, {}};
    for (std::size_t i = 0; i < n_instances; ++i) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 60.0);
        PathPool pool = sample_paths(grid, n, rng.bits());
        for (double& w : pool.weights) w = rng.uniform(0.2, 2.0);
        const double wsum = std::accumulate(pool.weights.begin(), pool.weights.end(), 0.0);
        for (double& w : pool.weights) w *= static_cast<double>(n) / wsum;
        const double scale = std::exp(rng.uniform(-3.0, 3.0));
        std::vector<double> v(n), L(n);
        for (std::size_t p = 0; p < n; ++p) {
            v[p] = scale * (rng.normal() + 3.0 * rng.uniform());
            L[p] = rng.uniform(0.05, 3.0);
        }
        const std::vector<double> ones(n, 1.0);
        const double mL = weighted_expectation(pool, ones, L);
        for (double& x : L) x /= mL;
        double vmax = 0.0;
        for (double x : v) vmax = std::max(vmax, std::abs(x));

        const auto q = recenter_to_Q(v, pool);
        const auto ql = recenter_to_QL(v, L, pool);
        const double a = std::abs(weighted_expectation(pool, ones, q)) / vmax;
        const double b = std::abs(weighted_expectation(pool, L, ql)) / vmax;
        const auto ql_of_q = recenter_to_QL(q, L, pool);
        const auto q_of_ql = recenter_to_Q(ql, pool);
        const auto qq = recenter_to_Q(q, pool);
        double c = 0.0, d = 0.0, e = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            c = std::max(c, std::abs(ql_of_q[p] - ql[p]) / vmax);
            d = std::max(d, std::abs(q_of_ql[p] - q[p]) / vmax);
            e = std::max(e, std::abs(qq[p] - q[p]) / vmax);
        }
        mean_q = std::max(mean_q, a);
        mean_ql = std::max(mean_ql, b);
        trip_a = std::max(trip_a, c);
        trip_b = std::max(trip_b, d);
        idem = std::max(idem, e);
        tab.add({static_cast<double>(i), static_cast<double>(n), scale, a, b, c, d});
    }
    // Relative to max|v|; a few ulps of accumulated rounding.
    constexpr double machine = 1e-13;
    BatteryResult out;
    out.records.push_back(make_record("recentering/Q_mean_zero", mean_q, 0.0, 0.0, machine));
    out.records.push_back(make_record("recentering/QL_mean_zero", mean_ql, 0.0, 0.0, machine));
    out.records.push_back(make_record("recentering/QL_after_Q_equals_QL", trip_a, 0.0, 0.0, machine));
    out.records.push_back(make_record("recentering/Q_after_QL_equals_Q", trip_b, 0.0, 0.0, machine));
    out.records.push_back(make_record("recentering/Q_idempotent", idem, 0.0, 0.0, machine));
    out.tables.push_back(std::move(tab));
    out.summary["n_instances"] = n_instances;
    return out;
}

double wasserstein1_dual_bruteforce(const EmpiricalLaw& a, const EmpiricalLaw& b) {
    if (a.dim != 1 || b.dim != 1) throw std::invalid_argument("dual brute force: one-dimensional laws only");
    std::vector<double> z(a.atoms);
    z.insert(z.end(), b.atoms.begin(), b.atoms.end());
    std::sort(z.begin(), z.end());
    z.erase(std::unique(z.begin(), z.end()), z.end());
    const std::size_t m = z.size();
    if (m > 16) throw std::invalid_argument("dual brute force: at most 16 merged atoms");
    std::vector<double> net(m, 0.0);
    const auto at = [&](double x) { return static_cast<std::size_t>(std::lower_bound(z.begin(), z.end(), x) - z.begin()); };
    for (std::size_t i = 0; i < a.size(); ++i) net[at(a.atoms[i])] += a.weights[i];
    for (std::size_t i = 0; i < b.size(); ++i) net[at(b.atoms[i])] -= b.weights[i];
    if (m == 1) return 0.0;
    double best = -INFINITY;
    for (std::uint32_t mask = 0; mask < (1u << (m - 1)); ++mask) {
        double h = 0.0, val = net[0] * h;
        for (std::size_t j = 1; j < m; ++j) {
            h += ((mask >> (j - 1)) & 1u ? 1.0 : -1.0) * (z[j] - z[j - 1]);
            val += net[j] * h;
        }
        best = std::max(best, val);
    }
    return best;
}

BatteryResult run_wasserstein_oracle(std::uint64_t seed, std::size_t n_instances) {
    Rng rng(seed, stream::instances);
    const auto random_law = [&]() {
        const std::size_t k = 1 + static_cast<std::size_t>(rng.uniform() * 5.0);
        std::vector<double> x(k), w(k);
        const bool lattice = rng.uniform() < 0.3;  // ties between the two laws
        for (std::size_t i = 0; i < k; ++i) {
            x[i] = lattice ? std::round(rng.uniform(-3.0, 3.0) * 2.0) / 2.0 : rng.uniform(-3.0, 3.0);
            w[i] = rng.uniform(0.05, 1.0);
        }
        const double s = std::accumulate(w.begin(), w.end(), 0.0);
        for (double& v : w) v /= s;
        return make_law(1, x, w, true);
    };
    double worst = 0.0;
    CsvTable tab{"wasserstein_oracle", {"instance", "atoms_a", "atoms_b", "w1", "dual_bruteforce", "abs_diff"}, {}};
    for (std::size_t i = 0; i < n_instances; ++i) {
        const EmpiricalLaw a = random_law(), b = random_law();
        const double w = wasserstein1(a, b), o = wasserstein1_dual_bruteforce(a, b);
        worst = std::max(worst, std::abs(w - o));
        tab.add({static_cast<double>(i), static_cast<double>(a.size()), static_cast<double>(b.size()), w, o,
                 std::abs(w - o)});
    }
    BatteryResult out;
    out.records.push_back(make_record("wasserstein1/max_abs_diff_vs_dual_bruteforce", worst, 0.0, 0.0, 1e-12,
                                      "floating-point agreement"));
    out.tables.push_back(std::move(tab));
    out.summary["n_instances"] = n_instances;
    return out;
}

}  // namespace wcalc
