#include "wcalc/girsanov.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "wcalc/parallel.hpp"

namespace wcalc {

double StepProcess::eval(std::size_t i, std::span<const double> prefix) const {
    const double g = coeff(i, prefix);
    if (!(std::abs(g) <= bound * (1.0 + 1e-12))) {
        std::ostringstream msg;
        msg << "step process '" << descriptor << "' value " << g << " exceeds bound " << bound;
        throw std::runtime_error(msg.str());
    }
    return g;
}

StepProcess constant_process(const TimeGrid& grid, double c) {
    StepProcess s;
    s.grid = grid;
    s.coeff = [c](std::size_t, std::span<const double>) { return c; };
    s.coeff_grad = [](std::size_t, std::span<const double>, std::span<double> g) {
        for (double& v : g) v = 0.0;
    };
    s.bound = std::abs(c);
    std::ostringstream d;
    d << "const(" << c << ")";
    s.descriptor = d.str();
    return s;
}

StepProcess table_process(const TimeGrid& grid, double scale, std::vector<double> table) {
    if (table.size() != grid.n_steps()) throw std::invalid_argument("table_process: table size != n_steps");
    StepProcess s;
    s.grid = grid;
    double m = 0.0;
    for (double v : table) m = std::max(m, std::abs(scale * v));
    s.coeff = [scale, table](std::size_t i, std::span<const double>) { return scale * table[i]; };
    s.coeff_grad = [](std::size_t, std::span<const double>, std::span<double> g) {
        for (double& v : g) v = 0.0;
    };
    s.bound = m;
    s.descriptor = "table";
    return s;
}

StepProcess smooth_process(const TimeGrid& grid, const std::string& name, double amplitude,
                           std::size_t lags) {
    if (lags == 0) throw std::invalid_argument("smooth_process: lags must be >= 1");
    std::function<double(double)> f, df;
    bool level = false;
    if (name == "tanh_last" || name == "tanh_level") {
        f = [](double u) { return std::tanh(u); };
        df = [](double u) {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        };
        level = name == "tanh_level";
    } else if (name == "sin_last") {
        f = [](double u) { return std::sin(u); };
        df = [](double u) { return std::cos(u); };
    } else {
        throw std::invalid_argument("unknown smooth process '" + name + "'");
    }
    auto window_start = [lags, level](std::size_t i) -> std::size_t {
        if (level) return 0;
        return i > lags ? i - lags : 0;
    };
    StepProcess s;
    s.grid = grid;
    s.coeff = [=](std::size_t i, std::span<const double> prefix) {
        double u = 0.0;
        for (std::size_t j = window_start(i); j < i; ++j) u += prefix[j];
        return amplitude * f(u);
    };
    s.coeff_grad = [=](std::size_t i, std::span<const double> prefix, std::span<double> g) {
        double u = 0.0;
        const std::size_t from = window_start(i);
        for (std::size_t j = from; j < i; ++j) u += prefix[j];
        const double d = amplitude * df(u);
        for (std::size_t j = 0; j < g.size(); ++j) g[j] = j >= from && j < i ? d : 0.0;
    };
    s.bound = std::abs(amplitude);
    std::ostringstream desc;
    desc << name << "(" << amplitude << (level ? "" : "," + std::to_string(lags)) << ")";
    s.descriptor = desc.str();
    return s;
}

StepProcess combine_processes(const StepProcess& a, const StepProcess& b, double scale) {
    if (a.grid.knots() != b.grid.knots()) throw std::invalid_argument("combine_processes: grid mismatch");
    StepProcess s;
    s.grid = a.grid;
    auto ca = a.coeff, cb = b.coeff;
    s.coeff = [ca, cb, scale](std::size_t i, std::span<const double> p) { return ca(i, p) + scale * cb(i, p); };
    if (a.coeff_grad && b.coeff_grad) {
        auto ga = a.coeff_grad, gb = b.coeff_grad;
        s.coeff_grad = [ga, gb, scale](std::size_t i, std::span<const double> p, std::span<double> g) {
            std::vector<double> tmp(g.size());
            ga(i, p, g);
            gb(i, p, tmp);
            for (std::size_t j = 0; j < g.size(); ++j) g[j] += scale * tmp[j];
        };
    }
    s.bound = a.bound + std::abs(scale) * b.bound;
    std::ostringstream d;
    d << a.descriptor << "+" << scale << "*" << b.descriptor;
    s.descriptor = d.str();
    return s;
}

CurveFamily linear_family(const StepProcess& base, const StepProcess& theta, double lo, double hi) {
    if (!(lo < hi)) throw std::invalid_argument("linear_family: empty parameter interval");
    CurveFamily fam;
    fam.lo = lo;
    fam.hi = hi;
    fam.gamma = [base, theta](double lam) { return combine_processes(base, theta, lam); };
    fam.dgamma = [theta](double) { return theta; };
    fam.descriptor = base.descriptor + "+lambda*" + theta.descriptor;
    return fam;
}

void check_curve_family(const CurveFamily& fam, const PathPool& probe_pool) {
    const std::size_t n = probe_pool.n_steps();
    const std::size_t paths = std::min<std::size_t>(probe_pool.n_samples, 32);
    for (double frac : {0.25, 0.5, 0.75}) {
        const double lam = fam.lo + frac * (fam.hi - fam.lo);
        const double h = 1e-5 * std::max(1.0, std::abs(lam));
        const StepProcess gu = fam.gamma(lam + h), gd = fam.gamma(lam - h), dg = fam.dgamma(lam);
        for (std::size_t p = 0; p < paths; ++p) {
            auto r = probe_pool.row(p);
            for (std::size_t i = 0; i < n; ++i) {
                auto prefix = r.first(i);
                const double fd = (gu.coeff(i, prefix) - gd.coeff(i, prefix)) / (2.0 * h);
                const double d = dg.coeff(i, prefix);
                if (std::abs(fd - d) > 1e-5 * std::max(1.0, std::abs(d)))
                    throw std::invalid_argument("curve family '" + fam.descriptor +
                                                "': lambda-derivative inconsistent with finite difference");
            }
        }
    }
}

namespace {

void require_same_grid(const PathPool& pool, const StepProcess& g) {
    if (pool.grid.knots() != g.grid.knots()) throw std::invalid_argument("step process grid != pool grid");
}

}  // namespace

std::vector<double> log_doleans(const PathPool& pool, const StepProcess& gamma, double t) {
    require_same_grid(pool, gamma);
    const std::size_t k = pool.grid.knot_index(t);
    std::vector<double> out(pool.n_samples);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto r = pool.row(p);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double g = gamma.eval(i, r.first(i));
            acc += g * r[i] - 0.5 * g * g * pool.grid.dt(i);
        }
        out[p] = acc;
    });
    return out;
}

std::vector<double> doleans_exponential(const PathPool& pool, const StepProcess& gamma, double t) {
    std::vector<double> out = log_doleans(pool, gamma, t);
    for (double& v : out) v = std::exp(v);
    return out;
}

std::vector<double> doleans_from_matrix(const PathPool& pool, std::span<const double> gamma, double t) {
    if (gamma.size() != pool.n_samples * pool.n_steps())
        throw std::invalid_argument("doleans_from_matrix: matrix size mismatch");
    const std::size_t k = pool.grid.knot_index(t);
    const std::size_t n = pool.n_steps();
    std::vector<double> out(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double g = gamma[p * n + i];
            acc += g * r[i] - 0.5 * g * g * pool.grid.dt(i);
        }
        out[p] = std::exp(acc);
    }
    return out;
}

std::vector<double> gamma_matrix(const PathPool& pool, const StepProcess& gamma) {
    require_same_grid(pool, gamma);
    const std::size_t n = pool.n_steps();
    std::vector<double> out(pool.n_samples * n);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto r = pool.row(p);
        for (std::size_t i = 0; i < n; ++i) out[p * n + i] = gamma.eval(i, r.first(i));
    });
    return out;
}

std::vector<double> doleans_lambda_derivative(const PathPool& pool, const StepProcess& gamma,
                                              const StepProcess& dgamma, double t) {
    require_same_grid(pool, gamma);
    require_same_grid(pool, dgamma);
    const std::size_t k = pool.grid.knot_index(t);
    std::vector<double> out(pool.n_samples);
    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto r = pool.row(p);
        double logE = 0.0, bracket = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double g = gamma.eval(i, r.first(i));
            const double dg = dgamma.coeff(i, r.first(i));
            const double dt = pool.grid.dt(i);
            logE += g * r[i] - 0.5 * g * g * dt;
            bracket += dg * r[i] - g * dg * dt;
        }
        out[p] = std::exp(logE) * bracket;
    });
    return out;
}

namespace {

PathPool shift(const PathPool& pool, const StepProcess& gamma, double t, bool forward) {
    require_same_grid(pool, gamma);
    const std::size_t k = pool.grid.knot_index(t);
    PathPool out = pool;
    parallel_for(pool.n_samples, [&](std::size_t p) {
        auto src = pool.row(p);
        auto dst = out.row(p);
        for (std::size_t i = 0; i < k; ++i) {
            const double dt = pool.grid.dt(i);
            if (forward)  // γ reads the already shifted history
                dst[i] = src[i] + gamma.eval(i, std::span<const double>(dst.data(), i)) * dt;
            else  // γ reads the input history
                dst[i] = src[i] - gamma.eval(i, src.first(i)) * dt;
        }
    });
    return out;
}

}  // namespace

PathPool shift_forward(const PathPool& pool, const StepProcess& gamma, double t) {
    return shift(pool, gamma, t, true);
}

PathPool shift_backward(const PathPool& pool, const StepProcess& gamma, double t) {
    return shift(pool, gamma, t, false);
}

GirsanovResult girsanov_check(const PathPool& pool, const StepProcess& gamma, const PathFunctional& phi) {
    const double T = pool.grid.horizon();
    const std::vector<double> E = doleans_exponential(pool, gamma, T);
    const PathPool shifted = shift_forward(pool, gamma, T);
    const double W = pool.weight_sum();
    std::vector<double> a(pool.n_samples), b(pool.n_samples);
    double sa = 0.0, sb = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        a[p] = E[p] * phi(pool.row(p));
        b[p] = phi(shifted.row(p));
        sa += pool.weights[p] * a[p];
        sb += pool.weights[p] * b[p];
    }
    GirsanovResult r;
    r.lhs = sa / W;
    r.rhs = sb / W;
    const double md = r.lhs - r.rhs;
    double v = 0.0;
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        const double d = a[p] - b[p] - md;
        v += pool.weights[p] * pool.weights[p] * d * d;
    }
    r.std_err = std::sqrt(v) / W;
    return r;
}

std::vector<double> relative_exponential(const PathPool& pool, const StepProcess& gamma,
                                         const StepProcess& gamma_prime, double t) {
    const std::vector<double> a = log_doleans(pool, gamma, t);
    std::vector<double> b = log_doleans(pool, gamma_prime, t);
    for (std::size_t p = 0; p < b.size(); ++p) b[p] = std::exp(b[p] - a[p]);
    return b;
}

std::vector<double> relative_exponential_shifted(const PathPool& pool, const StepProcess& gamma,
                                                 const StepProcess& gamma_prime, double t) {
    require_same_grid(pool, gamma);
    require_same_grid(pool, gamma_prime);
    const std::size_t k = pool.grid.knot_index(t);
    std::vector<double> out(pool.n_samples);
    for (std::size_t p = 0; p < pool.n_samples; ++p) {
        auto r = pool.row(p);
        double acc = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            const double g = gamma.eval(i, r.first(i));
            const double d = gamma_prime.eval(i, r.first(i)) - g;
            const double dt = pool.grid.dt(i);
            acc += d * (r[i] - g * dt) - 0.5 * d * d * dt;
        }
        out[p] = std::exp(acc);
    }
    return out;
}

}  // namespace wcalc
