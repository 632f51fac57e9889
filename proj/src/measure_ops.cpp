#include "wcalc/measure_ops.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wcalc/kernels.hpp"

namespace wcalc {

namespace {

void require_finite(std::span<const double> v, const char* what) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

struct SortedLaw {
    std::vector<double> x, w;
};

SortedLaw sorted_1d(const EmpiricalLaw& law) {
    std::vector<std::size_t> idx(law.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return law.atoms[a] < law.atoms[b]; });
    SortedLaw s;
    s.x.reserve(idx.size());
    s.w.reserve(idx.size());
    for (auto i : idx) {
        s.x.push_back(law.atoms[i]);
        s.w.push_back(law.weights[i]);
    }
    return s;
}

double weighted_quantile(const std::vector<std::pair<double, double>>& sorted, double total, double q) {
    const double target = q * total;
    double acc = 0.0;
    for (const auto& [v, w] : sorted) {
        acc += w;
        if (acc >= target) return v;
    }
    return sorted.back().first;
}

}  // namespace

double EmpiricalLaw::total_mass() const {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

EmpiricalLaw make_law(std::size_t dim, std::vector<double> atoms, std::vector<double> weights,
                      bool normalized) {
    if (dim == 0) throw std::invalid_argument("EmpiricalLaw: dim must be >= 1");
    if (atoms.size() != weights.size() * dim)
        throw std::invalid_argument("EmpiricalLaw: atoms/weights size mismatch");
    require_finite(atoms, "EmpiricalLaw atoms");
    require_finite(weights, "EmpiricalLaw weights");
    if (normalized) {
        double s = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("EmpiricalLaw: negative weight in a probability law");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-9) throw std::invalid_argument("EmpiricalLaw: weights must sum to 1");
    }
    return EmpiricalLaw{dim, std::move(atoms), std::move(weights), normalized};
}

std::vector<double> density_weights(const PathPool& pool, std::span<const double> density) {
    if (pool.n_samples == 0) throw std::invalid_argument("empty pool");
    if (density.size() != pool.n_samples) throw std::invalid_argument("density size != pool size");
    const double W = pool.weight_sum();
    std::vector<double> dw(pool.n_samples);
    for (std::size_t i = 0; i < pool.n_samples; ++i) dw[i] = pool.weights[i] * density[i] / W;
    return dw;
}

EmpiricalLaw pushforward_law(const PathPool& pool, std::span<const double> density,
                             std::span<const double> observables, std::size_t dim, bool normalized) {
    if (dim == 0 || observables.size() != pool.n_samples * dim)
        throw std::invalid_argument("pushforward_law: observable size mismatch");
    require_finite(density, "pushforward_law density");
    require_finite(observables, "pushforward_law observables");
    std::vector<double> weights = density_weights(pool, density);
    if (normalized) {
        double s = 0.0;
        for (double w : weights) {
            if (w < 0.0) throw std::invalid_argument("pushforward_law: negative density for a probability law");
            s += w;
        }
        if (!(s > 0.0)) throw std::invalid_argument("pushforward_law: zero total mass");
        for (double& w : weights) w /= s;
    }
    EmpiricalLaw law;
    law.dim = dim;
    law.atoms.assign(observables.begin(), observables.end());
    law.weights = std::move(weights);
    law.normalized = normalized;
    return law;
}

double integrate(const EmpiricalLaw& law,
                 const std::function<double(std::span<const double>)>& phi) {
    double s = 0.0;
    for (std::size_t i = 0; i < law.size(); ++i) s += law.weights[i] * phi(law.atom(i));
    return s;
}

double wasserstein1(const EmpiricalLaw& a, const EmpiricalLaw& b) {
    if (a.dim != 1 || b.dim != 1) throw std::invalid_argument("wasserstein1: only dim 1 is supported");
    if (!a.normalized || !b.normalized)
        throw std::invalid_argument("wasserstein1: both laws must be normalized");
    const SortedLaw sa = sorted_1d(a), sb = sorted_1d(b);
    std::size_t i = 0, j = 0;
    double fa = 0.0, fb = 0.0, total = 0.0;
    double cur = std::min(sa.x.front(), sb.x.front());
    while (i < sa.x.size() || j < sb.x.size()) {
        const double xa = i < sa.x.size() ? sa.x[i] : INFINITY;
        const double xb = j < sb.x.size() ? sb.x[j] : INFINITY;
        const double next = std::min(xa, xb);
        total += std::abs(fa - fb) * (next - cur);
        cur = next;
        while (i < sa.x.size() && sa.x[i] == next) fa += sa.w[i++];
        while (j < sb.x.size() && sb.x[j] == next) fb += sb.w[j++];
    }
    return total;
}

double weighted_expectation(const PathPool& pool, std::span<const double> density,
                            std::span<const double> g) {
    if (g.size() != pool.n_samples) throw std::invalid_argument("weighted_expectation: size mismatch");
    const std::vector<double> dw = density_weights(pool, density);
    double s = 0.0;
    for (std::size_t i = 0; i < dw.size(); ++i) s += dw[i] * g[i];
    return s;
}

double weighted_std_error(const PathPool& pool, std::span<const double> density,
                          std::span<const double> g) {
    if (g.size() != pool.n_samples || density.size() != pool.n_samples)
        throw std::invalid_argument("weighted_std_error: size mismatch");
    const double W = pool.weight_sum();
    double mean = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) mean += pool.weights[i] * density[i] * g[i];
    mean /= W;
    double v = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double d = density[i] * g[i] - mean;
        v += pool.weights[i] * pool.weights[i] * d * d;
    }
    return std::sqrt(v) / W;
}

double silverman_bandwidth(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size() || values.empty())
        throw std::invalid_argument("silverman_bandwidth: size mismatch");
    double W = 0.0, W2 = 0.0, m = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (weights[i] < 0.0) throw std::invalid_argument("silverman_bandwidth: negative weight");
        W += weights[i];
        W2 += weights[i] * weights[i];
        m += weights[i] * values[i];
    }
    if (!(W > 0.0)) throw std::invalid_argument("silverman_bandwidth: zero total weight");
    m /= W;
    double var = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) var += weights[i] * (values[i] - m) * (values[i] - m);
    var /= W;
    const double sd = std::sqrt(var);
    if (!(sd > 0.0))
        throw std::invalid_argument("silverman_bandwidth: degenerate sample (all values identical)");
    std::vector<std::pair<double, double>> sorted(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) sorted[i] = {values[i], weights[i]};
    std::sort(sorted.begin(), sorted.end());
    const double iqr = weighted_quantile(sorted, W, 0.75) - weighted_quantile(sorted, W, 0.25);
    const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
    const double n_eff = W * W / W2;
    return 0.9 * spread * std::pow(n_eff, -0.2);
}

double resolve_bandwidth(std::span<const double> y, std::span<const double> density,
                         const KernelOptions& opt) {
    if (opt.bandwidth) {
        if (!(*opt.bandwidth > 0.0)) throw std::invalid_argument("bandwidth must be positive");
        return *opt.bandwidth;
    }
    return silverman_bandwidth(y, density);
}

std::vector<double> conditional_expectation_at(std::span<const double> x,
                                               std::span<const double> y,
                                               std::span<const double> density,
                                               std::span<const double> queries,
                                               const KernelOptions& opt) {
    if (x.size() != y.size() || density.size() != y.size())
        throw std::invalid_argument("conditional_expectation: size mismatch");
    if (y.empty()) throw std::invalid_argument("conditional_expectation: empty sample");
    require_finite(x, "conditional_expectation x");
    require_finite(y, "conditional_expectation y");
    require_finite(density, "conditional_expectation density");
    const double bw = resolve_bandwidth(y, density, opt);
    std::vector<double> out(queries.size());
    bool exact = opt.method == KernelMethod::exact ||
                 (opt.method == KernelMethod::automatic && y.size() <= opt.exact_limit);
    if (exact)
        kernels::nadaraya_watson(queries, y, x, density, bw, out);
    else
        kernels::nadaraya_watson_binned(queries, y, x, density, bw, opt.n_bins, out);
    return out;
}

std::vector<double> conditional_expectation(std::span<const double> x, std::span<const double> y,
                                            std::span<const double> density,
                                            const KernelOptions& opt) {
    std::vector<double> out = conditional_expectation_at(x, y, density, y, opt);
    for (double v : out)
        if (!std::isfinite(v))
            throw std::runtime_error("conditional_expectation: empty kernel window at a sample point");
    return out;
}

std::string law_to_csv(const EmpiricalLaw& law) {
    std::ostringstream os;
    os << std::setprecision(17);
    for (std::size_t c = 0; c < law.dim; ++c) os << "x" << c + 1 << ',';
    os << "weight\n";
    for (std::size_t i = 0; i < law.size(); ++i) {
        for (double v : law.atom(i)) os << v << ',';
        os << law.weights[i] << '\n';
    }
    return os.str();
}

}  // namespace wcalc
