#include "wcalc/density_functional.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "wcalc/density_deriv.hpp"
#include "wcalc/kernels.hpp"
#include "wcalc/parallel.hpp"

namespace wcalc {

double trapezoid(std::span<const double> values, double dx) {
    if (values.size() < 2) return 0.0;
    double s = 0.5 * (values.front() + values.back());
    for (std::size_t i = 1; i + 1 < values.size(); ++i) s += values[i];
    return s * dx;
}

std::string GridDensity::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "x,value\n";
    for (std::size_t i = 0; i < x_grid.size(); ++i) os << x_grid[i] << ',' << values[i] << '\n';
    return os.str();
}

std::vector<double> default_kde_grid(const EmpiricalLaw& law, double bw, std::size_t n_points) {
    if (n_points < 2) throw std::invalid_argument("kde grid needs at least two points");
    const auto [lo, hi] = std::minmax_element(law.atoms.begin(), law.atoms.end());
    const double a = *lo - 5.0 * bw, b = *hi + 5.0 * bw;
    std::vector<double> g(n_points);
    for (std::size_t i = 0; i < n_points; ++i) g[i] = a + (b - a) * static_cast<double>(i) / (n_points - 1);
    return g;
}

namespace {

double law_bandwidth(const EmpiricalLaw& law, std::optional<double> bandwidth) {
    if (bandwidth) {
        if (!(*bandwidth > 0.0)) throw std::invalid_argument("kde bandwidth must be positive");
        return *bandwidth;
    }
    if (law.size() < 2) throw std::invalid_argument("kde_density: degenerate law for automatic bandwidth");
    return silverman_bandwidth(law.atoms, law.weights);
}

}  // namespace

GridDensity kde_density(const EmpiricalLaw& law, std::span<const double> x_grid, std::optional<double> bandwidth) {
    if (law.dim != 1 || !law.normalized) throw std::invalid_argument("kde_density: needs a normalized 1-D law");
    if (x_grid.size() < 2) throw std::invalid_argument("kde_density: grid too small");
    const double dx = x_grid[1] - x_grid[0];
    for (std::size_t i = 1; i < x_grid.size(); ++i)
        if (std::abs((x_grid[i] - x_grid[i - 1]) - dx) > 1e-9 * std::max(1.0, std::abs(dx)) || !(dx > 0.0))
            throw std::invalid_argument("kde_density: grid must be uniform and increasing");
    GridDensity g;
    g.bandwidth = law_bandwidth(law, bandwidth);
    g.x_grid.assign(x_grid.begin(), x_grid.end());
    std::vector<std::size_t> idx(law.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return law.atoms[a] < law.atoms[b]; });
    std::vector<double> atoms(law.size()), w(law.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        atoms[i] = law.atoms[idx[i]];
        w[i] = law.weights[idx[i]];
    }
    g.values.resize(x_grid.size());
    kernels::kde_gaussian(g.x_grid, atoms, w, g.bandwidth, g.values);
    const double mass = trapezoid(g.values, dx);
    if (!(mass > 0.0)) throw std::runtime_error("kde_density: grid captures no mass");
    for (double& v : g.values) v /= mass;
    g.mass = trapezoid(g.values, dx);
    return g;
}

GridDensity kde_density(const EmpiricalLaw& law, std::optional<double> bandwidth, std::size_t n_points) {
    const double bw = law_bandwidth(law, bandwidth);
    const std::vector<double> grid = default_kde_grid(law, bw, n_points);
    return kde_density(law, grid, bw);
}

double DensityFunctionalPhi::inner(const GridDensity& h) const {
    std::vector<double> v(h.x_grid.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = rho.f(h.x_grid[i]) * h.values[i];
    return trapezoid(v, h.spacing());
}

double DensityFunctionalPhi::operator()(const GridDensity& h) const { return Psi.f(inner(h)); }

CylindricalFn DensityFunctionalPhi::as_cylindrical() const {
    return make_cylindrical(Psi, scalar_field(rho), descriptor);
}

DensityFunctionalPhi make_density_functional(ScalarFn Psi, ScalarFn rho, std::string descriptor) {
    const std::vector<double> probes{-2.3, -1.1, -0.4, 0.0, 0.3, 0.9, 1.7, 2.6};
    check_scalar_derivative(Psi, probes);
    check_scalar_derivative(rho, probes);
    return {std::move(Psi), std::move(rho), std::move(descriptor)};
}

std::vector<double> dPhi_representer(const DensityFunctionalPhi& Phi, const GridDensity& h,
                                     std::span<const double> x) {
    const double front = h.x_grid.front(), back = h.x_grid.back();
    const double scale = Phi.Psi.df(Phi.inner(h));
    std::vector<double> r(h.x_grid.size());
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = Phi.rho.f(h.x_grid[i]);
    const double mean = trapezoid(r, h.spacing()) / (back - front);
    std::vector<double> out(x.size());
    for (std::size_t j = 0; j < x.size(); ++j) {
        if (x[j] < front || x[j] > back) throw std::invalid_argument("dPhi_representer: point outside the grid window");
        out[j] = scale * (Phi.rho.f(x[j]) - mean);
    }
    return out;
}

double dPhi_representer(const DensityFunctionalPhi& Phi, const GridDensity& h, double x) {
    return dPhi_representer(Phi, h, std::span<const double>(&x, 1))[0];
}

BensoussanResult bensoussan_check(const DensityFunctionalPhi& Phi, const PathPool& pool,
                                  std::span<const double> density, std::span<const double> xi,
                                  std::span<const double> x_probe, std::optional<double> bandwidth,
                                  double fd_step) {
    const EmpiricalLaw law = pushforward_law(pool, density, xi);
    const GridDensity h = kde_density(law, bandwidth);
    const CylindricalFn f = Phi.as_cylindrical();
    const LionsDerivativeAt lions(f, law);

    // Q_L-centering of DΦ at the atoms; the dx-centering constant cancels.
    const std::vector<double> at_atoms = dPhi_representer(Phi, h, xi);
    double c = 0.0;
    for (std::size_t i = 0; i < law.size(); ++i) c += law.weights[i] * at_atoms[i];
    const D1FProfile prof = d1F_formula(f, law, x_probe);

    BensoussanResult res;
    res.bandwidth = h.bandwidth;
    for (std::size_t j = 0; j < x_probe.size(); ++j) {
        const double x = x_probe[j];
        BensoussanRow row;
        row.x = x;
        row.dx_dPhi = (dPhi_representer(Phi, h, x + fd_step) - dPhi_representer(Phi, h, x - fd_step)) / (2.0 * fd_step);
        row.lions = lions.scalar(x);
        row.d1F_density = dPhi_representer(Phi, h, x) - c;
        row.d1F_measure = prof.values[j];
        row.err_first = std::abs(row.dx_dPhi - row.lions);
        row.err_second = std::abs(row.d1F_density - row.d1F_measure);
        res.max_err_first = std::max(res.max_err_first, row.err_first);
        res.max_err_second = std::max(res.max_err_second, row.err_second);
        res.rows.push_back(row);
    }
    res.max_err = std::max(res.max_err_first, res.max_err_second);
    return res;
}

DensityFunctionalPhi builtin_density_functional(const std::string& id) {
    if (id == "sin_id") return make_density_functional(identity_fn(), sin_fn(), id);
    if (id == "lin_sq") return make_density_functional(square_fn(), identity_fn(), id);
    if (id == "cos_sq") return make_density_functional(square_fn(), cos_fn(), id);
    if (id == "sin_sq") return make_density_functional(square_fn(), sin_fn(), id);
    throw std::invalid_argument("unknown density functional id '" + id + "'");
}

}  // namespace wcalc
