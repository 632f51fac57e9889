// Serial reference vs OpenMP variants of the kernel-smoothing loops, plus
// the Doleans-Dade exponential over a path pool.

#include <benchmark/benchmark.h>

#include <algorithm>
#include <vector>

#include "wcalc/girsanov.hpp"
#include "wcalc/kernels.hpp"
#include "wcalc/rng.hpp"
#include "wcalc/wiener_grid.hpp"

namespace {

using wcalc::kernels::Exec;

struct Sample {
    std::vector<double> y, x, w, q;
};

Sample make_sample(std::size_t n, std::size_t n_query) {
    wcalc::Rng rng(42, wcalc::stream::paths);
    Sample s;
    s.y.resize(n);
    s.x.resize(n);
    s.w.assign(n, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
        s.y[i] = rng.normal();
        s.x[i] = s.y[i] * s.y[i] + rng.normal();
    }
    for (std::size_t i = 0; i < n_query; ++i) s.q.push_back(-2.0 + 4.0 * static_cast<double>(i) / (n_query - 1));
    return s;
}

void BM_nadaraya_watson(benchmark::State& st, Exec exec) {
    const Sample s = make_sample(static_cast<std::size_t>(st.range(0)), 64);
    std::vector<double> out(s.q.size());
    for (auto _ : st) {
        wcalc::kernels::nadaraya_watson(s.q, s.y, s.x, s.w, 0.2, out, exec);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0) * 64);
}

void BM_nadaraya_watson_binned(benchmark::State& st, Exec exec) {
    const Sample s = make_sample(static_cast<std::size_t>(st.range(0)), 64);
    std::vector<double> out(s.q.size());
    for (auto _ : st) {
        wcalc::kernels::nadaraya_watson_binned(s.q, s.y, s.x, s.w, 0.2, 2048, out, exec);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_kde_gaussian(benchmark::State& st, Exec exec) {
    Sample s = make_sample(static_cast<std::size_t>(st.range(0)), 512);
    std::sort(s.y.begin(), s.y.end());
    std::vector<double> w(s.y.size(), 1.0 / static_cast<double>(s.y.size()));
    std::vector<double> out(s.q.size());
    for (auto _ : st) {
        wcalc::kernels::kde_gaussian(s.q, s.y, w, 0.1, out, exec);
        benchmark::DoNotOptimize(out.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

void BM_doleans_exponential(benchmark::State& st) {
    const wcalc::TimeGrid grid = wcalc::make_grid(64);
    const wcalc::PathPool pool = wcalc::sample_paths(grid, static_cast<std::size_t>(st.range(0)), 7);
    const wcalc::StepProcess g = wcalc::smooth_process(grid, "tanh_last", 1.0);
    for (auto _ : st) {
        auto e = wcalc::doleans_exponential(pool, g, 1.0);
        benchmark::DoNotOptimize(e.data());
    }
    st.SetItemsProcessed(st.iterations() * st.range(0));
}

}  // namespace

BENCHMARK_CAPTURE(BM_nadaraya_watson, serial, Exec::serial)->Arg(10000)->Arg(100000);
BENCHMARK_CAPTURE(BM_nadaraya_watson, openmp, Exec::parallel)->Arg(10000)->Arg(100000);
BENCHMARK_CAPTURE(BM_nadaraya_watson_binned, serial, Exec::serial)->Arg(100000)->Arg(1000000);
BENCHMARK_CAPTURE(BM_nadaraya_watson_binned, openmp, Exec::parallel)->Arg(100000)->Arg(1000000);
BENCHMARK_CAPTURE(BM_kde_gaussian, serial, Exec::serial)->Arg(10000)->Arg(100000);
BENCHMARK_CAPTURE(BM_kde_gaussian, openmp, Exec::parallel)->Arg(10000)->Arg(100000);
BENCHMARK(BM_doleans_exponential)->Arg(100000);

BENCHMARK_MAIN();
