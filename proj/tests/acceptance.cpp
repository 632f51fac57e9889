// Acceptance run: one PASS/FAIL line per criterion. Batteries read the
// shipped example configurations; every tolerance lives either in those
// files or in the constants below.
//
// usage: acceptance [out_dir]

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wcalc/checks.hpp"
#include "wcalc/run_config.hpp"
#include "wcalc/run_report.hpp"

namespace {

using namespace wcalc;

// Seeds of the two property batteries and their instance counts.
constexpr std::uint64_t recentering_seed = 2024;
constexpr std::size_t recentering_instances = 100;
constexpr std::uint64_t wasserstein_seed = 2025;
constexpr std::size_t wasserstein_instances = 200;

std::string out_root = "acceptance-out";

RunConfig example(const std::string& check) {
    const std::string path = std::string(WCALC_SOURCE_DIR) + "/docs/examples/" + check + ".json";
    ConfigOverrides ov;
    ov.out_dir = out_root;
    return load_run_config(path, check, ov);
}

BatteryResult timed(const std::string& name, const std::function<BatteryResult()>& run, double& secs,
                    const nlohmann::json& config = nlohmann::json::object()) {
    const auto t0 = std::chrono::steady_clock::now();
    BatteryResult r = run();
    secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    RunReport rep;
    rep.command = "acceptance";
    rep.check = name;
    rep.config = config;
    rep.result = r;
    rep.wall_time_s = secs;
    write_run_report(rep, (std::filesystem::path(out_root) / name).string());
    return r;
}

BatteryResult select(const BatteryResult& r, const std::vector<std::string>& prefixes) {
    BatteryResult out;
    for (const auto& rec : r.records)
        for (const auto& p : prefixes)
            if (rec.name.rfind(p, 0) == 0) {
                out.records.push_back(rec);
                break;
            }
    return out;
}

int n_failed = 0;

void criterion(int id, const std::string& title, const BatteryResult& r, double secs) {
    std::size_t pass = 0;
    for (const auto& rec : r.records) pass += rec.pass ? 1 : 0;
    const bool ok = !r.records.empty() && pass == r.records.size();
    n_failed += ok ? 0 : 1;
    std::printf("%s criterion %d: %s (%zu/%zu records, %.1f s)\n", ok ? "PASS" : "FAIL", id, title.c_str(), pass,
                r.records.size(), secs);
    for (const auto& rec : r.records)
        if (!rec.pass)
            std::printf("    failed %s: lhs=%.10g rhs=%.10g gap=%.3g tol=%.3g\n", rec.name.c_str(), rec.lhs, rec.rhs,
                        rec.gap(), rec.tolerance);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc > 1) out_root = argv[1];
    double s = 0.0;
    try {
        {
            const RunConfig c = example("chain-rule");
            const auto r = timed("chain-rule", [&] { return run_chain_rule(c); }, s, c.echo);
            criterion(1, "chain rule along density curves", r, s);
        }
        {
            const RunConfig c = example("second-order");
            const auto r = timed("second-order", [&] { return run_second_order(c); }, s, c.echo);
            criterion(2, "second-order relation, one dimension", select(r, {"1d/", "closed_form/"}), s);
            criterion(3, "second-order relation, two dimensions", select(r, {"2d/"}), s);
        }
        {
            const RunConfig c = example("girsanov");
            const auto r = timed("girsanov", [&] { return run_girsanov(c); }, s, c.echo);
            criterion(4, "Girsanov identities, flows and martingale means", r, s);
        }
        {
            const RunConfig c = example("clark-ocone");
            const auto r = timed("clark-ocone", [&] { return run_clark_ocone(c); }, s, c.echo);
            criterion(5, "Clark-Ocone representation", r, s);
        }
        {
            const RunConfig c = example("pipeline");
            const auto r = timed("pipeline", [&] { return run_pipeline(c); }, s, c.echo);
            criterion(6, "approximation pipeline errors, ladders and runtime", r, s);
        }
        {
            const auto r = timed("recentering",
                                 [&] { return run_recentering_properties(recentering_seed, recentering_instances); }, s);
            criterion(7, "recentering identities on random profiles", r, s);
        }
        {
            const RunConfig c1 = example("lemma34");
            const RunConfig c2 = example("bensoussan");
            double s1 = 0.0, s2 = 0.0;
            BatteryResult r = timed("lemma34", [&] { return run_nested_link(c1); }, s1, c1.echo);
            r.append(timed("bensoussan", [&] { return run_bensoussan(c2); }, s2, c2.echo));
            criterion(8, "nested-functional and density-functional cross-checks", r, s1 + s2);
        }
        {
            const auto r =
                timed("wasserstein1", [&] { return run_wasserstein_oracle(wasserstein_seed, wasserstein_instances); }, s);
            criterion(9, "wasserstein1 against the dual brute force", r, s);
        }
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::printf("%s: %d criteria failed\n", n_failed == 0 ? "ALL PASS" : "FAILURES", n_failed);
    return n_failed == 0 ? 0 : 1;
}
