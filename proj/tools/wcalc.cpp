// wcalc: verification batteries, approximation pipeline and report summaries.
//
// Exit status: 0 when every record passes, 1 when some record fails,
// 2 on usage, configuration or I/O errors.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "wcalc/checks.hpp"
#include "wcalc/run_config.hpp"
#include "wcalc/run_report.hpp"

namespace {

constexpr int exit_fail = 1;
constexpr int exit_error = 2;

struct RunArgs {
    std::string check;
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

int run(const std::string& command, const RunArgs& a) {
    wcalc::ConfigOverrides cli;
    cli.seed = a.seed;
    cli.out_dir = a.out;
    const auto ov = wcalc::merge_overrides(cli, wcalc::env_overrides());
    const wcalc::RunConfig cfg = wcalc::load_run_config(a.config, a.check, ov);

    const auto t0 = std::chrono::steady_clock::now();
    wcalc::RunReport rep;
    rep.command = command;
    rep.check = a.check;
    rep.config = cfg.echo;
    rep.result = wcalc::run_check(a.check, cfg);
    rep.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::string dir = (std::filesystem::path(cfg.out_dir) / a.check).string();
    wcalc::write_run_report(rep, dir);

    std::size_t n_pass = 0;
    for (const auto& r : rep.result.records) {
        n_pass += r.pass ? 1 : 0;
        if (!r.pass)
            std::fprintf(stderr, "FAIL %s: lhs=%.10g rhs=%.10g gap=%.3g tol=%.3g\n", r.name.c_str(), r.lhs, r.rhs,
                         r.gap(), r.tolerance);
    }
    std::printf("%s %s: %zu/%zu records pass (%.2f s) -> %s\n", rep.all_pass() ? "PASS" : "FAIL", a.check.c_str(),
                n_pass, rep.result.records.size(), rep.wall_time_s, dir.c_str());
    return rep.all_pass() ? 0 : exit_fail;
}

int report(const std::string& dir, bool as_json) {
    const wcalc::ReportSummary s = wcalc::summarize_reports(dir);
    if (s.entries.empty()) {
        std::fprintf(stderr, "no report.json under %s\n", dir.c_str());
        return exit_error;
    }
    if (as_json)
        std::cout << s.to_json().dump(2) << "\n";
    else
        std::cout << s.to_markdown();
    return s.all_pass ? 0 : exit_fail;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"wcalc: Wiener-space calculus verification"};
    app.set_version_flag("--version", std::string(wcalc::wcalc_version));
    app.require_subcommand(1);

    RunArgs verify_args;
    auto* verify = app.add_subcommand("verify", "Run one verification battery");
    verify->add_option("check", verify_args.check, "Battery name")
        ->required()
        ->check(CLI::IsMember(wcalc::verify_checks()));
    verify->add_option("--config", verify_args.config, "JSON run configuration")->required();
    verify->add_option("--seed", verify_args.seed, "Override the seed (also WCALC_SEED)");
    verify->add_option("--out", verify_args.out, "Override the output directory (also WCALC_OUT_DIR)");

    RunArgs pipe_args;
    pipe_args.check = "pipeline";
    auto* pipe = app.add_subcommand("pipeline", "Run the approximation pipeline and its ladders");
    pipe->add_option("--config", pipe_args.config, "JSON run configuration")->required();
    pipe->add_option("--seed", pipe_args.seed, "Override the seed (also WCALC_SEED)");
    pipe->add_option("--out", pipe_args.out, "Override the output directory (also WCALC_OUT_DIR)");

    std::string report_dir;
    bool report_json = false;
    auto* rep = app.add_subcommand("report", "Summarize every report.json under a directory");
    rep->add_option("dir", report_dir, "Directory to scan")->required();
    rep->add_flag("--json", report_json, "Print JSON instead of a markdown table");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : exit_error;
    }

    try {
        if (*verify) return run("verify", verify_args);
        if (*pipe) return run("pipeline", pipe_args);
        return report(report_dir, report_json);
    } catch (const wcalc::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
    }
    return exit_error;
}
