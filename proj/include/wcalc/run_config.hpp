#pragma once
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "wcalc/density_deriv.hpp"
#include "wcalc/girsanov.hpp"
#include "wcalc/wiener_grid.hpp"

namespace wcalc {

inline constexpr int config_schema_version = 1;

// The shipped docs/config.schema.json, compiled in.
const nlohmann::json& config_schema();

// Validates `doc` against the subset of JSON Schema used by the shipped
// schema. Returns one message per violation, each prefixed by its JSON
// pointer; empty when valid.
std::vector<std::string> schema_errors(const nlohmann::json& doc, const nlohmann::json& schema);

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Tolerances {
    double n_std_err = 3.0;
    double fd_constant = 1.0;      // C in C·h²
    double kernel_constant = 0.0;  // K in K·bw² where a battery has no analytic bound (0: battery default)
    std::optional<double> fixed;   // replaces every computed tolerance

    double apply(double computed) const { return fixed ? *fixed : computed; }
};

struct RunConfig {
    std::string check;
    std::uint64_t seed = 1;
    std::size_t n_paths = 100000;
    std::size_t n_steps = 8;
    double horizon = 1.0;
    std::vector<std::string> functionals;
    nlohmann::json curves = nlohmann::json::array();
    std::vector<double> lambdas;
    double h_step = 1e-3;
    std::string out_dir = "wcalc-out";
    Tolerances tol;
    nlohmann::json options = nlohmann::json::object();
    nlohmann::json pipeline = nlohmann::json::object();

    // The validated document with overrides applied; re-running from it
    // reproduces the run.
    nlohmann::json echo;

    TimeGrid grid() const { return make_grid(n_steps, horizon); }
    double option(const std::string& key, double fallback) const;
    std::vector<double> option_list(const std::string& key, std::vector<double> fallback) const;
};

// Command-line and environment overrides; only seed and output directory
// may be overridden.
struct ConfigOverrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

// Reads WCALC_SEED and WCALC_OUT_DIR. Throws ConfigError on a malformed seed.
ConfigOverrides env_overrides();
// `primary` wins over `fallback` field by field.
ConfigOverrides merge_overrides(const ConfigOverrides& primary, const ConfigOverrides& fallback);

// `check` is the battery requested on the command line ("pipeline" for the
// pipeline command). Throws ConfigError listing every schema violation.
RunConfig parse_run_config(nlohmann::json doc, const std::string& check, const ConfigOverrides& ov = {});
RunConfig load_run_config(const std::string& path, const std::string& check, const ConfigOverrides& ov = {});

StepProcess build_step_process(const nlohmann::json& spec, const TimeGrid& grid);
DensityCurve build_curve(const nlohmann::json& spec, const TimeGrid& grid);
// λ probes for a curve: its own list, else the run's list filtered to the
// interior of Λ, else three interior points.
std::vector<double> curve_lambdas(const nlohmann::json& spec, const DensityCurve& curve,
                                  const std::vector<double>& run_lambdas, double h_step);

}  // namespace wcalc
