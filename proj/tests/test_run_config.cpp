#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "wcalc/run_config.hpp"

using namespace wcalc;
using nlohmann::json;

namespace {
json minimal() { return json{{"schema_version", 1}, {"n_paths", 1000}, {"grid", {{"n_steps", 8}}}}; }
}  // namespace

TEST(Schema, ShippedSchemaIsEmbedded) {
    const json& s = config_schema();
    EXPECT_EQ(s["properties"]["schema_version"]["const"], config_schema_version);
}

TEST(Schema, MinimalDocumentValidates) { EXPECT_TRUE(schema_errors(minimal(), config_schema()).empty()); }

TEST(Schema, ReportsEveryViolationWithPointer) {
    json d = minimal();
    d["n_paths"] = 3;
    d["bogus"] = true;
    d["grid"]["n_steps"] = "eight";
    const auto errs = schema_errors(d, config_schema());
    ASSERT_EQ(errs.size(), 3u);
    std::string all;
    for (const auto& e : errs) all += e + "\n";
    EXPECT_NE(all.find("/n_paths"), std::string::npos);
    EXPECT_NE(all.find("bogus"), std::string::npos);
    EXPECT_NE(all.find("/grid/n_steps"), std::string::npos);
}

TEST(Schema, PipelineRequiresCurve) {
    EXPECT_THROW(parse_run_config(minimal(), "pipeline"), ConfigError);
    json d = minimal();
    d["curves"] = json::array({{{"kind", "constant"}, {"density", "one"}}});
    EXPECT_NO_THROW(parse_run_config(d, "pipeline"));
}

TEST(Schema, OneOfRejectsAmbiguousAndUnknownProcesses) {
    json d = minimal();
    d["curves"] = json::array({{{"kind", "exponential-family"}, {"theta", {{"type", "smooth"}, {"name", "cosh"}}}}});
    EXPECT_FALSE(schema_errors(d, config_schema()).empty());
}

TEST(Schema, UnknownKeywordIsALogicError) {
    const json schema{{"type", "object"}, {"patternProperties", json::object()}};
    EXPECT_THROW(schema_errors(json::object(), schema), std::logic_error);
}

TEST(RunConfig, DefaultsAndEcho) {
    const RunConfig c = parse_run_config(minimal(), "girsanov");
    EXPECT_EQ(c.seed, 1u);
    EXPECT_EQ(c.out_dir, "wcalc-out");
    EXPECT_DOUBLE_EQ(c.tol.n_std_err, 3.0);
    EXPECT_FALSE(c.tol.fixed);
    EXPECT_EQ(c.echo["check"], "girsanov");
    EXPECT_EQ(c.echo["seed"], 1);
    // The echo reproduces the run.
    const RunConfig again = parse_run_config(c.echo, "girsanov");
    EXPECT_EQ(again.echo, c.echo);
}

TEST(RunConfig, CheckMismatchRejected) {
    json d = minimal();
    d["check"] = "lemma34";
    EXPECT_THROW(parse_run_config(d, "girsanov"), ConfigError);
}

TEST(Overrides, PrecedenceCliOverEnvOverConfig) {
    json d = minimal();
    d["seed"] = 4;
    ::setenv("WCALC_SEED", "9", 1);
    ::setenv("WCALC_OUT_DIR", "/tmp/env-out", 1);
    ConfigOverrides cli;
    cli.seed = 12;
    const auto ov = merge_overrides(cli, env_overrides());
    const RunConfig c = parse_run_config(d, "girsanov", ov);
    EXPECT_EQ(c.seed, 12u);
    EXPECT_EQ(c.out_dir, "/tmp/env-out");
    const RunConfig e = parse_run_config(d, "girsanov", env_overrides());
    EXPECT_EQ(e.seed, 9u);
    ::setenv("WCALC_SEED", "x9", 1);
    EXPECT_THROW(env_overrides(), ConfigError);
    ::unsetenv("WCALC_SEED");
    ::unsetenv("WCALC_OUT_DIR");
    EXPECT_EQ(parse_run_config(d, "girsanov", env_overrides()).seed, 4u);
}

TEST(Builders, ProcessesAndCurves) {
    const TimeGrid g = make_grid(4);
    const StepProcess t = build_step_process(json{{"type", "table"}, {"values", {2.0}}, {"scale", 0.5}}, g);
    EXPECT_DOUBLE_EQ(t.eval(3, std::vector<double>{0, 0, 0}), 1.0);
    EXPECT_THROW(build_step_process(json{{"type", "table"}, {"values", {1.0, 2.0}}}, g), ConfigError);
    const DensityCurve c = build_curve(json{{"kind", "mixture"}, {"L0", "one"}, {"L1", "exp_b1"}}, g);
    EXPECT_EQ(c.kind, "mixture");
    const auto l = curve_lambdas(json{{"kind", "mixture"}}, c, {-0.5, 0.5, 0.9995}, 1e-3);
    EXPECT_EQ(l, std::vector<double>{0.5});
    EXPECT_THROW(curve_lambdas(json{{"lambdas", {1.0}}}, c, {}, 1e-3), ConfigError);
}

TEST(Examples, ShippedConfigsLoad) {
    for (const char* name : {"chain-rule", "second-order", "girsanov", "clark-ocone", "lemma34", "bensoussan",
                             "pipeline"}) {
        const std::string path = std::string(WCALC_SOURCE_DIR) + "/docs/examples/" + name + ".json";
        EXPECT_NO_THROW(load_run_config(path, name)) << name;
    }
}
