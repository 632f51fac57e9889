#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "wcalc/io.hpp"
#include "wcalc/run_report.hpp"

using namespace wcalc;
namespace fs = std::filesystem;

namespace {
fs::path fresh_dir(const std::string& name) {
    const fs::path d = fs::temp_directory_path() / ("wcalc_test_" + name);
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

RunReport sample(bool pass, const std::string& version = wcalc_version) {
    RunReport r;
    r.command = "verify";
    r.check = "girsanov";
    r.config = {{"seed", 1}};
    r.version = version;
    r.result.records.push_back(make_record("a", 1.0, 1.0 + 1e-3, 1e-3, 1e-2));
    r.result.records.push_back(make_record("b", 2.0, pass ? 2.0 : 3.0, 0.0, 0.5));
    CsvTable t{"tab", {"label", "x"}, {}};
    t.add("row", {0.1});
    r.result.tables.push_back(t);
    return r;
}
}  // namespace

TEST(Record, PassRuleAndNonFinite) {
    EXPECT_TRUE(make_record("x", 1.0, 1.04, 0.0, 0.05).pass);
    EXPECT_FALSE(make_record("x", 1.0, 1.06, 0.0, 0.05).pass);
    EXPECT_FALSE(make_record("x", NAN, NAN, 0.0, INFINITY).pass);
    EXPECT_FALSE(make_record("x", 0.0, 0.0, 0.0, -1.0).pass);
}

TEST(Csv, FullPrecisionRoundTrip) {
    CsvTable t{"t", {"v"}, {}};
    t.add({0.1 + 0.2});
    const std::string csv = t.to_csv();
    EXPECT_EQ(std::stod(csv.substr(csv.find('\n') + 1)), 0.1 + 0.2);
}

TEST(Report, WriteReadRoundTrip) {
    const fs::path d = fresh_dir("roundtrip");
    write_run_report(sample(true), d.string());
    EXPECT_TRUE(fs::exists(d / "tab.csv"));
    EXPECT_FALSE(fs::exists(d / "report.json.tmp"));
    const RunReport r = read_run_report((d / "report.json").string());
    EXPECT_EQ(r.version, wcalc_version);
    ASSERT_EQ(r.result.records.size(), 2u);
    EXPECT_EQ(r.result.records[0].lhs, 1.0);
    EXPECT_TRUE(r.all_pass());
}

TEST(Report, MalformedInputThrows) {
    const fs::path d = fresh_dir("malformed");
    write_file_atomic((d / "report.json").string(), "{\"version\": 1");
    EXPECT_THROW(read_run_report((d / "report.json").string()), std::runtime_error);
    write_file_atomic((d / "report.json").string(), "{\"version\": \"0.3.0\"}");
    EXPECT_THROW(read_run_report((d / "report.json").string()), std::runtime_error);
}

TEST(Summary, AggregatesAndFlagsFailuresAndVersions) {
    const fs::path d = fresh_dir("summary");
    write_run_report(sample(true), (d / "one").string());
    write_run_report(sample(false), (d / "two" / "nested").string());
    ReportSummary s = summarize_reports(d.string());
    EXPECT_EQ(s.entries.size(), 2u);
    EXPECT_FALSE(s.all_pass);
    EXPECT_FALSE(s.version_conflict);
    EXPECT_NE(s.to_markdown().find("FAIL"), std::string::npos);
    EXPECT_EQ(s.to_json()["n_reports"], 2);

    write_run_report(sample(true, "0.0.1"), (d / "old").string());
    s = summarize_reports(d.string());
    EXPECT_TRUE(s.version_conflict);
    EXPECT_NE(s.to_markdown().find("WARNING"), std::string::npos);
    EXPECT_THROW(summarize_reports((d / "missing").string()), std::runtime_error);
}
