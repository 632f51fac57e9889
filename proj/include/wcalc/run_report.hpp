#pragma once
#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

namespace wcalc {

inline constexpr const char* wcalc_version = "0.3.0";

// One verified quantity. pass <=> |lhs - rhs| <= tolerance.
struct CheckRecord {
    std::string name;
    double lhs = 0.0;
    double rhs = 0.0;
    double std_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
    std::string note;

    double gap() const;
};

CheckRecord make_record(std::string name, double lhs, double rhs, double std_err, double tolerance,
                        std::string note = {});

// Rows are already formatted cells.
struct CsvTable {
    std::string name;  // file stem
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    void add(std::vector<double> row);
    void add(const std::string& label, std::vector<double> row);
    std::string to_csv() const;
};

std::string fmt_double(double v);

struct BatteryResult {
    std::vector<CheckRecord> records;
    std::vector<CsvTable> tables;
    nlohmann::json summary = nlohmann::json::object();  // battery-specific extras

    void append(BatteryResult other);
};

struct RunReport {
    std::string command;  // "verify" or "pipeline"
    std::string check;
    nlohmann::json config;
    BatteryResult result;
    double wall_time_s = 0.0;
    std::string version = wcalc_version;

    bool all_pass() const;
    nlohmann::json to_json() const;
};

// report.json plus one CSV per table, each written atomically.
void write_run_report(const RunReport& r, const std::string& out_dir);

RunReport read_run_report(const std::string& path);

// Summary over every report.json found (recursively) under `dir`.
struct ReportSummary {
    std::vector<nlohmann::json> entries;  // one per report
    bool version_conflict = false;
    bool all_pass = true;

    nlohmann::json to_json() const;
    std::string to_markdown() const;
};
ReportSummary summarize_reports(const std::string& dir);

}  // namespace wcalc
