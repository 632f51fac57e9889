#include "wcalc/run_report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include "wcalc/io.hpp"

namespace wcalc {

using nlohmann::json;

double CheckRecord::gap() const { return std::abs(lhs - rhs); }

CheckRecord make_record(std::string name, double lhs, double rhs, double std_err, double tolerance,
                        std::string note) {
    CheckRecord r;
    r.name = std::move(name);
    r.lhs = lhs;
    r.rhs = rhs;
    r.std_err = std_err;
    r.tolerance = tolerance;
    r.note = std::move(note);
    r.pass = std::isfinite(lhs) && std::isfinite(rhs) && std::abs(lhs - rhs) <= tolerance;
    return r;
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void CsvTable::add(std::vector<double> row) {
    std::vector<std::string> cells;
    cells.reserve(row.size());
    for (double v : row) cells.push_back(fmt_double(v));
    rows.push_back(std::move(cells));
}

void CsvTable::add(const std::string& label, std::vector<double> row) {
    std::vector<std::string> cells{label};
    for (double v : row) cells.push_back(fmt_double(v));
    rows.push_back(std::move(cells));
}

std::string CsvTable::to_csv() const {
    std::ostringstream os;
    for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
    os << '\n';
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
        os << '\n';
    }
    return os.str();
}

void BatteryResult::append(BatteryResult other) {
    for (auto& r : other.records) records.push_back(std::move(r));
    for (auto& t : other.tables) tables.push_back(std::move(t));
    for (auto& [k, v] : other.summary.items()) summary[k] = v;
}

bool RunReport::all_pass() const {
    return std::all_of(result.records.begin(), result.records.end(), [](const CheckRecord& r) { return r.pass; });
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json RunReport::to_json() const {
    json recs = json::array();
    for (const auto& r : result.records) {
        recs.push_back({{"name", r.name},
                        {"lhs", finite_or_null(r.lhs)},
                        {"rhs", finite_or_null(r.rhs)},
                        {"gap", finite_or_null(r.gap())},
                        {"std_err", finite_or_null(r.std_err)},
                        {"tolerance", finite_or_null(r.tolerance)},
                        {"pass", r.pass},
                        {"note", r.note}});
    }
    json tables = json::array();
    for (const auto& t : result.tables) tables.push_back(t.name + ".csv");
    std::size_t n_pass = 0;
    for (const auto& r : result.records) n_pass += r.pass ? 1 : 0;
    return {{"version", version},
            {"command", command},
            {"check", check},
            {"config", config},
            {"records", recs},
            {"n_records", result.records.size()},
            {"n_pass", n_pass},
            {"pass", all_pass()},
            {"tables", tables},
            {"summary", result.summary},
            {"wall_time_s", wall_time_s}};
}

void write_run_report(const RunReport& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (const auto& t : r.result.tables) write_file_atomic((fs::path(out_dir) / (t.name + ".csv")).string(), t.to_csv());
    write_file_atomic((fs::path(out_dir) / "report.json").string(), r.to_json().dump(2) + "\n");
}

RunReport read_run_report(const std::string& path) {
    json j;
    try {
        j = json::parse(read_file(path));
    } catch (const json::exception& e) {
        throw std::runtime_error("unreadable report " + path + ": " + e.what());
    }
    RunReport r;
    try {
        r.version = j.at("version").get<std::string>();
        r.command = j.at("command").get<std::string>();
        r.check = j.value("check", "");
        r.config = j.value("config", json::object());
        r.wall_time_s = j.value("wall_time_s", 0.0);
        r.result.summary = j.value("summary", json::object());
        for (const auto& rec : j.at("records")) {
            CheckRecord c;
            c.name = rec.at("name").get<std::string>();
            const auto num = [&](const char* k) {
                return rec.at(k).is_null() ? std::nan("") : rec.at(k).get<double>();
            };
            c.lhs = num("lhs");
            c.rhs = num("rhs");
            c.std_err = num("std_err");
            c.tolerance = num("tolerance");
            c.pass = rec.at("pass").get<bool>();
            c.note = rec.value("note", "");
            r.result.records.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw std::runtime_error("malformed report " + path + ": " + e.what());
    }
    return r;
}

ReportSummary summarize_reports(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir);
    std::vector<fs::path> found;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file() && e.path().filename() == "report.json") found.push_back(e.path());
    std::sort(found.begin(), found.end());
    ReportSummary s;
    std::set<std::string> versions;
    for (const auto& p : found) {
        const RunReport r = read_run_report(p.string());
        versions.insert(r.version);
        std::size_t n_pass = 0;
        double worst = 0.0;
        std::string worst_name;
        for (const auto& c : r.result.records) {
            n_pass += c.pass ? 1 : 0;
            const double ratio = c.tolerance > 0.0 ? c.gap() / c.tolerance : (c.gap() > 0.0 ? INFINITY : 0.0);
            if (!(ratio <= worst)) {
                worst = ratio;
                worst_name = c.name;
            }
        }
        const bool pass = r.all_pass();
        s.all_pass = s.all_pass && pass;
        s.entries.push_back({{"path", fs::relative(p, dir).string()},
                             {"version", r.version},
                             {"command", r.command},
                             {"check", r.check},
                             {"n_records", r.result.records.size()},
                             {"n_pass", n_pass},
                             {"pass", pass},
                             {"worst_record", worst_name},
                             {"worst_gap_over_tolerance", finite_or_null(worst)}});
    }
    s.version_conflict = versions.size() > 1;
    return s;
}

json ReportSummary::to_json() const {
    return {{"reports", entries}, {"n_reports", entries.size()}, {"all_pass", all_pass},
            {"version_conflict", version_conflict}};
}

std::string ReportSummary::to_markdown() const {
    std::ostringstream os;
    os << "| report | version | command | check | passed | status | worst record | gap/tol |\n";
    os << "|---|---|---|---|---|---|---|---|\n";
    for (const auto& e : entries) {
        os << "| " << e["path"].get<std::string>() << " | " << e["version"].get<std::string>() << " | "
           << e["command"].get<std::string>() << " | " << e["check"].get<std::string>() << " | "
           << e["n_pass"].get<std::size_t>() << "/" << e["n_records"].get<std::size_t>() << " | "
           << (e["pass"].get<bool>() ? "PASS" : "FAIL") << " | " << e["worst_record"].get<std::string>() << " | "
           << e["worst_gap_over_tolerance"].dump() << " |\n";
    }
    if (version_conflict) os << "\nWARNING: reports come from different versions\n";
    return os.str();
}

}  // namespace wcalc
