#include "wcalc/run_config.hpp"

#include <cmath>
#include <cstdlib>
#include <set>
#include <sstream>

#include "wcalc/io.hpp"

namespace wcalc {

using nlohmann::json;

namespace {

const char* const schema_text =
#include "config_schema.inc"
    ;

std::string kind_of(const json& v) {
    switch (v.type()) {
        case json::value_t::null: return "null";
        case json::value_t::boolean: return "boolean";
        case json::value_t::string: return "string";
        case json::value_t::array: return "array";
        case json::value_t::object: return "object";
        case json::value_t::number_float: return "number";
        default: return "integer";
    }
}

bool has_type(const json& v, const std::string& t) {
    if (t == "number") return v.is_number();
    if (t == "integer") {
        if (v.is_number_integer()) return true;
        if (v.is_number_float()) {
            const double d = v.get<double>();
            return std::isfinite(d) && std::floor(d) == d;
        }
        return false;
    }
    return kind_of(v) == t;
}

class Validator {
public:
    explicit Validator(const json& root) : root_(root) {}

    void check(const json& v, const json& s, const std::string& at, std::vector<std::string>& out) const {
        static const std::set<std::string> ignored{"$schema", "$id", "title", "description", "$defs", "default"};
        static const std::set<std::string> known{"type",     "enum",         "const",       "required",
                                                 "properties", "additionalProperties", "items", "minItems",
                                                 "maxItems", "minimum",      "maximum",     "exclusiveMinimum",
                                                 "exclusiveMaximum", "minLength", "oneOf", "$ref", "if", "then"};
        for (const auto& [k, _] : s.items())
            if (!ignored.count(k) && !known.count(k))
                throw std::logic_error("schema keyword '" + k + "' is not supported by the validator");
        const auto fail = [&](const std::string& msg) { out.push_back((at.empty() ? "/" : at) + ": " + msg); };

        if (s.contains("$ref")) {
            check(v, resolve(s["$ref"].get<std::string>()), at, out);
        }
        if (s.contains("type")) {
            const json& t = s["type"];
            bool ok = false;
            if (t.is_string()) ok = has_type(v, t.get<std::string>());
            else
                for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
            if (!ok) {
                fail("expected " + t.dump() + ", got " + kind_of(v));
                return;
            }
        }
        if (s.contains("const") && !equal(v, s["const"])) fail("must equal " + s["const"].dump());
        if (s.contains("enum")) {
            bool ok = false;
            for (const auto& e : s["enum"]) ok = ok || equal(v, e);
            if (!ok) fail(v.dump() + " is not one of " + s["enum"].dump());
        }
        if (v.is_number()) {
            const double d = v.get<double>();
            if (s.contains("minimum") && d < s["minimum"].get<double>()) fail("below minimum " + s["minimum"].dump());
            if (s.contains("maximum") && d > s["maximum"].get<double>()) fail("above maximum " + s["maximum"].dump());
            if (s.contains("exclusiveMinimum") && !(d > s["exclusiveMinimum"].get<double>()))
                fail("must exceed " + s["exclusiveMinimum"].dump());
            if (s.contains("exclusiveMaximum") && !(d < s["exclusiveMaximum"].get<double>()))
                fail("must be below " + s["exclusiveMaximum"].dump());
        }
        if (v.is_string() && s.contains("minLength") &&
            v.get<std::string>().size() < s["minLength"].get<std::size_t>())
            fail("string too short");
        if (v.is_array()) {
            if (s.contains("minItems") && v.size() < s["minItems"].get<std::size_t>())
                fail("needs at least " + s["minItems"].dump() + " items");
            if (s.contains("maxItems") && v.size() > s["maxItems"].get<std::size_t>())
                fail("allows at most " + s["maxItems"].dump() + " items");
            if (s.contains("items"))
                for (std::size_t i = 0; i < v.size(); ++i) check(v[i], s["items"], at + "/" + std::to_string(i), out);
        }
        if (v.is_object()) {
            if (s.contains("required"))
                for (const auto& r : s["required"])
                    if (!v.contains(r.get<std::string>())) fail("missing required property '" + r.get<std::string>() + "'");
            const json props = s.value("properties", json::object());
            for (const auto& [k, x] : v.items()) {
                if (props.contains(k))
                    check(x, props[k], at + "/" + k, out);
                else if (s.contains("additionalProperties") && s["additionalProperties"] == false)
                    fail("unknown property '" + k + "'");
            }
        }
        if (s.contains("oneOf")) {
            std::size_t matches = 0;
            std::vector<std::string> best;
            for (const auto& alt : s["oneOf"]) {
                std::vector<std::string> sub;
                check(v, alt, at, sub);
                if (sub.empty()) ++matches;
                else if (best.empty() || sub.size() < best.size()) best = sub;
            }
            if (matches == 0) {
                fail("matches no alternative");
                out.insert(out.end(), best.begin(), best.end());
            } else if (matches > 1) {
                fail("matches more than one alternative");
            }
        }
        if (s.contains("if")) {
            std::vector<std::string> sub;
            check(v, s["if"], at, sub);
            if (sub.empty() && s.contains("then")) check(v, s["then"], at, out);
        }
    }

private:
    const json& resolve(const std::string& ref) const {
        if (ref.rfind("#/", 0) != 0) throw std::logic_error("only local schema references are supported: " + ref);
        return root_.at(json::json_pointer(ref.substr(1)));
    }
    static bool equal(const json& a, const json& b) {
        if (a.is_number() && b.is_number()) return a.get<double>() == b.get<double>();
        return a == b;
    }
    const json& root_;
};

std::uint64_t parse_seed(const std::string& s, const std::string& what) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(what + ": seed must be a non-negative integer, got '" + s + "'");
    try {
        return std::stoull(s);
    } catch (const std::exception&) {
        throw ConfigError(what + ": seed out of range: '" + s + "'");
    }
}

std::vector<double> number_list(const json& j) {
    std::vector<double> v;
    for (const auto& x : j) v.push_back(x.get<double>());
    return v;
}

}  // namespace

const json& config_schema() {
    static const json schema = json::parse(schema_text);
    return schema;
}

std::vector<std::string> schema_errors(const json& doc, const json& schema) {
    std::vector<std::string> out;
    Validator(schema).check(doc, schema, "", out);
    return out;
}

double RunConfig::option(const std::string& key, double fallback) const {
    return options.contains(key) ? options[key].get<double>() : fallback;
}

std::vector<double> RunConfig::option_list(const std::string& key, std::vector<double> fallback) const {
    return options.contains(key) ? number_list(options[key]) : fallback;
}

ConfigOverrides env_overrides() {
    ConfigOverrides ov;
    if (const char* s = std::getenv("WCALC_SEED"); s && *s) ov.seed = parse_seed(s, "WCALC_SEED");
    if (const char* d = std::getenv("WCALC_OUT_DIR"); d && *d) ov.out_dir = d;
    return ov;
}

ConfigOverrides merge_overrides(const ConfigOverrides& primary, const ConfigOverrides& fallback) {
    ConfigOverrides m;
    m.seed = primary.seed ? primary.seed : fallback.seed;
    m.out_dir = primary.out_dir ? primary.out_dir : fallback.out_dir;
    return m;
}

RunConfig parse_run_config(json doc, const std::string& check, const ConfigOverrides& ov) {
    if (!doc.is_object()) throw ConfigError("configuration must be a JSON object");
    if (doc.contains("check") && doc["check"].is_string() && doc["check"].get<std::string>() != check)
        throw ConfigError("configuration is for '" + doc["check"].get<std::string>() + "' but '" + check +
                          "' was requested");
    doc["check"] = check;
    if (ov.seed) doc["seed"] = *ov.seed;
    if (ov.out_dir) doc["out_dir"] = *ov.out_dir;
    const auto errs = schema_errors(doc, config_schema());
    if (!errs.empty()) {
        std::ostringstream msg;
        msg << "schema violation (" << errs.size() << "):";
        for (const auto& e : errs) msg << "\n  " << e;
        throw ConfigError(msg.str());
    }

    RunConfig c;
    c.check = check;
    c.seed = doc.value("seed", std::uint64_t{1});
    c.n_paths = doc["n_paths"].get<std::size_t>();
    c.n_steps = doc["grid"]["n_steps"].get<std::size_t>();
    c.horizon = doc["grid"].value("horizon", 1.0);
    if (doc.contains("functionals"))
        for (const auto& f : doc["functionals"]) c.functionals.push_back(f.get<std::string>());
    if (doc.contains("curves")) c.curves = doc["curves"];
    if (doc.contains("lambdas")) c.lambdas = number_list(doc["lambdas"]);
    c.h_step = doc.value("h_step", 1e-3);
    c.out_dir = doc.value("out_dir", std::string("wcalc-out"));
    if (doc.contains("tolerances")) {
        const json& t = doc["tolerances"];
        c.tol.n_std_err = t.value("n_std_err", c.tol.n_std_err);
        c.tol.fd_constant = t.value("fd_constant", c.tol.fd_constant);
        c.tol.kernel_constant = t.value("kernel_constant", c.tol.kernel_constant);
        if (t.contains("fixed")) c.tol.fixed = t["fixed"].get<double>();
    }
    if (doc.contains("options")) c.options = doc["options"];
    if (doc.contains("pipeline")) c.pipeline = doc["pipeline"];

    // Echo with defaults filled in.
    doc["seed"] = c.seed;
    doc["grid"]["horizon"] = c.horizon;
    doc["h_step"] = c.h_step;
    doc["out_dir"] = c.out_dir;
    doc["tolerances"]["n_std_err"] = c.tol.n_std_err;
    doc["tolerances"]["fd_constant"] = c.tol.fd_constant;
    doc["tolerances"]["kernel_constant"] = c.tol.kernel_constant;
    c.echo = std::move(doc);
    return c;
}

RunConfig load_run_config(const std::string& path, const std::string& check, const ConfigOverrides& ov) {
    json doc;
    try {
        doc = json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw ConfigError("cannot parse " + path + ": " + e.what());
    } catch (const std::runtime_error& e) {
        throw ConfigError(e.what());
    }
    return parse_run_config(std::move(doc), check, ov);
}

StepProcess build_step_process(const json& spec, const TimeGrid& grid) {
    const std::string type = spec.at("type").get<std::string>();
    if (type == "constant") return constant_process(grid, spec.at("value").get<double>());
    if (type == "table") {
        std::vector<double> values = number_list(spec.at("values"));
        if (values.size() == 1) values.assign(grid.n_steps(), values[0]);
        if (values.size() != grid.n_steps())
            throw ConfigError("table process has " + std::to_string(values.size()) + " values for " +
                              std::to_string(grid.n_steps()) + " steps");
        return table_process(grid, spec.value("scale", 1.0), std::move(values));
    }
    if (type == "smooth")
        return smooth_process(grid, spec.at("name").get<std::string>(), spec.value("amplitude", 1.0),
                              spec.value("lags", std::size_t{1}));
    throw ConfigError("unknown process type '" + type + "'");
}

DensityCurve build_curve(const json& spec, const TimeGrid& grid) {
    const std::string kind = spec.at("kind").get<std::string>();
    if (kind == "exponential-family") {
        const StepProcess base =
            spec.contains("base") ? build_step_process(spec["base"], grid) : constant_process(grid, 0.0);
        const StepProcess theta = build_step_process(spec.at("theta"), grid);
        const double lo = spec.value("lo", -1.0), hi = spec.value("hi", 2.0);
        if (!(lo < hi)) throw ConfigError("curve interval must satisfy lo < hi");
        return exponential_family_curve(linear_family(base, theta, lo, hi));
    }
    if (kind == "mixture")
        return mixture_curve(named_density(grid, spec.at("L0").get<std::string>()),
                             named_density(grid, spec.at("L1").get<std::string>()));
    if (kind == "constant") return constant_curve(named_density(grid, spec.at("density").get<std::string>()));
    throw ConfigError("unknown curve kind '" + kind + "'");
}

std::vector<double> curve_lambdas(const json& spec, const DensityCurve& curve, const std::vector<double>& run_lambdas,
                                  double h_step) {
    std::vector<double> out;
    if (spec.contains("lambdas")) {
        out = number_list(spec["lambdas"]);
    } else {
        for (double l : run_lambdas)
            if (l - h_step >= curve.lo && l + h_step <= curve.hi) out.push_back(l);
        if (out.empty())
            for (double f : {0.25, 0.5, 0.75}) out.push_back(curve.lo + f * (curve.hi - curve.lo));
    }
    for (double l : out)
        if (l - h_step < curve.lo || l + h_step > curve.hi)
            throw ConfigError("lambda " + std::to_string(l) + " too close to the curve's parameter interval");
    return out;
}

}  // namespace wcalc
