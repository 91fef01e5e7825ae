#include "json_config.hpp"

#include <algorithm>
#include <cmath>
#include <regex>
#include <set>
#include <sstream>

#include "prefjudge/errors.hpp"
#include "run_config_schema.hpp"

namespace prefjudge::cli {

using nlohmann::json;

namespace {

std::string scalar_string(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    return v.dump();
}

void push_item(std::vector<CLI::ConfigItem>& items, std::vector<std::string> parents, const std::string& name,
               const json& value) {
    CLI::ConfigItem item;
    item.parents = std::move(parents);
    item.name = name;
    if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar_string(v));
    } else {
        item.inputs.push_back(scalar_string(value));
    }
    items.push_back(std::move(item));
}

const CLI::Option* find_flag(const CLI::App& app, const std::string& key) {
    return app.get_option_no_throw("--" + key);
}

bool skip_option(const CLI::Option* opt) {
    const auto& names = opt->get_lnames();
    return names.empty() || names.front() == "help" || names.front() == "config" || !opt->get_configurable();
}

[[noreturn]] void fail(const std::string& where, const std::string& what) {
    throw ConfigError("config " + where + ": " + what);
}

bool has_type(const json& v, const std::string& type) {
    if (type == "object") return v.is_object();
    if (type == "array") return v.is_array();
    if (type == "string") return v.is_string();
    if (type == "boolean") return v.is_boolean();
    if (type == "null") return v.is_null();
    if (type == "integer") return v.is_number_integer() || (v.is_number_float() && std::trunc(v.get<double>()) == v.get<double>());
    if (type == "number") return v.is_number();
    return false;
}

// Covers the keywords the run config schema uses: type, enum, minimum,
// maximum, exclusive bounds, minLength, pattern, properties,
// additionalProperties, required and items.
void check_schema(const json& v, const json& schema, const std::string& where) {
    if (schema.contains("type")) {
        const auto& t = schema["type"];
        bool ok = false;
        if (t.is_array()) {
            for (const auto& x : t) ok = ok || has_type(v, x.get<std::string>());
        } else {
            ok = has_type(v, t.get<std::string>());
        }
        if (!ok) fail(where, "expected type " + t.dump());
    }
    if (schema.contains("enum")) {
        const auto& e = schema["enum"];
        if (std::find(e.begin(), e.end(), v) == e.end()) fail(where, "must be one of " + e.dump());
    }
    if (v.is_number()) {
        const double x = v.get<double>();
        if (schema.contains("minimum") && x < schema["minimum"].get<double>()) fail(where, "below minimum");
        if (schema.contains("maximum") && x > schema["maximum"].get<double>()) fail(where, "above maximum");
        if (schema.contains("exclusiveMinimum") && x <= schema["exclusiveMinimum"].get<double>())
            fail(where, "must exceed " + schema["exclusiveMinimum"].dump());
        if (schema.contains("exclusiveMaximum") && x >= schema["exclusiveMaximum"].get<double>())
            fail(where, "must be below " + schema["exclusiveMaximum"].dump());
    }
    if (v.is_string()) {
        const auto& str = v.get_ref<const std::string&>();
        if (schema.contains("minLength") && str.size() < schema["minLength"].get<std::size_t>()) fail(where, "too short");
        if (schema.contains("pattern") && !std::regex_search(str, std::regex(schema["pattern"].get<std::string>())))
            fail(where, "must match " + schema["pattern"].get<std::string>());
    }
    if (v.is_array() && schema.contains("items")) {
        for (std::size_t i = 0; i < v.size(); ++i) check_schema(v[i], schema["items"], where + "[" + std::to_string(i) + "]");
    }
    if (v.is_object()) {
        const json props = schema.value("properties", json::object());
        for (const auto& req : schema.value("required", json::array())) {
            if (!v.contains(req.get<std::string>())) fail(where, "missing required key '" + req.get<std::string>() + "'");
        }
        for (const auto& [k, child] : v.items()) {
            const auto path = where == "root" ? k : where + "." + k;
            if (props.contains(k)) {
                check_schema(child, props[k], path);
            } else if (schema.contains("additionalProperties")) {
                const auto& extra = schema["additionalProperties"];
                if (extra.is_boolean()) {
                    if (!extra.get<bool>()) fail(path, "unknown key");
                } else {
                    check_schema(child, extra, path);
                }
            }
        }
    }
}

const json& run_config_schema() {
    static const json schema = json::parse(kRunConfigSchema);
    return schema;
}

}  // namespace

std::string JsonConfig::to_config(const CLI::App* app, bool, bool, std::string) const {
    return effective_options(*app).dump(2);
}

std::vector<CLI::ConfigItem> JsonConfig::from_config(std::istream& input) const {
    json doc;
    try {
        doc = json::parse(input);
    } catch (const json::parse_error& e) {
        throw CLI::ConversionError(std::string("config file is not valid JSON: ") + e.what());
    }
    std::vector<CLI::ConfigItem> items;
    if (!doc.is_object()) return items;
    for (const auto& [key, value] : doc.items()) {
        if (kStructuredSections.contains(key) || value.is_null()) continue;
        if (value.is_object()) {
            for (const auto& [sub_key, sub_value] : value.items()) {
                if (!sub_value.is_null()) push_item(items, {key}, sub_key, sub_value);
            }
        } else {
            push_item(items, {}, key, value);
        }
    }
    return items;
}

json effective_options(const CLI::App& app) {
    json out = json::object();
    for (const CLI::Option* opt : app.get_options()) {
        if (skip_option(opt)) continue;
        const auto& name = opt->get_lnames().front();
        if (opt->count() > 0) {
            const auto& results = opt->results();
            out[name] = results.size() == 1 ? json(results.front()) : json(results);
        } else if (!opt->get_default_str().empty()) {
            out[name] = opt->get_default_str();
        }
    }
    for (const CLI::App* sub : app.get_subcommands()) out[sub->get_name()] = effective_options(*sub);
    return out;
}

void validate_config(const json& config, const CLI::App& app) {
    if (!config.is_object()) fail("root", "must be a JSON object");
    check_schema(config, run_config_schema(), "root");

    std::set<std::string> names;
    for (const auto& e : config.value("endpoints", json::array())) {
        if (!names.insert(e["name"].get<std::string>()).second) fail("endpoints", "duplicate endpoint name '" + e["name"].get<std::string>() + "'");
    }
    for (const auto& [key, value] : config.items()) {
        if (!value.is_object() || kStructuredSections.contains(key)) continue;
        const CLI::App* sub = app.get_subcommand_no_throw(key);
        if (sub == nullptr) fail(key, "unknown section");
        for (const auto& [flag, _] : value.items()) {
            const CLI::Option* opt = find_flag(*sub, flag);
            if (opt == nullptr || skip_option(opt)) fail(key + "." + flag, "not a flag of '" + key + "'");
        }
    }
}

}  // namespace prefjudge::cli
