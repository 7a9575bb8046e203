#pragma once

// JSON serialization of arm models and instances, with strict unknown-key
// rejection so config typos fail loudly instead of being ignored.

#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rmab/core.hpp"

namespace rmab {

using Json = nlohmann::json;

inline void require_object_keys(const Json& j, const std::set<std::string>& required,
                                const std::set<std::string>& optional, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected a JSON object");
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!required.count(it.key()) && !optional.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
    }
    for (const std::string& k : required)
        if (!j.contains(k)) throw ConfigError(where + ": missing key '" + k + "'");
}

namespace detail {

// Kernels may be nested rows or a flat row-major array.
inline std::vector<double> parse_kernel(const Json& j, int n, const std::string& where) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(n) * n);
    if (!j.is_array()) throw ConfigError(where + ": kernel must be an array");
    if (!j.empty() && j.front().is_array()) {
        if (static_cast<int>(j.size()) != n)
            throw ConfigError(where + ": expected " + std::to_string(n) + " rows");
        for (const Json& row : j) {
            if (static_cast<int>(row.size()) != n)
                throw ConfigError(where + ": row length must equal states");
            for (const Json& v : row) flat.push_back(v.get<double>());
        }
    } else {
        if (static_cast<int>(j.size()) != n * n)
            throw ConfigError(where + ": flat kernel must have states^2 entries");
        for (const Json& v : j) flat.push_back(v.get<double>());
    }
    return flat;
}

inline std::vector<double> parse_reward(const Json& j, int n, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != n)
        throw ConfigError(where + ": reward vector must have one entry per state");
    std::vector<double> out;
    out.reserve(j.size());
    for (const Json& v : j) out.push_back(v.get<double>());
    return out;
}

}  // namespace detail

inline Json arm_to_json(const ArmModel& arm) {
    Json j;
    j["states"] = arm.num_states;
    for (int u = 0; u < 2; ++u) {
        Json rows = Json::array();
        for (int x = 0; x < arm.num_states; ++x) {
            Json row = Json::array();
            for (int y = 0; y < arm.num_states; ++y) row.push_back(arm.p(x, u, y));
            rows.push_back(row);
        }
        j[u == 0 ? "kernel0" : "kernel1"] = rows;
        Json rw = Json::array();
        for (int x = 0; x < arm.num_states; ++x) rw.push_back(arm.r(x, u));
        j[u == 0 ? "reward0" : "reward1"] = rw;
    }
    j["label"] = arm.label;
    return j;
}

inline ArmModel arm_from_json(const Json& j, const std::string& where = "arm") {
    require_object_keys(j, {"states", "kernel0", "kernel1", "reward0", "reward1"}, {"label"},
                        where);
    const int n = j.at("states").get<int>();
    if (n <= 0) throw ConfigError(where + ": states must be positive");
    ArmModel arm;
    arm.num_states = n;
    arm.kernel[0] = detail::parse_kernel(j.at("kernel0"), n, where + ".kernel0");
    arm.kernel[1] = detail::parse_kernel(j.at("kernel1"), n, where + ".kernel1");
    arm.reward[0] = detail::parse_reward(j.at("reward0"), n, where + ".reward0");
    arm.reward[1] = detail::parse_reward(j.at("reward1"), n, where + ".reward1");
    arm.label = j.value("label", std::string{});
    ValidationReport report = validate_arm(arm);
    if (!report.ok()) {
        std::string msg = where + ": invalid arm";
        if (!report.bad_rows.empty())
            msg += " (row sum " + std::to_string(report.bad_rows.front().row_sum) + " at action " +
                   std::to_string(report.bad_rows.front().action) + ", state " +
                   std::to_string(report.bad_rows.front().state) + ")";
        if (!report.rewards_finite) msg += " (non-finite reward)";
        if (!report.irreducible) msg += " (state graph not strongly connected)";
        throw ConfigError(msg);
    }
    return arm;
}

inline Json instance_to_json(const BanditInstance& inst) {
    Json j;
    Json types = Json::array();
    for (const ArmModel& m : inst.models) types.push_back(arm_to_json(m));
    j["types"] = types;
    Json counts = Json::array();
    for (int c : inst.type_counts()) counts.push_back(c);
    j["counts"] = counts;
    j["budget"] = inst.budget;
    return j;
}

inline BanditInstance instance_from_json(const Json& j, const std::string& where = "instance") {
    require_object_keys(j, {"types", "counts", "budget"}, {}, where);
    if (!j.at("types").is_array() || j.at("types").empty())
        throw ConfigError(where + ": types must be a nonempty array");
    if (!j.at("counts").is_array() || j.at("counts").size() != j.at("types").size())
        throw ConfigError(where + ": counts must parallel types");
    std::vector<std::pair<ArmModel, int>> types;
    for (std::size_t t = 0; t < j.at("types").size(); ++t) {
        ArmModel arm = arm_from_json(j.at("types")[t], where + ".types[" + std::to_string(t) + "]");
        const int c = j.at("counts")[t].get<int>();
        if (c <= 0) throw ConfigError(where + ": counts must be positive");
        types.emplace_back(std::move(arm), c);
    }
    const int budget = j.at("budget").get<int>();
    try {
        return BanditInstance::from_types(std::move(types), budget);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

inline Json load_json(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open: " + path);
    Json j;
    try {
        f >> j;
    } catch (const Json::parse_error& e) {
        throw ConfigError(std::string("JSON parse error in ") + path + ": " + e.what());
    }
    return j;
}

inline void save_json(const Json& j, const std::string& path, int indent = 2) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for writing: " + path);
    f << j.dump(indent) << '\n';
    if (!f) throw IoError("write failed: " + path);
}

inline ArmModel load_arm(const std::string& path) { return arm_from_json(load_json(path)); }

inline void save_arm(const ArmModel& arm, const std::string& path) {
    save_json(arm_to_json(arm), path);
}

inline BanditInstance load_instance(const std::string& path) {
    return instance_from_json(load_json(path));
}

}  // namespace rmab
