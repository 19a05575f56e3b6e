#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "pancut/errors.hpp"

// ============================================================================
// Run manifest: everything needed to replay an invocation byte-for-byte —
// the subcommand, every flag after defaulting, the seed, and the input and
// output paths.  Timings ride along for bookkeeping but are ignored on
// replay.
// ============================================================================

namespace pancut {

inline constexpr const char* kToolVersion = "0.1.0";

struct RunManifest {
    std::string tool_version = kToolVersion;
    std::string subcommand;
    std::uint64_t seed = 0;
    nlohmann::json options = nlohmann::json::object();   // flag -> value, post-default
    nlohmann::json inputs = nlohmann::json::object();    // role -> path
    nlohmann::json outputs = nlohmann::json::object();   // role -> path
    double wall_seconds = 0.0;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["tool_version"] = tool_version;
        j["subcommand"] = subcommand;
        j["seed"] = seed;
        j["options"] = options;
        j["inputs"] = inputs;
        j["outputs"] = outputs;
        j["wall_seconds"] = wall_seconds;
        return j;
    }

    static RunManifest from_json(const nlohmann::json& j) {
        RunManifest m;
        try {
            m.tool_version = j.at("tool_version").get<std::string>();
            m.subcommand = j.at("subcommand").get<std::string>();
            m.seed = j.at("seed").get<std::uint64_t>();
            m.options = j.at("options");
            m.inputs = j.at("inputs");
            m.outputs = j.at("outputs");
            m.wall_seconds = j.value("wall_seconds", 0.0);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError(std::string("manifest: ") + e.what());
        }
        return m;
    }

    void save(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw FormatError("cannot write manifest: " + path);
        out << to_json().dump(2) << "\n";
    }

    static RunManifest load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw FormatError("cannot open manifest: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("manifest " + path + ": " + e.what());
        }
        return from_json(j);
    }
};

} // namespace pancut
