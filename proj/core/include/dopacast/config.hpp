#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dopacast {

using EnvLookup = std::function<const char*(const char*)>;

/// Replaces each leaf `a.b_c` of `config` with the value of PREFIX_A_B_C when
/// set. Values parse as JSON when possible; string leaves take the raw text.
/// Returns the overridden key paths.
std::vector<std::string> apply_env_overrides(nlohmann::json& config, const std::string& prefix = "DOPACAST",
                                             const EnvLookup& lookup = nullptr);

/// Content hash of the canonical (sorted-key) JSON dump.
std::string config_hash(const nlohmann::json& config);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const nlohmann::json& value);

struct RunManifest {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;
  std::string git_describe;
  nlohmann::json extra = nlohmann::json::object();
};

nlohmann::json to_json(const RunManifest& m);
RunManifest run_manifest_from_json(const nlohmann::json& j);

/// UTC timestamp, ISO 8601, second resolution.
std::string utc_now();

}  // namespace dopacast
