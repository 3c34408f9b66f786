#include "dopacast/config.hpp"

#include <cctype>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>

#include "dopacast/errors.hpp"
#include "dopacast/io.hpp"

namespace dopacast {

namespace {

std::string env_name(const std::string& prefix, const std::vector<std::string>& path) {
  std::string name = prefix;
  for (const auto& part : path) {
    name += '_';
    for (char ch : part) name += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  }
  return name;
}

void walk(nlohmann::json& node, std::vector<std::string>& path, const std::string& prefix, const EnvLookup& lookup,
          std::vector<std::string>& hits) {
  if (node.is_object()) {
    for (auto it = node.begin(); it != node.end(); ++it) {
      path.push_back(it.key());
      walk(it.value(), path, prefix, lookup, hits);
      path.pop_back();
    }
    return;
  }
  const auto name = env_name(prefix, path);
  const char* raw = lookup(name.c_str());
  if (raw == nullptr) return;
  if (node.is_string()) {
    node = std::string(raw);
  } else {
    auto parsed = nlohmann::json::parse(raw, nullptr, false);
    if (parsed.is_discarded()) throw UsageError(name + ": cannot parse '" + raw + "'");
    node = std::move(parsed);
  }
  std::string key;
  for (const auto& p : path) key += (key.empty() ? "" : ".") + p;
  hits.push_back(key);
}

}  // namespace

std::vector<std::string> apply_env_overrides(nlohmann::json& config, const std::string& prefix,
                                             const EnvLookup& lookup) {
  const EnvLookup get = lookup ? lookup : EnvLookup([](const char* n) { return std::getenv(n); });
  std::vector<std::string> hits;
  std::vector<std::string> path;
  walk(config, path, prefix, get, hits);
  return hits;
}

std::string config_hash(const nlohmann::json& config) { return fnv1a_hex(config.dump()); }

nlohmann::json read_json_file(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path.string());
  auto j = nlohmann::json::parse(f, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed JSON in " + path.string());
  return j;
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& value) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot write " + path.string());
  f << value.dump(2) << '\n';
}

nlohmann::json to_json(const RunManifest& m) {
  return {{"command", m.command}, {"config_hash", m.config_hash}, {"seed", m.seed},
          {"inputs", m.inputs},   {"outputs", m.outputs},         {"started", m.started},
          {"finished", m.finished}, {"git_describe", m.git_describe}, {"extra", m.extra}};
}

RunManifest run_manifest_from_json(const nlohmann::json& j) {
  RunManifest m;
  m.command = j.value("command", "");
  m.config_hash = j.value("config_hash", "");
  m.seed = j.value("seed", std::uint64_t{0});
  m.inputs = j.value("inputs", std::vector<std::string>{});
  m.outputs = j.value("outputs", std::vector<std::string>{});
  m.started = j.value("started", "");
  m.finished = j.value("finished", "");
  m.git_describe = j.value("git_describe", "");
  m.extra = j.value("extra", nlohmann::json::object());
  return m;
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace dopacast
