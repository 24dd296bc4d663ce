#pragma once

// Flat key=value record of one CLI run.

#include <d3/error.hpp>
#include <d3/image.hpp>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <map>
#include <sstream>
#include <string>

namespace d3 {

inline constexpr const char* kToolVersion = "1.0.0";

struct RunManifest {
  std::string command;
  std::map<std::string, std::string> config;  // every resolved flag
  std::string started;
  std::string finished;

  /// Keys that vary between otherwise identical runs.
  static bool is_volatile(const std::string& key) { return key == "started" || key == "finished"; }

  std::string to_text() const {
    std::ostringstream os;
    os << "command=" << command << "\n";
    os << "tool_version=" << kToolVersion << "\n";
    for (const auto& [k, v] : config) os << "config." << k << "=" << v << "\n";
    os << "started=" << started << "\n";
    os << "finished=" << finished << "\n";
    return os.str();
  }

  static RunManifest parse(const std::string& text) {
    RunManifest m;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ParseError(ParseErrorKind::malformed_header, "manifest line without '=': " + line);
      const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
      if (key == "command") m.command = value;
      else if (key == "started") m.started = value;
      else if (key == "finished") m.finished = value;
      else if (key.rfind("config.", 0) == 0) m.config[key.substr(7)] = value;
    }
    return m;
  }
};

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_manifest(const RunManifest& m, const std::filesystem::path& path) { write_file(path, m.to_text()); }

}  // namespace d3
