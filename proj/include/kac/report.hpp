#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <string>

#include <json.hpp>
#include "errors.hpp"

namespace kac {

inline constexpr const char* kVersion = "1.0.0";

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

/// Stable hash of a configuration (keys are sorted by nlohmann::json).
inline std::string config_hash(const nlohmann::json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config.dump())));
  return buf;
}

/// Provenance block attached to every artifact.
inline nlohmann::json provenance(const nlohmann::json& config, std::uint64_t seed) {
  return {{"config", config},
          {"config_hash", config_hash(config)},
          {"seed", seed},
          {"version", kVersion}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ArgumentError("write_json: cannot open " + path);
  out << j.dump(2) << "\n";
}

}  // namespace kac
