#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fuselm {

inline constexpr std::string_view kVersion = "0.1.0";

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Provenance record written next to every output.
struct RunManifest {
  std::string command;
  std::vector<std::pair<std::string, std::string>> config;  // flag -> effective value
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, std::string>> inputs;  // path -> sha256
  std::vector<std::string> outputs;
  std::string started;
  std::string finished;

  void add_input(const std::filesystem::path& path);
  std::string to_json() const;
  void write(const std::filesystem::path& path) const;
};

// UTC, ISO 8601.
std::string utc_timestamp();

}  // namespace fuselm
