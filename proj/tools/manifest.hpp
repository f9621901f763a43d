#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace crt::cli {

// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);

// Writes to a sibling temporary file and renames it over the target.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string utc_timestamp();

struct RunManifest {
  std::string command;
  std::string config_json = "{}";  // resolved configuration
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> inputs;
  std::vector<std::filesystem::path> outputs;
  std::string started_at;
  std::string finished_at;
};

// "<artifact>.manifest.json" beside each output, hashing every output.
std::filesystem::path manifest_path(const std::filesystem::path& artifact);
void write_manifests(const RunManifest& manifest);

}  // namespace crt::cli
