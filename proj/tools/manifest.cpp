#include "manifest.hpp"

#include <sodium.h>

#include <array>
#include <chrono>
#include <ctime>
#include <fstream>
#include <nlohmann/json.hpp>

#include "crt/errors.hpp"

namespace crt::cli {

std::string sha256_file(const std::filesystem::path& path) {
  if (sodium_init() < 0) throw Error("libsodium failed to initialize");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string() + " for hashing");
  crypto_hash_sha256_state state;
  crypto_hash_sha256_init(&state);
  std::array<char, 1 << 16> buffer{};
  while (in) {
    in.read(buffer.data(), buffer.size());
    const auto got = in.gcount();
    if (got > 0) {
      crypto_hash_sha256_update(&state, reinterpret_cast<const unsigned char*>(buffer.data()),
                                static_cast<unsigned long long>(got));
    }
  }
  std::array<unsigned char, crypto_hash_sha256_BYTES> digest{};
  crypto_hash_sha256_final(&state, digest.data());
  std::array<char, crypto_hash_sha256_BYTES * 2 + 1> hex{};
  sodium_bin2hex(hex.data(), hex.size(), digest.data(), digest.size());
  return std::string(hex.data());
}

void write_atomic(const std::filesystem::path& path, std::string_view bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move " + tmp.string() + " to " + path.string());
  }
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::array<char, 32> buf{};
  std::strftime(buf.data(), buf.size(), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf.data();
}

std::filesystem::path manifest_path(const std::filesystem::path& artifact) {
  std::filesystem::path p = artifact;
  p += ".manifest.json";
  return p;
}

void write_manifests(const RunManifest& m) {
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& out : m.outputs) hashes[out.string()] = sha256_file(out);
  nlohmann::json inputs = nlohmann::json::array();
  for (const auto& in : m.inputs) inputs.push_back(in.string());
  nlohmann::json outputs = nlohmann::json::array();
  for (const auto& out : m.outputs) outputs.push_back(out.string());
  const nlohmann::json doc{{"command", m.command},
                           {"config", nlohmann::json::parse(m.config_json)},
                           {"seed", m.seed},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"started_at", m.started_at},
                           {"finished_at", m.finished_at},
                           {"sha256", hashes}};
  const std::string text = doc.dump(2) + "\n";
  for (const auto& out : m.outputs) write_atomic(manifest_path(out), text);
}

}  // namespace crt::cli
