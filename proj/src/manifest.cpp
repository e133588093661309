#include "fuselm/manifest.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <json.hpp>
#include <memory>

#include "fuselm/binary_io.hpp"
#include "fuselm/error.hpp"

namespace fuselm {

std::string sha256_hex(std::string_view bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("sha256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 15];
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(binary::read_file(path)); }

void RunManifest::add_input(const std::filesystem::path& path) {
  inputs.emplace_back(path.string(), sha256_file(path));
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["tool"] = "fuselm";
  j["version"] = kVersion;
  j["command"] = command;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [k, v] : config) cfg[k] = v;
  j["config"] = std::move(cfg);
  j["seed"] = seed;
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [p, d] : inputs) in[p] = d;
  j["inputs"] = std::move(in);
  j["outputs"] = outputs;
  j["started"] = started;
  j["finished"] = finished;
  return j.dump(2) + "\n";
}

void RunManifest::write(const std::filesystem::path& path) const { binary::write_file_atomic(path, to_json()); }

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace fuselm
