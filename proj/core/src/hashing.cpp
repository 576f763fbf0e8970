#include "baffle/hashing.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"

namespace baffle {
namespace {

std::string to_hex(const unsigned char* digest, unsigned len) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(2 * len, '0');
  for (unsigned i = 0; i < len; ++i) {
    out[2 * i] = kHex[digest[i] >> 4];
    out[2 * i + 1] = kHex[digest[i] & 0xF];
  }
  return out;
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned len = 0;
  if (EVP_Digest(data, size, digest.data(), &len, EVP_sha256(), nullptr) != 1) {
    throw NumericalError("SHA-256 computation failed");
  }
  return to_hex(digest.data(), len);
}

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open file: " + path.string());
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw NumericalError("SHA-256 context allocation failed");
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    const std::streamsize got = in.gcount();
    if (got > 0) EVP_DigestUpdate(ctx, buf.data(), static_cast<size_t>(got));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned len = 0;
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  return to_hex(digest.data(), len);
}

HashManifest hash_manifest(const std::filesystem::path& path) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat file: " + path.string());
  HashManifest m;
  m.digest = sha256_file(path);
  m.bytes = size;
  return m;
}

bool verify(const std::filesystem::path& path, const HashManifest& manifest) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat file: " + path.string());
  if (size != manifest.bytes) return false;
  return sha256_file(path) == manifest.digest;
}

void save_hash_manifest(const HashManifest& manifest,
                        const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["digest"] = manifest.digest;
  j["bytes"] = manifest.bytes;
  j["version"] = manifest.version;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << j.dump(2) << '\n';
}

HashManifest load_hash_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  nlohmann::json j;
  try {
    in >> j;
    HashManifest m;
    m.digest = j.at("digest").get<std::string>();
    m.bytes = j.at("bytes").get<std::uint64_t>();
    m.version = j.at("version").get<std::uint32_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad manifest json " + path.string() + ": " + e.what());
  }
}

}  // namespace baffle
