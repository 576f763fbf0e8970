#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace baffle {

/// Lowercase-hex SHA-256 digest.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Integrity record for a released dataset file: SHA-256 over the exact
/// file bytes plus the byte length.
struct HashManifest {
  std::string digest;          // lowercase hex
  std::uint64_t bytes = 0;
  std::uint32_t version = 1;

  bool operator==(const HashManifest&) const = default;
};

HashManifest hash_manifest(const std::filesystem::path& path);
bool verify(const std::filesystem::path& path, const HashManifest& manifest);

/// Manifest JSON file: {"digest": "...", "bytes": N, "version": 1}.
void save_hash_manifest(const HashManifest& manifest,
                        const std::filesystem::path& path);
HashManifest load_hash_manifest(const std::filesystem::path& path);

}  // namespace baffle
