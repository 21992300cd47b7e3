#pragma once

// Checkpoint container:
//   line 1  "CFXCKPT 1"
//   line 2  compact JSON header {arch, seed, layers:[{name,shape}], metadata}
//   blob    little-endian float32 values in layer order
//   tail    8-byte little-endian FNV-1a-64 of everything before it
// Headers hold no wall-clock data, so equal training runs give equal bytes.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cfx/models.hpp"

namespace cfx::checkpoint {

inline constexpr std::string_view kMagic = "CFXCKPT 1";

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// `metadata_json` must be a JSON object (or empty).
std::string serialize(const models::Model& m, const std::string& metadata_json = "{}");
/// Written atomically.
void save(const models::Model& m, const std::filesystem::path& path, const std::string& metadata_json = "{}");

struct Header {
  models::Arch arch;
  std::uint64_t seed;
  std::string metadata_json;
};

Header read_header(const std::filesystem::path& path);

/// Restores parameter values into `m`. Throws ParseError on a bad checksum,
/// architecture, or layer shape.
Header load_into(models::Model& m, const std::filesystem::path& path);

template <class M>
M load(const std::filesystem::path& path) {
  M m(read_header(path).seed);
  load_into(m, path);
  return m;
}

}  // namespace cfx::checkpoint
