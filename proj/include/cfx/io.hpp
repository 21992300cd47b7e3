#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace cfx::io {

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path);
std::string read_text(const std::filesystem::path& path);

/// Writes to a sibling temp file, fsyncs, then renames over `path`.
/// Readers never observe a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view bytes);

/// Keeps large tensor buffers on the heap instead of per-allocation mmap, so
/// freed pages are reused without fresh page faults. Call once at startup.
void tune_allocator();

}  // namespace cfx::io
