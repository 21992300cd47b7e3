#include "cfx/checkpoint.hpp"

#include <bit>
#include <cstring>

#include "cfx/error.hpp"
#include "cfx/io.hpp"
#include "json.hpp"

namespace cfx::checkpoint {
namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint blobs assume a little-endian host");

json header_json(const models::Model& m, const std::string& metadata_json) {
  json layers = json::array();
  for (const auto& p : m.parameters()) layers.push_back({{"name", p->name()}, {"shape", p->value().shape()}});
  json meta = metadata_json.empty() ? json::object() : json::parse(metadata_json);
  if (!meta.is_object()) throw ConfigError("checkpoint metadata must be a JSON object");
  return {{"arch", models::arch_name(m.arch())}, {"seed", m.seed()}, {"layers", layers}, {"metadata", meta}};
}

struct Parsed {
  json header;
  std::string_view blob;
};

Parsed parse(const std::string& bytes, const std::string& name) {
  const std::size_t magic_end = bytes.find('\n');
  if (magic_end == std::string::npos || std::string_view(bytes).substr(0, magic_end) != kMagic)
    throw ParseError(name + ": not a checkpoint (bad magic at byte offset 0)");
  const std::size_t header_end = bytes.find('\n', magic_end + 1);
  if (header_end == std::string::npos)
    throw ParseError(name + ": truncated header at byte offset " + std::to_string(magic_end + 1));
  if (bytes.size() < header_end + 1 + 8)
    throw ParseError(name + ": missing checksum at byte offset " + std::to_string(bytes.size()));
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  std::memcpy(&stored, bytes.data() + body, 8);
  if (fnv1a64(std::string_view(bytes).substr(0, body)) != stored)
    throw ParseError(name + ": checksum mismatch at byte offset " + std::to_string(body));
  Parsed p;
  try {
    p.header = json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
  } catch (const json::exception& e) {
    throw ParseError(name + ": malformed header at byte offset " + std::to_string(magic_end + 1) + ": " + e.what());
  }
  p.blob = std::string_view(bytes).substr(header_end + 1, body - header_end - 1);
  return p;
}

}  // namespace

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string serialize(const models::Model& m, const std::string& metadata_json) {
  std::string out(kMagic);
  out += '\n';
  out += header_json(m, metadata_json).dump();
  out += '\n';
  for (const auto& p : m.parameters())
    out.append(reinterpret_cast<const char*>(p->value().ptr()), static_cast<std::size_t>(p->value().size()) * 4);
  const std::uint64_t h = fnv1a64(out);
  out.append(reinterpret_cast<const char*>(&h), 8);
  return out;
}

void save(const models::Model& m, const std::filesystem::path& path, const std::string& metadata_json) {
  io::write_atomic(path, serialize(m, metadata_json));
}

Header read_header(const std::filesystem::path& path) {
  const std::string bytes = io::read_text(path);
  const Parsed p = parse(bytes, path.string());
  try {
    return {models::arch_from_name(p.header.at("arch").get<std::string>()), p.header.at("seed").get<std::uint64_t>(),
            p.header.at("metadata").dump()};
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": header field missing: " + e.what());
  }
}

Header load_into(models::Model& m, const std::filesystem::path& path) {
  const std::string bytes = io::read_text(path);
  const Parsed p = parse(bytes, path.string());
  const Header h = read_header(path);
  if (h.arch != m.arch())
    throw ParseError(path.string() + ": holds a " + models::arch_name(h.arch) + ", expected " + models::arch_name(m.arch()));
  const json& layers = p.header.at("layers");
  const auto& params = m.parameters();
  if (layers.size() != params.size())
    throw ParseError(path.string() + ": " + std::to_string(layers.size()) + " layers, model has " +
                     std::to_string(params.size()));
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto shape = layers[i].at("shape").get<Shape>();
    if (layers[i].at("name").get<std::string>() != params[i]->name() || shape != params[i]->value().shape())
      throw ParseError(path.string() + ": layer " + std::to_string(i) + " is " + layers[i].dump() + ", expected " +
                       params[i]->name() + " " + shape_str(params[i]->value().shape()));
    offset += static_cast<std::size_t>(shape_size(shape)) * 4;
  }
  if (offset != p.blob.size())
    throw ParseError(path.string() + ": blob has " + std::to_string(p.blob.size()) + " bytes, layers need " +
                     std::to_string(offset));
  offset = 0;
  for (const auto& param : params) {
    const auto n = static_cast<std::size_t>(param->value().size()) * 4;
    std::memcpy(param->value().ptr(), p.blob.data() + offset, n);
    param->adam() = AdamState{};
    offset += n;
  }
  return h;
}

}  // namespace cfx::checkpoint
