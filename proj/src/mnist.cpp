#include "cfx/mnist.hpp"

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <numeric>

#include "cfx/error.hpp"
#include "cfx/io.hpp"

namespace cfx::mnist {
namespace {

constexpr std::uint8_t kTypeU8 = 0x08;
constexpr std::uint8_t kTypeF32 = 0x0D;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 34;

std::vector<std::uint8_t> inflate_gzip(const std::vector<std::uint8_t>& packed, const std::string& name) {
  z_stream zs{};
  if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw ParseError(name + ": zlib init failed");
  std::vector<std::uint8_t> out;
  std::uint8_t chunk[1 << 16];
  zs.next_in = const_cast<Bytef*>(packed.data());
  zs.avail_in = static_cast<uInt>(packed.size());
  int rc = Z_OK;
  while (rc != Z_STREAM_END) {
    zs.next_out = chunk;
    zs.avail_out = sizeof chunk;
    rc = inflate(&zs, Z_NO_FLUSH);
    if (rc != Z_OK && rc != Z_STREAM_END) {
      const auto offset = zs.total_in;
      inflateEnd(&zs);
      throw ParseError(name + ": corrupt gzip stream at compressed byte offset " + std::to_string(offset));
    }
    out.insert(out.end(), chunk, chunk + (sizeof chunk - zs.avail_out));
    if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
      const auto offset = zs.total_in;
      inflateEnd(&zs);
      throw ParseError(name + ": truncated gzip stream at compressed byte offset " + std::to_string(offset));
    }
  }
  inflateEnd(&zs);
  return out;
}

std::uint32_t be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
}

void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xff));
}

struct Idx {
  std::uint8_t type;
  std::vector<std::int64_t> dims;
  const std::uint8_t* payload;
};

/// Validates the header and that the payload is complete. `bytes` must outlive the result.
Idx parse_header(const std::vector<std::uint8_t>& bytes, const std::string& name) {
  if (bytes.size() < 4) throw ParseError(name + ": truncated header at byte offset " + std::to_string(bytes.size()));
  if (bytes[0] != 0 || bytes[1] != 0)
    throw ParseError(name + ": bad IDX magic at byte offset 0");
  Idx idx{bytes[2], {}, nullptr};
  const std::size_t rank = bytes[3];
  if (idx.type != kTypeU8 && idx.type != kTypeF32)
    throw ParseError(name + ": unsupported IDX element type at byte offset 2");
  if (rank == 0) throw ParseError(name + ": zero-rank IDX at byte offset 3");
  const std::size_t header = 4 + 4 * rank;
  if (bytes.size() < header)
    throw ParseError(name + ": truncated dimension list at byte offset " + std::to_string(bytes.size()));
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    const std::uint32_t d = be32(bytes.data() + 4 + 4 * i);
    if (d == 0) throw ParseError(name + ": zero dimension at byte offset " + std::to_string(4 + 4 * i));
    count *= d;
    if (count > kMaxElements)
      throw ParseError(name + ": dimension overflow at byte offset " + std::to_string(4 + 4 * i));
    idx.dims.push_back(d);
  }
  const std::uint64_t width = idx.type == kTypeU8 ? 1 : 4;
  if (bytes.size() < header + count * width)
    throw ParseError(name + ": truncated payload at byte offset " + std::to_string(bytes.size()) + ", expected " +
                     std::to_string(header + count * width) + " bytes");
  idx.payload = bytes.data() + header;
  return idx;
}

void expect_magic(const Idx& idx, std::uint8_t type, std::size_t rank, std::uint32_t magic, const std::string& name) {
  if (idx.type != type || idx.dims.size() != rank) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08X", magic);
    throw ParseError(name + ": expected magic " + buf + " at byte offset 0");
  }
}

std::string header_bytes(std::uint8_t type, const Shape& dims) {
  std::string out{'\0', '\0', static_cast<char>(type), static_cast<char>(dims.size())};
  for (auto d : dims) put_be32(out, static_cast<std::uint32_t>(d));
  return out;
}

}  // namespace

std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path) {
  auto bytes = io::read_bytes(path);
  if (bytes.size() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b) return inflate_gzip(bytes, path.string());
  return bytes;
}

Tensor read_idx_images(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const auto idx = parse_header(bytes, path.string());
  expect_magic(idx, kTypeU8, 3, 0x803, path.string());
  Tensor t({idx.dims[0], idx.dims[1], idx.dims[2], 1});
  float* out = t.ptr();
  for (std::int64_t i = 0; i < t.size(); ++i) out[i] = static_cast<float>(idx.payload[i]) / 255.0f;
  return t;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const auto idx = parse_header(bytes, path.string());
  expect_magic(idx, kTypeU8, 1, 0x801, path.string());
  return std::vector<int>(idx.payload, idx.payload + idx.dims[0]);
}

Tensor read_idx_floats(const std::filesystem::path& path) {
  const auto bytes = read_maybe_gzip(path);
  const auto idx = parse_header(bytes, path.string());
  if (idx.type != kTypeF32) throw ParseError(path.string() + ": expected float32 IDX at byte offset 2");
  Tensor t(idx.dims);
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(be32(idx.payload + 4 * i));
  return t;
}

void write_idx_images(const std::filesystem::path& path, const Tensor& images) {
  if (images.rank() != 4 || images.dim(3) != 1)
    throw DimensionError("write_idx_images: expected (N,H,W,1), got " + shape_str(images.shape()));
  std::string out = header_bytes(kTypeU8, {images.dim(0), images.dim(1), images.dim(2)});
  out.reserve(out.size() + static_cast<std::size_t>(images.size()));
  for (float v : images.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw DimensionError("write_idx_images: pixel outside [0,1]");
    out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::lround(v * 255.0f))));
  }
  io::write_atomic(path, out);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels) {
  std::string out = header_bytes(kTypeU8, {static_cast<std::int64_t>(labels.size())});
  for (int l : labels) {
    if (l < 0 || l > 255) throw DimensionError("write_idx_labels: label does not fit a byte");
    out.push_back(static_cast<char>(l));
  }
  io::write_atomic(path, out);
}

void write_idx_floats(const std::filesystem::path& path, const Tensor& values) {
  std::string out = header_bytes(kTypeF32, values.shape());
  for (float v : values.data()) put_be32(out, std::bit_cast<std::uint32_t>(v));
  io::write_atomic(path, out);
}

Dataset load(const std::filesystem::path& dir, Split split) {
  const std::string prefix = split == Split::Train ? "train" : "t10k";
  auto locate = [&](const std::string& stem) {
    for (const auto& name : {stem, stem + ".gz"})
      if (std::filesystem::exists(dir / name)) return dir / name;
    throw Error("MNIST file " + (dir / stem).string() + "[.gz] not found");
  };
  Dataset d{read_idx_images(locate(prefix + "-images-idx3-ubyte")),
            read_idx_labels(locate(prefix + "-labels-idx1-ubyte"))};
  d.validate();
  return d;
}

void Dataset::validate() const {
  if (images.rank() != 4 || images.dim(0) != size())
    throw DimensionError("dataset: " + std::to_string(size()) + " labels for images " + shape_str(images.shape()));
  for (int l : labels)
    if (l < 0 || l >= kClasses) throw ParseError("dataset: label " + std::to_string(l) + " outside 0..9");
}

Tensor gather(const Tensor& t, std::span<const std::int64_t> rows) {
  Shape shape = t.shape();
  const std::int64_t stride = t.size() / shape[0];
  shape[0] = static_cast<std::int64_t>(rows.size());
  std::vector<float> out(static_cast<std::size_t>(shape[0] * stride));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] < 0 || rows[r] >= t.dim(0)) throw DimensionError("gather: row " + std::to_string(rows[r]) + " out of range");
    std::memcpy(out.data() + r * stride, t.ptr() + rows[r] * stride, static_cast<std::size_t>(stride) * sizeof(float));
  }
  return Tensor(std::move(shape), std::move(out));
}

Dataset Dataset::subset(std::span<const std::int64_t> indices) const {
  Dataset d{gather(images, indices), {}};
  d.labels.reserve(indices.size());
  for (auto i : indices) d.labels.push_back(labels[static_cast<std::size_t>(i)]);
  return d;
}

Dataset Dataset::head(std::int64_t n) const {
  if (n <= 0 || n > size()) throw ConfigError("head: " + std::to_string(n) + " rows requested from " + std::to_string(size()));
  return {images.slice_rows(0, n), std::vector<int>(labels.begin(), labels.begin() + n)};
}

Tensor one_hot(int label, int k) {
  if (k <= 0 || label < 0 || label >= k)
    throw ConfigError("one_hot: label " + std::to_string(label) + " outside [0," + std::to_string(k) + ")");
  Tensor t({k});
  t[label] = 1.0f;
  return t;
}

Tensor one_hot_rows(std::span<const int> labels, int k) {
  Tensor t({static_cast<std::int64_t>(labels.size()), k});
  for (std::size_t r = 0; r < labels.size(); ++r) {
    if (labels[r] < 0 || labels[r] >= k) throw ConfigError("one_hot_rows: label " + std::to_string(labels[r]) + " out of range");
    t[static_cast<std::int64_t>(r) * k + labels[r]] = 1.0f;
  }
  return t;
}

Dataset class_subset(const Dataset& d, int cls) {
  if (cls < 0 || cls >= kClasses) throw ConfigError("class_subset: class " + std::to_string(cls) + " outside 0..9");
  std::vector<std::int64_t> rows;
  for (std::int64_t i = 0; i < d.size(); ++i)
    if (d.labels[static_cast<std::size_t>(i)] == cls) rows.push_back(i);
  if (rows.empty()) throw Error("class_subset: class " + std::to_string(cls) + " has no rows");
  return d.subset(rows);
}

BatchIterator::BatchIterator(const Dataset& data, std::int64_t batch_size, std::uint64_t seed, bool drop_last,
                             bool shuffle)
    : data_(&data), batch_size_(batch_size), seed_(seed), drop_last_(drop_last), shuffle_(shuffle) {
  if (batch_size <= 0) throw ConfigError("batch size must be positive");
  if (data.size() == 0) throw ConfigError("cannot batch an empty dataset");
  start_epoch(0);
}

void BatchIterator::start_epoch(std::uint64_t epoch) {
  order_.resize(static_cast<std::size_t>(data_->size()));
  std::iota(order_.begin(), order_.end(), std::int64_t{0});
  if (shuffle_) {
    Rng rng = Rng(seed_).split(epoch);
    rng.shuffle(std::span(order_));
  }
  cursor_ = 0;
}

std::int64_t BatchIterator::batches_per_epoch() const noexcept {
  const std::int64_t n = data_->size();
  return drop_last_ ? n / batch_size_ : (n + batch_size_ - 1) / batch_size_;
}

bool BatchIterator::next(Batch& out) {
  const std::int64_t n = data_->size();
  const std::int64_t take = std::min(batch_size_, n - cursor_);
  if (take <= 0 || (drop_last_ && take < batch_size_)) return false;
  out.indices.assign(order_.begin() + cursor_, order_.begin() + cursor_ + take);
  cursor_ += take;
  out.images = gather(data_->images, out.indices);
  out.labels.clear();
  for (auto i : out.indices) out.labels.push_back(data_->labels[static_cast<std::size_t>(i)]);
  out.onehot = one_hot_rows(out.labels);
  return true;
}

}  // namespace cfx::mnist
