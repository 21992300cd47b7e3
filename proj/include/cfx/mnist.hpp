#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "cfx/rng.hpp"
#include "cfx/tensor.hpp"

namespace cfx::mnist {

inline constexpr int kClasses = 10;

/// Images (N,28,28,1) in [0,1] with labels in [0,9].
struct Dataset {
  Tensor images;
  std::vector<int> labels;

  std::int64_t size() const noexcept { return static_cast<std::int64_t>(labels.size()); }
  /// Rows in the given order (duplicates allowed).
  Dataset subset(std::span<const std::int64_t> indices) const;
  /// First n rows.
  Dataset head(std::int64_t n) const;
  /// Throws DimensionError/ParseError when the invariants do not hold.
  void validate() const;
};

/// Reads the whole file, inflating it when it starts with the gzip magic 1f 8b.
std::vector<std::uint8_t> read_maybe_gzip(const std::filesystem::path& path);

/// u8 image cube (magic 0x00000803). Pixels are scaled by 1/255 into (N,H,W,1).
Tensor read_idx_images(const std::filesystem::path& path);
/// u8 label vector (magic 0x00000801).
std::vector<int> read_idx_labels(const std::filesystem::path& path);
/// float32 array of any rank (magic 0x00000Dxx), big-endian payload.
Tensor read_idx_floats(const std::filesystem::path& path);

/// Pixels are written as round(255·v); a parsed dataset round-trips exactly.
void write_idx_images(const std::filesystem::path& path, const Tensor& images);
void write_idx_labels(const std::filesystem::path& path, std::span<const int> labels);
void write_idx_floats(const std::filesystem::path& path, const Tensor& values);

enum class Split { Train, Test };

/// Loads train-* or t10k-* from `dir`, accepting raw or .gz names.
Dataset load(const std::filesystem::path& dir, Split split);

Tensor one_hot(int label, int k = kClasses);
/// (B,k) rows of one_hot.
Tensor one_hot_rows(std::span<const int> labels, int k = kClasses);

/// All rows labelled `cls`, in original order. Throws Error when none exist.
Dataset class_subset(const Dataset& d, int cls);

/// Row-gathered copy of a (N,...) tensor.
Tensor gather(const Tensor& t, std::span<const std::int64_t> rows);

struct Batch {
  std::vector<std::int64_t> indices;
  Tensor images;
  std::vector<int> labels;
  Tensor onehot;
};

/// Epoch-wise mini-batches. Epoch e visits a permutation drawn from
/// Rng(seed).split(e); with shuffle off the order is 0..N-1.
class BatchIterator {
 public:
  BatchIterator(const Dataset& data, std::int64_t batch_size, std::uint64_t seed, bool drop_last = false,
                bool shuffle = true);

  /// Rewinds to the start of epoch `epoch`.
  void start_epoch(std::uint64_t epoch);
  /// Fills `out` with the next batch; false at the end of the epoch.
  bool next(Batch& out);
  std::int64_t batches_per_epoch() const noexcept;

 private:
  const Dataset* data_;
  std::int64_t batch_size_;
  std::uint64_t seed_;
  bool drop_last_;
  bool shuffle_;
  std::vector<std::int64_t> order_;
  std::int64_t cursor_ = 0;
};

}  // namespace cfx::mnist
