#pragma once

// Experiment configuration in a flat INI dialect:
//   # comment
//   [section]
//   key = value
// Unknown sections or keys are ConfigErrors. The canonical form lists every
// key in a fixed order with shortest round-trip number formatting, so
// parse(to_ini(c)) == c and to_ini(parse(to_ini(c))) == to_ini(c).

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "cfx/amortized.hpp"
#include "cfx/cfproto.hpp"
#include "cfx/eval.hpp"
#include "cfx/models.hpp"

namespace cfx::config {

enum class Preset { Full, Desk };

std::string preset_name(Preset p);

struct ExperimentConfig {
  Preset preset = Preset::Full;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/default";

  std::filesystem::path mnist_dir = "data/mnist";
  /// Leading rows of the training split.
  std::int64_t train_size = 60000;
  /// Leading rows of the test split explained and evaluated.
  std::int64_t eval_size = 10000;

  models::TrainConfig discriminator{10, 32, {}, 0};
  models::TrainConfig autoencoder{20, 128, {}, 0};
  models::TrainConfig class_autoencoder{20, 128, {}, 0};
  /// Shared by both generators; DGCEx trains with gamma forced to 0.
  amortized::AmortizedTrainConfig generator;
  cfproto::CFProtoConfig cfproto;
  eval::MetricsConfig metrics;

  /// Instances shown in the report image grid.
  int grid_rows = 10;

  /// Sub-config invariants and positive sizes. Paths are checked by the
  /// stages that read them.
  void validate() const;

  bool operator==(const ExperimentConfig&) const;
};

/// Defaults for `p`. Desk: 10000 training rows, 500 evaluated instances and
/// every epoch budget halved (rounded down).
ExperimentConfig preset_defaults(Preset p);

/// Keys absent from `text` keep the defaults of the preset named by
/// `[run] preset`, or of `fallback` when the file names none.
ExperimentConfig parse_ini(std::string_view text, Preset fallback = Preset::Full);
ExperimentConfig load(const std::filesystem::path& path, Preset fallback = Preset::Full);
std::string to_ini(const ExperimentConfig& c);

/// Per-component seed drawn from the run seed. Both generators share one.
enum class SeedStream : std::uint64_t { Discriminator = 1, Autoencoder = 2, Generator = 3, ClassAutoencoder = 10 };
std::uint64_t component_seed(std::uint64_t run_seed, SeedStream stream, int offset = 0);

}  // namespace cfx::config
