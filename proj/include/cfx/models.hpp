#pragma once

// Network roles: the classifier D, the convolutional autoencoder (all-class,
// per-class, and the DA-AE), and the class-conditional generator G.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cfx/adam.hpp"
#include "cfx/autodiff.hpp"
#include "cfx/mnist.hpp"
#include "cfx/rng.hpp"

namespace cfx::models {

inline constexpr std::int64_t kLatent = 16;

enum class Arch { Discriminator, Autoencoder, Generator };
std::string arch_name(Arch a);
Arch arch_from_name(const std::string& name);

class Model {
 public:
  virtual ~Model() = default;

  Arch arch() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const ParameterList& parameters() const noexcept { return params_; }
  std::int64_t parameter_count() const;

  void set_frozen(bool frozen);
  /// True when every parameter is frozen.
  bool frozen() const;

  /// FNV-1a-64 over all parameter bytes in declaration order.
  std::uint64_t checksum() const;

 protected:
  Model(Arch arch, std::uint64_t seed) : arch_(arch), seed_(seed) {}
  /// He-uniform for relu-fed layers, Glorot-uniform otherwise. Biases start at 0.
  ParameterPtr add(const std::string& name, Shape shape, std::int64_t fan_in, std::int64_t fan_out, bool relu,
                   Rng& rng);
  ParameterPtr add_bias(const std::string& name, std::int64_t n);

 private:
  Arch arch_;
  std::uint64_t seed_;
  ParameterList params_;
};

/// conv32 → pool → conv64 → pool → dropout .3 → dense256 → dropout .5 → dense10 softmax.
class Discriminator : public Model {
 public:
  explicit Discriminator(std::uint64_t seed);

  /// Class probabilities (B,10). `rng` is only consulted when training.
  Var forward(const Var& x, bool training, Rng* rng) const;
  /// Eval-mode probabilities, evaluated in chunks.
  Tensor predict(const Tensor& x) const;
  std::vector<int> predict_labels(const Tensor& x) const;

 private:
  ParameterPtr c1_, c1b_, c2_, c2b_, d1_, d1b_, d2_, d2b_;
};

/// Encoder: conv32/2 → conv64/2 → dense16. Decoder: dense → 7x7x64 →
/// convT64/2 → convT32/2 → convT1/1 sigmoid. With `condition_dim` > 0 the
/// decoder reads concat(z, condition).
class Autoencoder : public Model {
 public:
  explicit Autoencoder(std::uint64_t seed) : Autoencoder(Arch::Autoencoder, seed, 0) {}

  Var encode(const Var& x) const;
  Var decode(const Var& code) const;
  Var forward(const Var& x) const { return decode(encode(x)); }

  Tensor encode(const Tensor& x) const;
  Tensor reconstruct(const Tensor& x) const;

 protected:
  Autoencoder(Arch arch, std::uint64_t seed, std::int64_t condition_dim);
  std::int64_t condition_dim_;

 private:
  ParameterPtr e1_, e1b_, e2_, e2b_, ez_, ezb_, dz_, dzb_, t1_, t1b_, t2_, t2b_, t3_, t3b_;
};

class Generator : public Autoencoder {
 public:
  explicit Generator(std::uint64_t seed) : Autoencoder(Arch::Generator, seed, mnist::kClasses) {}

  /// G(x, onehot(y_cf)).
  Var forward(const Var& x, const Var& target_onehot) const;
  Tensor generate(const Tensor& x, const Tensor& target_onehot) const;
};

struct TrainConfig {
  int epochs = 10;
  std::int64_t batch = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TrainReport {
  std::string model;
  std::vector<double> epoch_losses;
  /// Model::checksum() after each epoch.
  std::vector<std::uint64_t> epoch_checksums;
  /// Test accuracy for D; mean per-image squared reconstruction error for AEs.
  std::string metric_name;
  double metric = 0.0;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  int epochs = 0;
};

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Minimises CCE. Throws TrainingError on a non-finite loss.
TrainReport train_discriminator(Discriminator& d, const mnist::Dataset& train, const mnist::Dataset& test,
                                const TrainConfig& cfg, const EpochCallback& on_epoch = {});
/// Minimises the per-pixel mean squared reconstruction error.
TrainReport train_autoencoder(Autoencoder& ae, const mnist::Dataset& train, const TrainConfig& cfg,
                              const EpochCallback& on_epoch = {});

double accuracy(const Discriminator& d, const mnist::Dataset& data);
/// Mean over images of Σ_pixels (x − AE(x))².
double mean_reconstruction_error(const Autoencoder& ae, const Tensor& images);

/// Evaluates `fn` over row chunks of `x` and stacks the results.
Tensor map_rows(const Tensor& x, std::int64_t chunk, const std::function<Tensor(const Tensor&)>& fn);

}  // namespace cfx::models
