#pragma once

// Generator training under the DGCEx and DA-DGCEx objectives, and single-pass
// counterfactual generation.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "cfx/counterfactual.hpp"
#include "cfx/models.hpp"

namespace cfx::amortized {

/// How the two squared-error terms reduce over the 784 pixels of one image.
/// Both reduce over the batch by the mean.
enum class PixelReduction { Sum, Mean };

struct AmortizedTrainConfig {
  float alpha = 10.0f;
  float beta = 1.0f;
  /// 0 gives the plain DGCEx objective.
  float gamma = 10.0f;
  PixelReduction reduction = PixelReduction::Mean;
  int epochs = 15;
  std::int64_t batch = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Every (sample, y_cf) pair with y_cf != y, sample-major, targets ascending.
struct Pairs {
  std::vector<std::int64_t> source;
  std::vector<int> y;
  std::vector<int> y_cf;
  Tensor target_onehot;
};

Pairs expand_pairs(std::span<const int> labels, int classes = mnist::kClasses);

struct LossTerms {
  Var total;
  /// Unweighted, batch-averaged terms.
  Var term_g;
  Var term_d;
  Var term_da;
};

/// α·L_G(x, x_cf) + β·CCE(D(x_cf), y_cf) + γ·L_DA(x_cf, DA-AE(x_cf)).
/// D and the DA-AE must be frozen. `daae` may be null only when γ == 0; when
/// present its term is evaluated even for γ == 0.
LossTerms dadgcex_loss(const Var& x, const Var& x_cf, const Tensor& y_cf_onehot, const models::Discriminator& d,
                       const models::Autoencoder* daae, const AmortizedTrainConfig& cfg);

/// Trains only G's parameters. Each mini-batch of `batch` samples expands to
/// 9·batch pairs; the encoder runs once per sample.
models::TrainReport train_amortized(models::Generator& g, const models::Discriminator& d,
                                    const models::Autoencoder* daae, const mnist::Dataset& train,
                                    const AmortizedTrainConfig& cfg, const models::EpochCallback& on_epoch = {});

/// One forward pass of G. Throws ContractError when y_cf equals D's current
/// prediction. `x` is (28,28,1) or (1,28,28,1).
CounterfactualResult explain_amortized(const models::Generator& g, const models::Discriminator& d, const Tensor& x,
                                       int y_cf, Method method);

/// Fraction of (x, y_cf) pairs with argmax D(G(x, y_cf)) == y_cf.
double validity_rate(const models::Generator& g, const models::Discriminator& d, const mnist::Dataset& data);
/// Mean over pairs of ‖x − G(x, y_cf)‖².
double mean_pair_distance(const models::Generator& g, const mnist::Dataset& data);

}  // namespace cfx::amortized
