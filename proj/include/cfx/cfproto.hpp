#pragma once

// Counterfactuals guided by prototypes: a per-instance search for a sparse,
// in-distribution perturbation δ that moves D's prediction to the class of the
// nearest latent prototype.

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cfx/counterfactual.hpp"
#include "cfx/models.hpp"

namespace cfx::cfproto {

struct CFProtoConfig {
  float beta = 0.1f;
  float gamma = 100.0f;
  float theta = 100.0f;
  float c_init = 1.0f;
  float kappa = 0.0f;
  int K = 5;
  int c_steps = 4;
  int inner_steps = 500;
  float step_size = 1e-2f;
  float c_multiplier = 10.0f;

  void validate() const;
};

/// Per-class prototypes for one query and the chosen target class.
struct PrototypeSet {
  /// (10, 16); row i is proto_i.
  Tensor protos;
  /// ‖ENC(x) − proto_i‖₂² per class.
  std::vector<double> distances;
  int target = -1;

  Tensor proto(int cls) const { return protos.row(cls); }
};

/// Training latents ENC(x_train) grouped by class, encoded once and reused
/// across queries. The encoder is the all-class AE.
class PrototypeIndex {
 public:
  PrototypeIndex(const models::Autoencoder& ae, const mnist::Dataset& train);
  /// From precomputed (N,16) latents and their labels.
  PrototypeIndex(Tensor latents, std::vector<int> labels);

  /// proto_i = mean of the K class-i latents nearest to `z` (ties by training
  /// index). target = nearest prototype class other than `y`, or `y_cf` when
  /// given. Throws Error when a class has fewer than K members.
  PrototypeSet prototypes(std::span<const float> z, int K, int y, std::optional<int> y_cf = {}) const;

  std::int64_t class_size(int cls) const;

 private:
  std::int64_t dim_ = 0;
  /// Row-major latents per class.
  std::vector<std::vector<float>> by_class_;
};

/// Encodes `x` with `ae` and queries a fresh index over `train`.
PrototypeSet compute_prototypes(const models::Autoencoder& ae, const mnist::Dataset& train, const Tensor& x, int K,
                                int y, std::optional<int> y_cf = {});

/// max([p]_y − max_{i≠y} [p]_i, −κ) over any probability vector of length ≥ 2.
/// Throws ConfigError for y out of range.
double fkappa_loss(std::span<const float> probs, int y, float kappa);
/// Targeted form used by the search: max(max_{i≠t} [p]_i − [p]_t, −κ).
/// Reaches −κ exactly when t leads every other class by at least κ.
double fkappa_target_loss(std::span<const float> probs, int target, float kappa);

/// Terms of the objective at x_cf = x + δ. `smooth` excludes the L1 term and is
/// the part the gradient step sees.
struct ObjectiveTerms {
  Var total;
  Var smooth;
  Var hinge;
  Var l1;
  Var l2;
  Var ae;
  Var proto;
  /// D(x_cf), (1,10).
  Var probs;
};

/// c·f_κ(x_cf, target) + β‖δ‖₁ + ‖δ‖₂² + γ‖x_cf − AE(x_cf)‖₂² + θ‖ENC(x_cf) − proto‖₂².
/// x and δ are (1,28,28,1); `proto` holds 16 values. ENC(x_cf) feeds both the
/// AE and prototype terms.
ObjectiveTerms objective_terms(const Tensor& x, const Var& delta, const models::Discriminator& d,
                               const models::Autoencoder& ae, const Tensor& proto, int target, float c,
                               const CFProtoConfig& cfg);

struct Round {
  float c = 0.0f;
  bool found = false;
};

struct Trace {
  std::vector<Round> rounds;
  /// Objective at each evaluated point, all rounds concatenated.
  std::vector<double> objective;
  /// Elastic-net distance β‖δ‖₁ + ‖δ‖₂² of each newly accepted best.
  std::vector<double> accepted;
};

struct Explanation {
  CounterfactualResult result;
  PrototypeSet prototypes;
  Trace trace;
};

/// Runs c_steps rounds of inner_steps FISTA iterations from δ = 0. Each round
/// starts at step_size and halves the step until the sufficient-decrease test
/// holds. Candidates are the momentum points; the best valid one minimises
/// β‖δ‖₁ + ‖δ‖₂². D and the AE must be frozen. Without a valid point the result carries the last iterate and
/// valid == false. `seconds` covers prediction, prototype selection and search.
Explanation explain(const Tensor& x, const models::Discriminator& d, const models::Autoencoder& ae,
                    const PrototypeIndex& index, const CFProtoConfig& cfg, std::optional<int> y_cf = {});

/// Convenience overload that builds a PrototypeIndex over `train`.
Explanation explain(const Tensor& x, const models::Discriminator& d, const models::Autoencoder& ae,
                    const mnist::Dataset& train, const CFProtoConfig& cfg, std::optional<int> y_cf = {});

}  // namespace cfx::cfproto
