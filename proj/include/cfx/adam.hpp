#pragma once

#include "cfx/autodiff.hpp"

namespace cfx {

struct AdamConfig {
  float learning_rate = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;

  /// Throws ConfigError when a field is outside its range.
  void validate() const;
};

/// One bias-corrected Adam update on every non-frozen parameter, then clears
/// their gradients. Frozen parameters are skipped entirely. A non-frozen
/// parameter without a gradient is a ContractError.
void adam_step(const ParameterList& params, const AdamConfig& config);

}  // namespace cfx
