#include "cfx/adam.hpp"

#include <cmath>
#include <string>

#include "cfx/error.hpp"

namespace cfx {

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0f)) throw ConfigError("adam learning_rate must be positive");
  if (!(beta1 > 0.0f && beta1 < 1.0f)) throw ConfigError("adam beta1 must be in (0,1)");
  if (!(beta2 > 0.0f && beta2 < 1.0f)) throw ConfigError("adam beta2 must be in (0,1)");
  if (!(eps > 0.0f)) throw ConfigError("adam eps must be positive");
}

void adam_step(const ParameterList& params, const AdamConfig& config) {
  config.validate();
  for (const auto& p : params) {
    if (p->frozen()) continue;
    if (!p->has_grad()) throw ContractError("adam_step: parameter '" + p->name() + "' has no gradient");
    AdamState& st = p->adam();
    Tensor& w = p->value();
    const Tensor& g = p->grad();
    if (st.m.empty()) {
      st.m = Tensor(w.shape(), 0.0f);
      st.v = Tensor(w.shape(), 0.0f);
    }
    ++st.t;
    const double t = static_cast<double>(st.t);
    const float bc1 = static_cast<float>(1.0 - std::pow(static_cast<double>(config.beta1), t));
    const float bc2 = static_cast<float>(1.0 - std::pow(static_cast<double>(config.beta2), t));
    const float step = config.learning_rate / bc1;
    const float inv_sqrt_bc2 = 1.0f / std::sqrt(bc2);
    float* wp = w.ptr();
    float* mp = st.m.ptr();
    float* vp = st.v.ptr();
    const float* gp = g.ptr();
    const float b1 = config.beta1, b2 = config.beta2;
    for (std::int64_t i = 0; i < w.size(); ++i) {
      mp[i] = b1 * mp[i] + (1.0f - b1) * gp[i];
      vp[i] = b2 * vp[i] + (1.0f - b2) * gp[i] * gp[i];
      wp[i] -= step * mp[i] / (std::sqrt(vp[i]) * inv_sqrt_bc2 + config.eps);
    }
    p->zero_grad();
  }
}

}  // namespace cfx
