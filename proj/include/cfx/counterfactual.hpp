#pragma once

#include <string>

#include "cfx/tensor.hpp"

namespace cfx {

enum class Method { CFPROTO, DGCEx, DADGCEx };

std::string method_name(Method m);
/// Accepts "cfproto", "dgcex", "dadgcex" (case-insensitive) or the display names.
Method method_from_name(const std::string& name);

struct CounterfactualResult {
  Tensor x;
  Tensor x_cf;
  int y = -1;
  int y_cf = -1;
  int y_pred_cf = -1;
  Method method = Method::CFPROTO;
  double seconds = 0.0;
  /// False when the search ended without reaching the target class.
  bool valid = false;
};

}  // namespace cfx
