#include "cfx/counterfactual.hpp"

#include <algorithm>
#include <cctype>

#include "cfx/error.hpp"

namespace cfx {

std::string method_name(Method m) {
  switch (m) {
    case Method::CFPROTO: return "CFPROTO";
    case Method::DGCEx: return "DGCEx";
    case Method::DADGCEx: return "DA-DGCEx";
  }
  return "?";
}

Method method_from_name(const std::string& name) {
  std::string key;
  for (char c : name)
    if (c != '-' && c != '_') key.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  if (key == "cfproto") return Method::CFPROTO;
  if (key == "dgcex") return Method::DGCEx;
  if (key == "dadgcex") return Method::DADGCEx;
  throw ConfigError("unknown method '" + name + "' (expected cfproto, dgcex or dadgcex)");
}

}  // namespace cfx
