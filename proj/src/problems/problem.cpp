#include "stochadj/problems/problem.hpp"

namespace stochadj {

ConditioningKey constant_key() {
  return ConditioningKey::table(1, [](const PathPrefix&) { return 0; });
}

}  // namespace stochadj
