#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "sen/tensor.hpp"

namespace sen::testing {

// Independent central-difference oracle: perturbs every entry of `param` and
// re-evaluates `loss_fn`, comparing against the analytic gradient already
// stored on the parameter. Returns the max relative error.
inline double fd_max_rel_err(const std::function<double()>& loss_fn,
                             Tensor param, double eps = 1e-5) {
  if (!param.has_grad()) return std::abs(loss_fn()) * 0.0 + 1e9;
  std::vector<double> analytic(param.grad().begin(), param.grad().end());
  double worst = 0.0;
  auto vals = param.values_mut();
  for (size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + eps;
    const double up = loss_fn();
    vals[i] = saved - eps;
    const double down = loss_fn();
    vals[i] = saved;
    const double fd = (up - down) / (2.0 * eps);
    const double rel = std::abs(analytic[i] - fd) / (std::abs(fd) + 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

inline std::vector<double> to_vec(const Tensor& t) {
  return {t.values().begin(), t.values().end()};
}

}  // namespace sen::testing
