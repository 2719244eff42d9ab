#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "forest/numerics/autograd.hpp"

namespace forest::num {

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t probes = 0;
};

/// Compares reverse-mode gradients of `loss_fn` against central differences on
/// `probe_count` coordinates drawn uniformly over all entries of `params`.
/// Relative error is |a - n| / max(|a|, |n|, 1e-8). `loss_fn` must rebuild the
/// graph from the current parameter values on every call.
GradCheckResult grad_check(const std::function<Var()>& loss_fn, const std::vector<Parameter*>& params,
                           std::size_t probe_count, double step = 1e-3, std::uint64_t seed = 0);

}  // namespace forest::num
