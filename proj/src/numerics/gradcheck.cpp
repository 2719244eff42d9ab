#include "forest/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "forest/numerics/rng.hpp"

namespace forest::num {

namespace {

double eval_loss(const std::function<Var()>& loss_fn) {
  NoGradGuard guard;
  const double v = loss_fn().value().item();
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const std::function<Var()>& loss_fn, const std::vector<Parameter*>& params,
                           std::size_t probe_count, double step, std::uint64_t seed) {
  for (auto* p : params) p->zero_grad();
  Var loss = loss_fn();
  if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: loss is not finite");
  loss.backward();

  std::vector<Tensor> analytic;
  std::size_t total = 0;
  for (auto* p : params) {
    analytic.push_back(p->grad());
    total += p->value().numel();
  }
  if (total == 0) return {};

  GradCheckResult result;
  CounterRng rng(seed, 0x67636b);
  for (std::size_t probe = 0; probe < probe_count; ++probe) {
    std::size_t flat = rng.below(total);
    std::size_t pi = 0;
    while (flat >= params[pi]->value().numel()) {
      flat -= params[pi]->value().numel();
      ++pi;
    }
    Tensor& value = params[pi]->mutable_value();
    const double saved = value[flat];
    value[flat] = saved + step;
    const double up = eval_loss(loss_fn);
    value[flat] = saved - step;
    const double down = eval_loss(loss_fn);
    value[flat] = saved;

    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[pi][flat];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    ++result.probes;
    if (rel >= result.max_relative_error) {
      result.max_relative_error = rel;
      result.worst_parameter = params[pi]->name();
      result.worst_index = flat;
      result.worst_analytic = a;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace forest::num
