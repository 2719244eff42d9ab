#include "forest/numerics/optim.hpp"

#include <cmath>

namespace forest::num {

AdamState::AdamState(const Shape& shape, const AdamConfig& cfg)
    : m(shape, 0.0), v(shape, 0.0), lr(cfg.lr), beta1(cfg.beta1), beta2(cfg.beta2), eps(cfg.eps) {}

void adam_step(Parameter& param, AdamState& state) {
  Tensor& value = param.mutable_value();
  if (state.m.shape() != value.shape() || state.v.shape() != value.shape()) {
    throw DimensionError("adam_step: state for " + param.name() + " has shape " + shape_string(state.m.shape()) +
                         ", parameter has " + shape_string(value.shape()));
  }
  const Tensor grad = param.grad();
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < value.numel(); ++i) {
    const double g = grad[i];
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
    state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
    const double m_hat = state.m[i] / c1;
    const double v_hat = state.v[i] / c2;
    value[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
  }
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)) {
  states_.reserve(params_.size());
  for (auto* p : params_) states_.emplace_back(p->value().shape(), cfg);
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) adam_step(*params_[i], states_[i]);
}

}  // namespace forest::num
