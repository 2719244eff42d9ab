#pragma once

#include <cstdint>
#include <vector>

#include "forest/numerics/autograd.hpp"

namespace forest::num {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;
};

/// First/second moment estimates for one parameter.
struct AdamState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.9999;
  double eps = 1e-8;

  AdamState() = default;
  AdamState(const Shape& shape, const AdamConfig& cfg);
};

/// One bias-corrected Adam update of `param` from its accumulated gradient.
void adam_step(Parameter& param, AdamState& state);

/// Adam over a fixed parameter list.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

  void zero_grad();
  void step();
  const std::vector<AdamState>& states() const noexcept { return states_; }

 private:
  std::vector<Parameter*> params_;
  std::vector<AdamState> states_;
};

}  // namespace forest::num
