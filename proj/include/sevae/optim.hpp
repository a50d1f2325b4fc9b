#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sevae/autograd.hpp"

namespace sevae {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Coupled L2: wd * p is added to the clipped gradient.
  double weight_decay = 0.0;
  // Global-norm clip threshold; <= 0 disables clipping.
  double grad_clip = 5.0;
};

struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::size_t t = 0;
};

// One bias-corrected Adam update of `params` in place. Returns the global
// gradient norm before clipping. Throws UsageError on any shape mismatch.
double adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
                 const AdamConfig& cfg);

double global_norm(std::span<const Tensor* const> grads);

// Adam bound to a fixed parameter list; reads Parameter::grad().
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  double step();
  std::size_t steps() const { return state_.t; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  AdamState state_;
};

}  // namespace sevae
