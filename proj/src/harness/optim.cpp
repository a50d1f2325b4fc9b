#include "sevae/optim.hpp"

#include <cmath>

#include "sevae/error.hpp"
#include "sevae/kernels.hpp"

namespace sevae {

double global_norm(std::span<const Tensor* const> grads) {
  double sq = 0.0;
  for (const Tensor* g : grads) sq += kernels::dot(g->ptr(), g->ptr(), g->size());
  return std::sqrt(sq);
}

double adam_step(std::span<Tensor* const> params, std::span<const Tensor* const> grads, AdamState& state,
                 const AdamConfig& cfg) {
  if (params.size() != grads.size()) throw UsageError("adam: parameter and gradient counts differ");
  if (state.m.empty() && state.t == 0) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw UsageError("adam: optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->shape() != grads[i]->shape() || params[i]->shape() != state.m[i].shape() ||
        params[i]->shape() != state.v[i].shape()) {
      throw UsageError("adam: shape mismatch at parameter " + std::to_string(i) + " (" +
                       shape_string(params[i]->shape()) + " vs " + shape_string(grads[i]->shape()) + ")");
    }
  }

  const double norm = global_norm(grads);
  if (!std::isfinite(norm)) throw NumericalError("non-finite gradient norm in optimizer step");
  const double clip = (cfg.grad_clip > 0.0 && norm > cfg.grad_clip) ? cfg.grad_clip / norm : 1.0;

  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double gj = clip * g[j] + cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * gj;
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * gj * gj;
      p[j] -= cfg.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg.eps);
    }
  }
  return norm;
}

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  if (!(cfg_.lr > 0.0)) throw UsageError("learning rate must be > 0");
}

double Adam::step() {
  std::vector<Tensor*> values;
  std::vector<const Tensor*> grads;
  values.reserve(params_.size());
  grads.reserve(params_.size());
  for (Parameter* p : params_) {
    values.push_back(&p->value());
    grads.push_back(&p->grad());
  }
  return adam_step(values, grads, state_, cfg_);
}

}  // namespace sevae
