#include "chemlm/tensor/optim.hpp"

#include <cmath>

namespace chemlm::tg {

void adam_step(std::vector<Tensor>& params, const AdamConfig& cfg, AdamState& state) {
  if (state.m.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].data().size(), 0.0f);
      state.v[i].assign(params[i].data().size(), 0.0f);
    }
  }
  state.step += 1;
  float bc1 = 1.0f - std::pow(cfg.beta1, static_cast<float>(state.step));
  float bc2 = 1.0f - std::pow(cfg.beta2, static_cast<float>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i].data();
    auto& g = params[i].grad();
    if (g.size() != p.size())
      throw ShapeMismatch("adam_step: grad/param size mismatch on param " + std::to_string(i));
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (size_t j = 0; j < p.size(); ++j) {
      float grad = g[j];
      if (!cfg.decoupled && cfg.weight_decay > 0.0f) grad += cfg.weight_decay * p[j];
      m[j] = cfg.beta1 * m[j] + (1.0f - cfg.beta1) * grad;
      v[j] = cfg.beta2 * v[j] + (1.0f - cfg.beta2) * grad * grad;
      float mhat = m[j] / bc1;
      float vhat = v[j] / bc2;
      p[j] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
      if (cfg.decoupled && cfg.weight_decay > 0.0f) p[j] -= cfg.lr * cfg.weight_decay * p[j];
    }
  }
}

void zero_grads(std::vector<Tensor>& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace chemlm::tg
