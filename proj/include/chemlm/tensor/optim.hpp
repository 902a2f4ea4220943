#pragma once

#include <vector>

#include "chemlm/tensor/tensor.hpp"

namespace chemlm::tg {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.0f;
  bool decoupled = true;  // AdamW; false = classic L2-in-gradient Adam
};

struct AdamState {
  int64_t step = 0;
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
};

// One bias-corrected Adam/AdamW step over params (grads read in place).
void adam_step(std::vector<Tensor>& params, const AdamConfig& cfg, AdamState& state);

void zero_grads(std::vector<Tensor>& params);

}  // namespace chemlm::tg
