#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "chemlm/tensor/tensor.hpp"
#include "chemlm/util/errors.hpp"
#include "chemlm/util/rng.hpp"

namespace chemlm::lm {

struct ContextOverflow : Error {
  ContextOverflow(int64_t len, int64_t context)
      : Error("sequence of " + std::to_string(len) + " tokens exceeds context " +
              std::to_string(context)) {}
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(int64_t step)
      : Error("non-finite loss at step " + std::to_string(step)), step(step) {}
  int64_t step;
};

// Where each token class lives in the shared vocabulary, so generation can
// enforce modality structure without depending on the tokenizer module.
struct TokenLayout {
  int vocab = 0;
  int pad = 0, bos = 0, eos = 0, boi = 0, eoi = 0;
  int image_base = 0, n_image = 0;
  int image_span_len = 0;  // h * w

  bool is_image(int id) const { return id >= image_base && id < image_base + n_image; }
};

struct LmConfig {
  int layers = 4;
  int dim = 128;
  int heads = 4;
  int context = 512;
  float z_weight = 1e-5f;
  float lr = 2e-5f;
  float dropout = 0.05f;
  float warmup_frac = 0.01f;
  float weight_decay = 0.1f;
  int steps = 3000;
};

struct LmLayer {
  tg::Tensor ln1, wq, wk, wv, wo;
  tg::Tensor ln2, w1, b1, w2, b2;
};

struct LmModel {
  LmConfig cfg;
  TokenLayout layout;
  tg::Tensor tok_emb;  // [V, dim]
  std::vector<LmLayer> layers;
  tg::Tensor ln_f;
  tg::Tensor wout;  // [dim, V]; image-token columns start at zero

  static LmModel init(const LmConfig& cfg, const TokenLayout& layout, Rng& rng);

  // logits [L, V]; dropout applied only when rng is non-null
  tg::Tensor forward(const std::vector<int64_t>& ids, Rng* dropout_rng = nullptr) const;

  std::vector<tg::Tensor> params();
  std::vector<std::pair<std::string, tg::Tensor>> named_params();
  void save(const std::string& path) const;
  static LmModel load(const std::string& path);
};

struct LmLossParts {
  tg::Tensor total, ce, zloss;
};

// Masked next-token objective: mean cross-entropy plus the z-loss penalty
// lambda * mean (log sum exp z)^2 over the same supervised positions.
LmLossParts lm_loss(const tg::Tensor& logits, const std::vector<int64_t>& targets,
                    const std::vector<uint8_t>& mask, float lambda);

struct LmExample {
  std::vector<int64_t> ids;
  // aligned with targets ids[1..]; mask[t] supervises predicting ids[t+1]
  std::vector<uint8_t> target_mask;
};

struct LmStepReport {
  int64_t step = 0;
  float total = 0, ce = 0, zloss = 0, lr = 0;
};

std::vector<LmStepReport> train_lm(LmModel& model, const std::vector<LmExample>& examples,
                                   Rng& rng);

struct SamplerConfig {
  bool greedy = true;
  float temperature = 1.0f;
  int top_k = 0;  // 0 = full distribution
  int max_new_tokens = 256;
};

// Autoregressive continuation of the prompt. After <boi> only image ids are
// admissible for exactly image_span_len steps, then <eoi> is forced; outside
// image spans image ids are masked out. Stops at <eos> or the context edge.
std::vector<int64_t> generate(const LmModel& model, const std::vector<int64_t>& prompt,
                              const SamplerConfig& sampler, Rng& rng);

}  // namespace chemlm::lm
