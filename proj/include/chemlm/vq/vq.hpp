#pragma once

#include <string>
#include <vector>

#include "chemlm/render/render.hpp"
#include "chemlm/tensor/tensor.hpp"
#include "chemlm/util/errors.hpp"
#include "chemlm/util/rng.hpp"

namespace chemlm::vq {

struct DimensionMismatch : Error {
  using Error::Error;
};
struct IndexOutOfRange : Error {
  explicit IndexOutOfRange(int idx, int n)
      : Error("codebook index " + std::to_string(idx) + " out of range [0, " +
              std::to_string(n) + ")") {}
};
struct NonFiniteLoss : Error {
  explicit NonFiniteLoss(int64_t step)
      : Error("non-finite loss at step " + std::to_string(step)), step(step) {}
  int64_t step;
};

struct VqConfig {
  int image_res = 64;
  int codebook_size = 256;  // n
  int code_dim = 16;        // n_z
  int grid = 8;             // latent h = w (image_res / 8)
  float lambda1 = 1.0f;     // perceptual weight
  float delta = 1e-6f;      // adaptive-weight stabilizer
  int steps = 2000;
  int batch_size = 8;
  float lr = 1e-3f;
  float gan_start_frac = 0.6f;
  int perceptual_steps = 300;
  float val_fraction = 0.05f;
  int val_every = 50;
};

// Frozen feature extractor: the encoder half of a plain autoencoder trained
// on the same molecule images. Stands in for an off-the-shelf perceptual net.
struct Perceptual {
  tg::Tensor w1, b1, w2, b2;

  tg::Tensor features(const tg::Tensor& x) const;  // [N,3,R,R] -> [N,16,R/4,R/4]
};

Perceptual train_perceptual(const std::vector<render::MolImage>& images, int steps,
                            float lr, Rng& rng);

struct VqModel {
  VqConfig cfg;

  // encoder: 3 strided convs to grid resolution, then 1x-stride projection
  tg::Tensor e1w, e1b, e2w, e2b, e3w, e3b, e4w, e4b;
  // decoder mirror; d4w is the last layer used by the adaptive GAN weight
  tg::Tensor d1w, d1b, d2w, d2b, d3w, d3b, d4w, d4b;
  tg::Tensor codebook;  // [n, n_z]
  // patch discriminator
  tg::Tensor c1w, c1b, c2w, c2b, c3w, c3b;

  static VqModel init(const VqConfig& cfg, Rng& rng);

  tg::Tensor encode(const tg::Tensor& x) const;   // [N,3,R,R] -> [N,n_z,h,w]
  tg::Tensor decode(const tg::Tensor& z) const;   // [N,n_z,h,w] -> [N,3,R,R]
  tg::Tensor discriminate(const tg::Tensor& x) const;  // patch logits

  std::vector<tg::Tensor> generator_params();   // encoder + decoder + codebook
  std::vector<tg::Tensor> discriminator_params();
  std::vector<std::pair<std::string, tg::Tensor>> named_params();

  void save(const std::string& path) const;
  static VqModel load(const std::string& path);
};

struct QuantizeResult {
  tg::Tensor zq;             // codebook rows, shaped like the input
  std::vector<int> indices;  // row-major over (batch, y, x)
};

// Nearest codebook row per spatial vector; ties go to the smaller index.
QuantizeResult quantize(const tg::Tensor& zhat, const tg::Tensor& codebook);

struct VqvaeLossParts {
  tg::Tensor rec;       // pixel reconstruction through the straight-through path
  tg::Tensor codebook;  // ||sg[zhat] - zq||^2, moves only the codebook
  tg::Tensor commit;    // ||sg[zq] - zhat||^2, moves only the encoder
};

VqvaeLossParts vqvae_loss(const tg::Tensor& x, const tg::Tensor& zhat,
                          const tg::Tensor& zq, const tg::Tensor& xhat);

tg::Tensor perceptual_loss(const tg::Tensor& x, const tg::Tensor& xhat,
                           const Perceptual& p);

struct GanLossParts {
  tg::Tensor g;  // -log sigma(D(xhat)), D held fixed by the optimizer split
  tg::Tensor d;  // -[log sigma(D(x)) + log(1 - sigma(D(detached xhat)))]
};

GanLossParts gan_losses(const tg::Tensor& x, const tg::Tensor& xhat,
                        const VqModel& m);

// lambda2 = |grad_w nll| / (|grad_w gan_g| + delta), clamped to [0, 1e4].
// The two losses must live on disjoint graphs that share only parameter
// leaves; gradients of shared intermediate nodes would otherwise mix.
float adaptive_lambda2(const tg::Tensor& nll, const tg::Tensor& gan_g,
                       tg::Tensor last_decoder_weight, float delta);

struct VqLossReport {
  int64_t step = 0;
  float l_rec = 0, l_codebook = 0, l_commit = 0, l_perceptual = 0;
  float l_gan_g = 0, l_gan_d = 0, lambda2 = 0;
};

struct TrainVqResult {
  VqModel model;  // best validation checkpoint
  Perceptual perceptual;
  std::vector<VqLossReport> curve;
  std::vector<float> val_curve;      // l_rec + lambda1 * l_perc at each probe
  float untrained_val_rec = 0;       // validation l_rec before any update
  float best_val = 0;
  int64_t best_step = -1;
  std::vector<int64_t> usage;        // codebook hits over the final epoch
};

tg::Tensor image_to_tensor(const render::MolImage& img);
render::MolImage tensor_to_image(const tg::Tensor& x);

TrainVqResult train_vq(const std::vector<render::MolImage>& images,
                       const VqConfig& cfg, Rng& rng);

std::vector<int> image_to_tokens(const VqModel& m, const render::MolImage& img);
render::MolImage tokens_to_image(const VqModel& m, const std::vector<int>& indices);

}  // namespace chemlm::vq
