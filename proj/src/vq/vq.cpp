#include "chemlm/vq/vq.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "chemlm/tensor/checkpoint.hpp"
#include "chemlm/tensor/optim.hpp"

namespace chemlm::vq {

using tg::Tensor;

namespace {

Tensor conv_init(int out_c, int in_c, int k, Rng& rng) {
  float std = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
  return Tensor::randn({out_c, in_c, k, k}, rng, std, true);
}

Tensor convt_init(int in_c, int out_c, int k, Rng& rng) {
  float std = std::sqrt(2.0f / static_cast<float>(in_c * k * k));
  return Tensor::randn({in_c, out_c, k, k}, rng, std, true);
}

Tensor bias_init(int c) { return Tensor::zeros({c}, true); }

std::vector<float> image_floats(const render::MolImage& img) {
  // interleaved RGB bytes to planar floats in [0, 1]
  size_t hw = static_cast<size_t>(img.width) * static_cast<size_t>(img.height);
  std::vector<float> out(hw * 3);
  for (size_t i = 0; i < hw; ++i)
    for (size_t c = 0; c < 3; ++c)
      out[c * hw + i] = static_cast<float>(img.pixels[i * 3 + c]) / 255.0f;
  return out;
}

Tensor batch_tensor(const std::vector<std::vector<float>>& pool,
                    const std::vector<size_t>& picks, int res) {
  int64_t b = static_cast<int64_t>(picks.size());
  std::vector<float> data;
  data.reserve(static_cast<size_t>(b) * pool[picks[0]].size());
  for (size_t p : picks) data.insert(data.end(), pool[p].begin(), pool[p].end());
  return Tensor::from({b, 3, res, res}, std::move(data));
}

float grad_norm(Tensor t) {
  double acc = 0.0;
  for (float g : t.grad()) acc += static_cast<double>(g) * g;
  return static_cast<float>(std::sqrt(acc));
}

bool finite(float v) { return std::isfinite(v); }

}  // namespace

Tensor image_to_tensor(const render::MolImage& img) {
  return Tensor::from({1, 3, img.height, img.width}, image_floats(img));
}

render::MolImage tensor_to_image(const Tensor& x) {
  int64_t h = x.dim(x.rank() - 2), w = x.dim(x.rank() - 1);
  render::MolImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.resize(static_cast<size_t>(h * w * 3));
  size_t hw = static_cast<size_t>(h * w);
  const auto& v = x.data();
  for (size_t i = 0; i < hw; ++i)
    for (size_t c = 0; c < 3; ++c) {
      float p = std::clamp(v[c * hw + i], 0.0f, 1.0f);
      img.pixels[i * 3 + c] = static_cast<uint8_t>(std::lround(p * 255.0f));
    }
  return img;
}

// ------------------------------------------------------------------- model

VqModel VqModel::init(const VqConfig& cfg, Rng& rng) {
  VqModel m;
  m.cfg = cfg;
  m.e1w = conv_init(16, 3, 4, rng);
  m.e1b = bias_init(16);
  m.e2w = conv_init(32, 16, 4, rng);
  m.e2b = bias_init(32);
  m.e3w = conv_init(32, 32, 4, rng);
  m.e3b = bias_init(32);
  m.e4w = conv_init(cfg.code_dim, 32, 3, rng);
  m.e4b = bias_init(cfg.code_dim);
  m.d1w = conv_init(32, cfg.code_dim, 3, rng);
  m.d1b = bias_init(32);
  m.d2w = convt_init(32, 32, 4, rng);
  m.d2b = bias_init(32);
  m.d3w = convt_init(32, 16, 4, rng);
  m.d3b = bias_init(16);
  m.d4w = convt_init(16, 3, 4, rng);
  m.d4b = bias_init(3);
  m.codebook = Tensor::randn({cfg.codebook_size, cfg.code_dim}, rng, 1.0f, true);
  m.c1w = conv_init(16, 3, 4, rng);
  m.c1b = bias_init(16);
  m.c2w = conv_init(32, 16, 4, rng);
  m.c2b = bias_init(32);
  m.c3w = conv_init(1, 32, 3, rng);
  m.c3b = bias_init(1);
  return m;
}

Tensor VqModel::encode(const Tensor& x) const {
  Tensor h = tg::relu(tg::conv2d(x, e1w, e1b, 2, 1));
  h = tg::relu(tg::conv2d(h, e2w, e2b, 2, 1));
  h = tg::relu(tg::conv2d(h, e3w, e3b, 2, 1));
  return tg::conv2d(h, e4w, e4b, 1, 1);
}

Tensor VqModel::decode(const Tensor& z) const {
  Tensor h = tg::relu(tg::conv2d(z, d1w, d1b, 1, 1));
  h = tg::relu(tg::conv_transpose2d(h, d2w, d2b, 2, 1));
  h = tg::relu(tg::conv_transpose2d(h, d3w, d3b, 2, 1));
  return tg::sigmoid(tg::conv_transpose2d(h, d4w, d4b, 2, 1));
}

Tensor VqModel::discriminate(const Tensor& x) const {
  Tensor h = tg::relu(tg::conv2d(x, c1w, c1b, 2, 1));
  h = tg::relu(tg::conv2d(h, c2w, c2b, 2, 1));
  return tg::conv2d(h, c3w, c3b, 1, 1);
}

std::vector<Tensor> VqModel::generator_params() {
  return {e1w, e1b, e2w, e2b, e3w, e3b, e4w, e4b,
          d1w, d1b, d2w, d2b, d3w, d3b, d4w, d4b, codebook};
}

std::vector<Tensor> VqModel::discriminator_params() {
  return {c1w, c1b, c2w, c2b, c3w, c3b};
}

std::vector<std::pair<std::string, Tensor>> VqModel::named_params() {
  return {{"e1w", e1w}, {"e1b", e1b}, {"e2w", e2w}, {"e2b", e2b},
          {"e3w", e3w}, {"e3b", e3b}, {"e4w", e4w}, {"e4b", e4b},
          {"d1w", d1w}, {"d1b", d1b}, {"d2w", d2w}, {"d2b", d2b},
          {"d3w", d3w}, {"d3b", d3b}, {"d4w", d4w}, {"d4b", d4b},
          {"codebook", codebook},
          {"c1w", c1w}, {"c1b", c1b}, {"c2w", c2w}, {"c2b", c2b},
          {"c3w", c3w}, {"c3b", c3b}};
}

void VqModel::save(const std::string& path) const {
  auto named = const_cast<VqModel*>(this)->named_params();
  named.push_back({"config", Tensor::from({6}, {static_cast<float>(cfg.image_res),
                                               static_cast<float>(cfg.codebook_size),
                                               static_cast<float>(cfg.code_dim),
                                               static_cast<float>(cfg.grid),
                                               cfg.lambda1, cfg.delta})});
  tg::save_checkpoint(path, named);
}

VqModel VqModel::load(const std::string& path) {
  auto loaded = tg::load_checkpoint(path);
  VqModel m;
  auto take = [&](const std::string& name) -> Tensor {
    for (auto& [n, t] : loaded)
      if (n == name) {
        t.set_requires_grad(true);
        return t;
      }
    throw MissingUpstreamArtifact(path + ": missing parameter " + name);
  };
  Tensor cfg_t = take("config");
  m.cfg.image_res = static_cast<int>(cfg_t.data()[0]);
  m.cfg.codebook_size = static_cast<int>(cfg_t.data()[1]);
  m.cfg.code_dim = static_cast<int>(cfg_t.data()[2]);
  m.cfg.grid = static_cast<int>(cfg_t.data()[3]);
  m.cfg.lambda1 = cfg_t.data()[4];
  m.cfg.delta = cfg_t.data()[5];
  m.e1w = take("e1w"); m.e1b = take("e1b");
  m.e2w = take("e2w"); m.e2b = take("e2b");
  m.e3w = take("e3w"); m.e3b = take("e3b");
  m.e4w = take("e4w"); m.e4b = take("e4b");
  m.d1w = take("d1w"); m.d1b = take("d1b");
  m.d2w = take("d2w"); m.d2b = take("d2b");
  m.d3w = take("d3w"); m.d3b = take("d3b");
  m.d4w = take("d4w"); m.d4b = take("d4b");
  m.codebook = take("codebook");
  m.c1w = take("c1w"); m.c1b = take("c1b");
  m.c2w = take("c2w"); m.c2b = take("c2b");
  m.c3w = take("c3w"); m.c3b = take("c3b");
  return m;
}

// ---------------------------------------------------------------- quantize

QuantizeResult quantize(const Tensor& zhat, const Tensor& codebook) {
  if (zhat.rank() != 4 || codebook.rank() != 2 || zhat.dim(1) != codebook.dim(1))
    throw DimensionMismatch("quantize: latent depth " +
                            (zhat.rank() == 4 ? std::to_string(zhat.dim(1)) : std::string("?")) +
                            " vs codebook width " +
                            (codebook.rank() == 2 ? std::to_string(codebook.dim(1)) : std::string("?")));
  int64_t n = zhat.dim(0), d = zhat.dim(1), h = zhat.dim(2), w = zhat.dim(3);
  int64_t k = codebook.dim(0);
  const auto& zv = zhat.data();
  const auto& cv = codebook.data();
  std::vector<int> indices;
  indices.reserve(static_cast<size_t>(n * h * w));
  std::vector<int64_t> idx64;
  idx64.reserve(indices.capacity());
  for (int64_t img = 0; img < n; ++img)
    for (int64_t y = 0; y < h; ++y)
      for (int64_t x = 0; x < w; ++x) {
        float best = std::numeric_limits<float>::infinity();
        int best_k = 0;
        for (int64_t row = 0; row < k; ++row) {
          float dist = 0;
          for (int64_t c = 0; c < d; ++c) {
            float diff = zv[static_cast<size_t>(((img * d + c) * h + y) * w + x)] -
                         cv[static_cast<size_t>(row * d + c)];
            dist += diff * diff;
          }
          if (dist < best) {
            best = dist;
            best_k = static_cast<int>(row);
          }
        }
        indices.push_back(best_k);
        idx64.push_back(best_k);
      }
  // gather rows with a graph edge into the codebook, then move the depth
  // axis back in front of the spatial axes
  Tensor rows = tg::embedding_lookup(codebook, idx64);       // [n*h*w, d]
  Tensor zq = tg::reshape(rows, {n, h, w, d});
  zq = tg::transpose(zq, 2, 3);                              // [n, h, d, w]
  zq = tg::transpose(zq, 1, 2);                              // [n, d, h, w]
  return {zq, std::move(indices)};
}

VqvaeLossParts vqvae_loss(const Tensor& x, const Tensor& zhat, const Tensor& zq,
                          const Tensor& xhat) {
  VqvaeLossParts parts;
  parts.rec = tg::mse(xhat, x);
  parts.codebook = tg::mse(zq, tg::stop_gradient(zhat));
  parts.commit = tg::mse(zhat, tg::stop_gradient(zq));
  return parts;
}

// -------------------------------------------------------------- perceptual

Tensor Perceptual::features(const Tensor& x) const {
  Tensor h = tg::relu(tg::conv2d(x, w1, b1, 2, 1));
  return tg::relu(tg::conv2d(h, w2, b2, 2, 1));
}

Tensor perceptual_loss(const Tensor& x, const Tensor& xhat, const Perceptual& p) {
  return tg::mse(p.features(x), p.features(xhat));
}

Perceptual train_perceptual(const std::vector<render::MolImage>& images, int steps,
                            float lr, Rng& rng) {
  if (images.empty()) throw ConfigInvalid("train_perceptual: no images");
  int res = images[0].width;
  std::vector<std::vector<float>> pool;
  pool.reserve(images.size());
  for (const auto& img : images) pool.push_back(image_floats(img));

  Perceptual p;
  p.w1 = conv_init(8, 3, 4, rng);
  p.b1 = bias_init(8);
  p.w2 = conv_init(16, 8, 4, rng);
  p.b2 = bias_init(16);
  Tensor dw1 = convt_init(16, 8, 4, rng), db1 = bias_init(8);
  Tensor dw2 = convt_init(8, 3, 4, rng), db2 = bias_init(3);
  std::vector<Tensor> params = {p.w1, p.b1, p.w2, p.b2, dw1, db1, dw2, db2};
  tg::AdamConfig acfg;
  acfg.lr = lr;
  tg::AdamState astate;

  int batch = static_cast<int>(std::min<size_t>(8, pool.size()));
  for (int step = 0; step < steps; ++step) {
    std::vector<size_t> picks;
    for (int i = 0; i < batch; ++i)
      picks.push_back(static_cast<size_t>(rng.next_below(pool.size())));
    Tensor x = batch_tensor(pool, picks, res);
    Tensor f = p.features(x);
    Tensor h = tg::relu(tg::conv_transpose2d(f, dw1, db1, 2, 1));
    Tensor xhat = tg::sigmoid(tg::conv_transpose2d(h, dw2, db2, 2, 1));
    Tensor loss = tg::mse(xhat, x);
    if (!finite(loss.item())) throw NonFiniteLoss(step);
    tg::zero_grads(params);
    tg::backward(loss);
    tg::adam_step(params, acfg, astate);
  }
  p.w1.set_requires_grad(false);
  p.b1.set_requires_grad(false);
  p.w2.set_requires_grad(false);
  p.b2.set_requires_grad(false);
  return p;
}

// --------------------------------------------------------------------- gan

GanLossParts gan_losses(const Tensor& x, const Tensor& xhat, const VqModel& m) {
  GanLossParts parts;
  // -log sigma(z) = softplus(-z), -log(1 - sigma(z)) = softplus(z)
  parts.g = tg::mean(tg::softplus(tg::scale(m.discriminate(xhat), -1.0f)));
  Tensor d_real = tg::mean(tg::softplus(tg::scale(m.discriminate(x), -1.0f)));
  Tensor d_fake = tg::mean(tg::softplus(m.discriminate(tg::stop_gradient(xhat))));
  parts.d = tg::add(d_real, d_fake);
  return parts;
}

float adaptive_lambda2(const Tensor& nll, const Tensor& gan_g,
                       Tensor last_decoder_weight, float delta) {
  last_decoder_weight.zero_grad();
  tg::backward(nll);
  float n_rec = grad_norm(last_decoder_weight);
  last_decoder_weight.zero_grad();
  tg::backward(gan_g);
  float n_gan = grad_norm(last_decoder_weight);
  last_decoder_weight.zero_grad();
  float denom = n_gan + delta;
  if (denom == 0.0f) {
    std::fprintf(stderr, "adaptive_lambda2: GAN gradient norm underflowed, using 0\n");
    return 0.0f;
  }
  return std::clamp(n_rec / denom, 0.0f, 1e4f);
}

// ---------------------------------------------------------------- training

namespace {

struct ValSet {
  std::vector<std::vector<float>> images;
  int res;
};

// mean l_rec and l_perceptual over the validation images
std::pair<float, float> validate(const VqModel& m, const Perceptual& p,
                                 const ValSet& val, int batch) {
  double rec = 0, perc = 0;
  int64_t n = 0;
  for (size_t start = 0; start < val.images.size(); start += static_cast<size_t>(batch)) {
    std::vector<size_t> picks;
    for (size_t i = start; i < val.images.size() && i < start + static_cast<size_t>(batch); ++i)
      picks.push_back(i);
    Tensor x = batch_tensor(val.images, picks, val.res);
    Tensor zhat = m.encode(x);
    QuantizeResult q = quantize(zhat, m.codebook);
    Tensor xhat = m.decode(tg::straight_through(q.zq, zhat));
    rec += static_cast<double>(tg::mse(xhat, x).item()) * static_cast<double>(picks.size());
    perc += static_cast<double>(perceptual_loss(x, xhat, p).item()) *
            static_cast<double>(picks.size());
    n += static_cast<int64_t>(picks.size());
  }
  return {static_cast<float>(rec / static_cast<double>(n)),
          static_cast<float>(perc / static_cast<double>(n))};
}

std::vector<std::vector<float>> snapshot(VqModel& m) {
  std::vector<std::vector<float>> values;
  for (auto& [name, t] : m.named_params()) values.push_back(t.data());
  return values;
}

void restore(VqModel& m, const std::vector<std::vector<float>>& values) {
  auto named = m.named_params();
  for (size_t i = 0; i < named.size(); ++i) named[i].second.data() = values[i];
}

}  // namespace

TrainVqResult train_vq(const std::vector<render::MolImage>& images,
                       const VqConfig& cfg, Rng& rng) {
  if (images.empty()) throw ConfigInvalid("train_vq: no images");
  int res = cfg.image_res;
  for (const auto& img : images)
    if (img.width != res || img.height != res)
      throw ConfigInvalid("train_vq: image does not match configured resolution");

  std::vector<size_t> order(images.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng.engine());
  size_t n_val = std::max<size_t>(1, static_cast<size_t>(
      std::lround(static_cast<double>(images.size()) * cfg.val_fraction)));
  if (n_val >= images.size()) n_val = 1;

  std::vector<std::vector<float>> train_pool;
  ValSet val{{}, res};
  std::vector<render::MolImage> train_images;
  for (size_t i = 0; i < order.size(); ++i) {
    if (i < order.size() - n_val) {
      train_pool.push_back(image_floats(images[order[i]]));
      train_images.push_back(images[order[i]]);
    } else {
      val.images.push_back(image_floats(images[order[i]]));
    }
  }
  if (train_pool.empty()) {
    // datasets too small to split validate on the training image itself
    train_pool = val.images;
    train_images.push_back(images[order[0]]);
  }

  TrainVqResult result;
  Rng perc_rng(rng.next_u64(), "perceptual");
  result.perceptual = train_perceptual(train_images, cfg.perceptual_steps, 1e-3f, perc_rng);
  VqModel m = VqModel::init(cfg, rng);

  auto gen_params = m.generator_params();
  auto disc_params = m.discriminator_params();
  tg::AdamConfig gcfg, dcfg;
  gcfg.lr = cfg.lr;
  dcfg.lr = cfg.lr;
  tg::AdamState gstate, dstate;

  auto [rec0, perc0] = validate(m, result.perceptual, val, cfg.batch_size);
  result.untrained_val_rec = rec0;
  result.best_val = rec0 + cfg.lambda1 * perc0;
  result.best_step = -1;
  auto best_values = snapshot(m);

  int gan_start = static_cast<int>(static_cast<float>(cfg.steps) * cfg.gan_start_frac);
  int batch = static_cast<int>(std::min<size_t>(static_cast<size_t>(cfg.batch_size),
                                                train_pool.size()));
  int64_t epoch_len = (static_cast<int64_t>(train_pool.size()) + batch - 1) / batch;
  std::vector<int64_t> usage(static_cast<size_t>(cfg.codebook_size), 0);
  std::vector<float> last_zhat;  // encoder outputs for dead-entry reseeding
  int code_dim = cfg.code_dim;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<size_t> picks;
    for (int i = 0; i < batch; ++i)
      picks.push_back(static_cast<size_t>(rng.next_below(train_pool.size())));
    Tensor x = batch_tensor(train_pool, picks, res);
    Tensor zhat = m.encode(x);
    QuantizeResult q = quantize(zhat, m.codebook);
    for (int idx : q.indices) ++usage[static_cast<size_t>(idx)];
    last_zhat = zhat.data();
    Tensor zq_st = tg::straight_through(q.zq, zhat);
    Tensor xhat = m.decode(zq_st);
    VqvaeLossParts parts = vqvae_loss(x, zhat, q.zq, xhat);
    Tensor perc = perceptual_loss(x, xhat, result.perceptual);
    Tensor total = tg::add(tg::add(parts.rec, parts.codebook),
                           tg::add(parts.commit, tg::scale(perc, cfg.lambda1)));

    VqLossReport rep;
    rep.step = step;
    rep.l_rec = parts.rec.item();
    rep.l_codebook = parts.codebook.item();
    rep.l_commit = parts.commit.item();
    rep.l_perceptual = perc.item();

    bool gan_active = step >= gan_start;
    GanLossParts gan;
    if (gan_active) {
      gan = gan_losses(x, xhat, m);
      // lambda2 needs per-loss gradients at the last decoder layer, so the
      // two probe losses are rebuilt on fresh decoder graphs from a
      // detached latent
      Tensor z_detached = tg::stop_gradient(zq_st);
      Tensor xh_rec = m.decode(z_detached);
      Tensor nll_probe = tg::add(tg::mse(xh_rec, x),
                                 tg::scale(perceptual_loss(x, xh_rec, result.perceptual),
                                           cfg.lambda1));
      Tensor xh_gan = m.decode(z_detached);
      Tensor gan_probe = tg::mean(tg::softplus(tg::scale(m.discriminate(xh_gan), -1.0f)));
      rep.lambda2 = adaptive_lambda2(nll_probe, gan_probe, m.d4w, cfg.delta);
      rep.l_gan_g = gan.g.item();
      rep.l_gan_d = gan.d.item();
      total = tg::add(total, tg::scale(gan.g, rep.lambda2));
    }

    if (!finite(rep.l_rec) || !finite(rep.l_codebook) || !finite(rep.l_commit) ||
        !finite(rep.l_perceptual) || !finite(rep.l_gan_g) || !finite(rep.l_gan_d) ||
        !finite(rep.lambda2) || !finite(total.item()))
      throw NonFiniteLoss(step);

    tg::zero_grads(gen_params);
    tg::zero_grads(disc_params);
    tg::backward(total);
    tg::adam_step(gen_params, gcfg, gstate);

    if (gan_active) {
      tg::zero_grads(gen_params);
      tg::zero_grads(disc_params);
      tg::backward(gan.d);
      tg::adam_step(disc_params, dcfg, dstate);
    }
    result.curve.push_back(rep);

    // end of epoch: reseed codebook entries that went a full epoch unused
    if ((step + 1) % epoch_len == 0) {
      bool final_epoch = step + epoch_len >= cfg.steps;
      auto& cb = m.codebook.data();
      int64_t hw = static_cast<int64_t>(last_zhat.size()) / (batch * code_dim);
      for (int row = 0; row < cfg.codebook_size; ++row) {
        if (usage[static_cast<size_t>(row)] != 0) continue;
        int64_t img = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(batch)));
        int64_t pos = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(hw)));
        for (int c = 0; c < code_dim; ++c)
          cb[static_cast<size_t>(row * code_dim + c)] =
              last_zhat[static_cast<size_t>((img * code_dim + c) * hw + pos)];
      }
      if (!final_epoch) std::fill(usage.begin(), usage.end(), 0);
    }

    if ((step + 1) % cfg.val_every == 0 || step + 1 == cfg.steps) {
      auto [vrec, vperc] = validate(m, result.perceptual, val, batch);
      float score = vrec + cfg.lambda1 * vperc;
      result.val_curve.push_back(score);
      if (score < result.best_val) {
        result.best_val = score;
        result.best_step = step;
        best_values = snapshot(m);
      }
    }
  }

  restore(m, best_values);
  result.model = std::move(m);
  result.usage = std::move(usage);
  return result;
}

// ------------------------------------------------------------ token bridge

std::vector<int> image_to_tokens(const VqModel& m, const render::MolImage& img) {
  Tensor x = image_to_tensor(img);
  QuantizeResult q = quantize(m.encode(x), m.codebook);
  return q.indices;
}

render::MolImage tokens_to_image(const VqModel& m, const std::vector<int>& indices) {
  int h = m.cfg.grid, w = m.cfg.grid, d = m.cfg.code_dim;
  if (static_cast<int>(indices.size()) != h * w)
    throw DimensionMismatch("tokens_to_image: expected " + std::to_string(h * w) +
                            " indices, got " + std::to_string(indices.size()));
  for (int idx : indices)
    if (idx < 0 || idx >= m.cfg.codebook_size)
      throw IndexOutOfRange(idx, m.cfg.codebook_size);
  const auto& cb = m.codebook.data();
  std::vector<float> z(static_cast<size_t>(d * h * w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      int row = indices[static_cast<size_t>(y * w + x)];
      for (int c = 0; c < d; ++c)
        z[static_cast<size_t>((c * h + y) * w + x)] =
            cb[static_cast<size_t>(row * d + c)];
    }
  Tensor zt = Tensor::from({1, d, h, w}, std::move(z));
  return tensor_to_image(m.decode(zt));
}

}  // namespace chemlm::vq
