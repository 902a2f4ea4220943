#include "chemlm/lm/lm.hpp"

#include <algorithm>
#include <cmath>

#include "chemlm/tensor/checkpoint.hpp"
#include "chemlm/tensor/optim.hpp"

namespace chemlm::lm {

using tg::Tensor;

namespace {

constexpr float kInitStd = 0.02f;

Tensor ones(int64_t n) { return Tensor::constant({n}, 1.0f, true); }

}  // namespace

LmModel LmModel::init(const LmConfig& cfg, const TokenLayout& layout, Rng& rng) {
  if (cfg.dim % cfg.heads != 0)
    throw ConfigInvalid("lm: model dim must be divisible by heads");
  if (layout.vocab <= 0) throw ConfigInvalid("lm: empty vocabulary");
  LmModel m;
  m.cfg = cfg;
  m.layout = layout;
  int64_t d = cfg.dim, v = layout.vocab;
  m.tok_emb = Tensor::randn({v, d}, rng, kInitStd, true);
  for (int l = 0; l < cfg.layers; ++l) {
    LmLayer layer;
    layer.ln1 = ones(d);
    layer.wq = Tensor::randn({d, d}, rng, kInitStd, true);
    layer.wk = Tensor::randn({d, d}, rng, kInitStd, true);
    layer.wv = Tensor::randn({d, d}, rng, kInitStd, true);
    layer.wo = Tensor::randn({d, d}, rng, kInitStd, true);
    layer.ln2 = ones(d);
    layer.w1 = Tensor::randn({d, 4 * d}, rng, kInitStd, true);
    layer.b1 = Tensor::zeros({4 * d}, true);
    layer.w2 = Tensor::randn({4 * d, d}, rng, kInitStd, true);
    layer.b2 = Tensor::zeros({d}, true);
    m.layers.push_back(layer);
  }
  m.ln_f = ones(d);
  m.wout = Tensor::randn({d, v}, rng, kInitStd, true);
  // image-token output columns start at zero so every image id is initially
  // equally likely
  auto& w = m.wout.data();
  for (int64_t row = 0; row < d; ++row)
    for (int col = layout.image_base; col < layout.image_base + layout.n_image; ++col)
      w[static_cast<size_t>(row * v + col)] = 0.0f;
  return m;
}

Tensor LmModel::forward(const std::vector<int64_t>& ids, Rng* dropout_rng) const {
  int64_t L = static_cast<int64_t>(ids.size());
  if (L == 0) throw ConfigInvalid("lm forward: empty sequence");
  if (L > cfg.context) throw ContextOverflow(L, cfg.context);
  int64_t d = cfg.dim, heads = cfg.heads, hd = d / heads;
  float att_scale = 1.0f / std::sqrt(static_cast<float>(hd));
  auto drop = [&](const Tensor& t) {
    return dropout_rng ? tg::dropout(t, cfg.dropout, *dropout_rng) : t;
  };

  Tensor x = tg::embedding_lookup(tok_emb, ids);
  for (const LmLayer& layer : layers) {
    Tensor h = tg::rms_norm(x, layer.ln1);
    Tensor q = tg::rope(tg::reshape(tg::matmul(h, layer.wq), {L, heads, hd}));
    Tensor k = tg::rope(tg::reshape(tg::matmul(h, layer.wk), {L, heads, hd}));
    Tensor v = tg::reshape(tg::matmul(h, layer.wv), {L, heads, hd});
    q = tg::transpose(q, 0, 1);  // [H, L, hd]
    k = tg::transpose(k, 0, 1);
    v = tg::transpose(v, 0, 1);
    Tensor scores = tg::scale(tg::bmm(q, tg::transpose(k, 1, 2)), att_scale);
    Tensor att = tg::softmax(tg::causal_mask(scores));
    Tensor ctx = tg::reshape(tg::transpose(tg::bmm(att, v), 0, 1), {L, d});
    x = tg::add(x, drop(tg::matmul(ctx, layer.wo)));

    Tensor h2 = tg::rms_norm(x, layer.ln2);
    Tensor mid = tg::gelu(tg::add_bias(tg::matmul(h2, layer.w1), layer.b1));
    x = tg::add(x, drop(tg::add_bias(tg::matmul(mid, layer.w2), layer.b2)));
  }
  return tg::matmul(tg::rms_norm(x, ln_f), wout);
}

std::vector<Tensor> LmModel::params() {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_params())
    if (name != "config") out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> LmModel::named_params() {
  std::vector<std::pair<std::string, Tensor>> out = {{"tok_emb", tok_emb}};
  for (size_t l = 0; l < layers.size(); ++l) {
    std::string p = "L" + std::to_string(l) + ".";
    out.push_back({p + "ln1", layers[l].ln1});
    out.push_back({p + "wq", layers[l].wq});
    out.push_back({p + "wk", layers[l].wk});
    out.push_back({p + "wv", layers[l].wv});
    out.push_back({p + "wo", layers[l].wo});
    out.push_back({p + "ln2", layers[l].ln2});
    out.push_back({p + "w1", layers[l].w1});
    out.push_back({p + "b1", layers[l].b1});
    out.push_back({p + "w2", layers[l].w2});
    out.push_back({p + "b2", layers[l].b2});
  }
  out.push_back({"ln_f", ln_f});
  out.push_back({"wout", wout});
  return out;
}

void LmModel::save(const std::string& path) const {
  auto named = const_cast<LmModel*>(this)->named_params();
  named.push_back({"config", Tensor::from({18}, {
      static_cast<float>(cfg.layers), static_cast<float>(cfg.dim),
      static_cast<float>(cfg.heads), static_cast<float>(cfg.context),
      cfg.z_weight, cfg.lr, cfg.dropout, cfg.warmup_frac, cfg.weight_decay,
      static_cast<float>(cfg.steps),
      static_cast<float>(layout.vocab), static_cast<float>(layout.pad),
      static_cast<float>(layout.bos), static_cast<float>(layout.eos),
      static_cast<float>(layout.boi), static_cast<float>(layout.eoi),
      static_cast<float>(layout.image_base),
      static_cast<float>(layout.n_image)})});
  // image_span_len rides along separately to keep the config block flat
  named.push_back({"image_span", Tensor::from({1}, {static_cast<float>(layout.image_span_len)})});
  tg::save_checkpoint(path, named);
}

LmModel LmModel::load(const std::string& path) {
  auto loaded = tg::load_checkpoint(path);
  auto take = [&](const std::string& name) -> Tensor {
    for (auto& [n, t] : loaded)
      if (n == name) {
        t.set_requires_grad(true);
        return t;
      }
    throw MissingUpstreamArtifact(path + ": missing parameter " + name);
  };
  LmModel m;
  Tensor c = take("config");
  const auto& cv = c.data();
  m.cfg.layers = static_cast<int>(cv[0]);
  m.cfg.dim = static_cast<int>(cv[1]);
  m.cfg.heads = static_cast<int>(cv[2]);
  m.cfg.context = static_cast<int>(cv[3]);
  m.cfg.z_weight = cv[4];
  m.cfg.lr = cv[5];
  m.cfg.dropout = cv[6];
  m.cfg.warmup_frac = cv[7];
  m.cfg.weight_decay = cv[8];
  m.cfg.steps = static_cast<int>(cv[9]);
  m.layout.vocab = static_cast<int>(cv[10]);
  m.layout.pad = static_cast<int>(cv[11]);
  m.layout.bos = static_cast<int>(cv[12]);
  m.layout.eos = static_cast<int>(cv[13]);
  m.layout.boi = static_cast<int>(cv[14]);
  m.layout.eoi = static_cast<int>(cv[15]);
  m.layout.image_base = static_cast<int>(cv[16]);
  m.layout.n_image = static_cast<int>(cv[17]);
  m.layout.image_span_len = static_cast<int>(take("image_span").data()[0]);
  m.tok_emb = take("tok_emb");
  for (int l = 0; l < m.cfg.layers; ++l) {
    std::string p = "L" + std::to_string(l) + ".";
    LmLayer layer;
    layer.ln1 = take(p + "ln1");
    layer.wq = take(p + "wq");
    layer.wk = take(p + "wk");
    layer.wv = take(p + "wv");
    layer.wo = take(p + "wo");
    layer.ln2 = take(p + "ln2");
    layer.w1 = take(p + "w1");
    layer.b1 = take(p + "b1");
    layer.w2 = take(p + "w2");
    layer.b2 = take(p + "b2");
    m.layers.push_back(layer);
  }
  m.ln_f = take("ln_f");
  m.wout = take("wout");
  return m;
}

LmLossParts lm_loss(const Tensor& logits, const std::vector<int64_t>& targets,
                    const std::vector<uint8_t>& mask, float lambda) {
  LmLossParts parts;
  parts.ce = tg::cross_entropy(logits, targets, mask);
  int64_t n_masked = 0;
  std::vector<float> mvec(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) {
    mvec[i] = mask[i] ? 1.0f : 0.0f;
    n_masked += mask[i] ? 1 : 0;
  }
  Tensor lse = tg::log_sum_exp(logits);
  Tensor sq = tg::mul(lse, lse);
  Tensor masked = tg::mul(sq, Tensor::from({logits.dim(0)}, std::move(mvec)));
  parts.zloss = tg::scale(tg::sum(masked), lambda / static_cast<float>(n_masked));
  parts.total = tg::add(parts.ce, parts.zloss);
  return parts;
}

std::vector<LmStepReport> train_lm(LmModel& model, const std::vector<LmExample>& examples,
                                   Rng& rng) {
  if (examples.empty()) throw ConfigInvalid("train_lm: no examples");
  for (const auto& ex : examples) {
    if (ex.ids.size() < 2 || ex.target_mask.size() != ex.ids.size() - 1)
      throw ConfigInvalid("train_lm: example mask must cover ids[1..]");
    if (static_cast<int64_t>(ex.ids.size()) - 1 > model.cfg.context)
      throw ContextOverflow(static_cast<int64_t>(ex.ids.size()) - 1, model.cfg.context);
  }
  auto params = model.params();
  tg::AdamConfig acfg;
  acfg.lr = model.cfg.lr;
  acfg.weight_decay = model.cfg.weight_decay;
  acfg.decoupled = true;
  tg::AdamState state;
  int warmup = std::max(1, static_cast<int>(std::lround(
      static_cast<double>(model.cfg.steps) * model.cfg.warmup_frac)));

  std::vector<LmStepReport> curve;
  curve.reserve(static_cast<size_t>(model.cfg.steps));
  for (int step = 0; step < model.cfg.steps; ++step) {
    const LmExample& ex = examples[static_cast<size_t>(step) % examples.size()];
    std::vector<int64_t> inputs(ex.ids.begin(), ex.ids.end() - 1);
    std::vector<int64_t> targets(ex.ids.begin() + 1, ex.ids.end());
    Tensor logits = model.forward(inputs, &rng);
    LmLossParts loss = lm_loss(logits, targets, ex.target_mask, model.cfg.z_weight);

    LmStepReport rep;
    rep.step = step;
    rep.total = loss.total.item();
    rep.ce = loss.ce.item();
    rep.zloss = loss.zloss.item();
    if (!std::isfinite(rep.total)) throw NonFiniteLoss(step);

    float warm = std::min(1.0f, static_cast<float>(step + 1) / static_cast<float>(warmup));
    acfg.lr = model.cfg.lr * warm;
    rep.lr = acfg.lr;
    tg::zero_grads(params);
    tg::backward(loss.total);
    tg::adam_step(params, acfg, state);
    curve.push_back(rep);
  }
  return curve;
}

namespace {

int64_t sample_row(const std::vector<float>& row, const SamplerConfig& s, Rng& rng) {
  if (s.greedy) {
    int64_t best = 0;
    for (size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[static_cast<size_t>(best)]) best = static_cast<int64_t>(j);
    return best;
  }
  std::vector<std::pair<float, int64_t>> order;
  order.reserve(row.size());
  for (size_t j = 0; j < row.size(); ++j)
    if (row[j] > -1e29f) order.push_back({row[j], static_cast<int64_t>(j)});
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  size_t keep = s.top_k > 0 ? std::min(order.size(), static_cast<size_t>(s.top_k))
                            : order.size();
  float temp = std::max(s.temperature, 1e-6f);
  float mx = order[0].first;
  std::vector<double> probs(keep);
  double z = 0;
  for (size_t j = 0; j < keep; ++j) {
    probs[j] = std::exp(static_cast<double>((order[j].first - mx) / temp));
    z += probs[j];
  }
  double r = rng.next_double() * z;
  for (size_t j = 0; j < keep; ++j) {
    r -= probs[j];
    if (r <= 0) return order[j].second;
  }
  return order[keep - 1].second;
}

}  // namespace

std::vector<int64_t> generate(const LmModel& model, const std::vector<int64_t>& prompt,
                              const SamplerConfig& sampler, Rng& rng) {
  const TokenLayout& lay = model.layout;
  if (static_cast<int64_t>(prompt.size()) >= model.cfg.context)
    throw ContextOverflow(static_cast<int64_t>(prompt.size()), model.cfg.context);
  std::vector<int64_t> seq = prompt;
  int image_left = 0;  // pending image tokens inside an open <boi> block
  bool in_image = false;
  // resume mid-image-block prompts correctly
  for (int64_t id : prompt) {
    if (id == lay.boi) {
      in_image = true;
      image_left = lay.image_span_len;
    } else if (in_image && lay.is_image(static_cast<int>(id))) {
      --image_left;
    } else if (id == lay.eoi) {
      in_image = false;
      image_left = 0;
    }
  }

  for (int produced = 0; produced < sampler.max_new_tokens; ++produced) {
    if (static_cast<int64_t>(seq.size()) >= model.cfg.context) break;
    int64_t next;
    if (in_image && image_left == 0) {
      next = lay.eoi;  // a full image block always closes
    } else {
      Tensor logits = model.forward(seq, nullptr);
      int64_t v = logits.dim(1);
      int64_t last = logits.dim(0) - 1;
      std::vector<float> row(logits.data().begin() + last * v,
                             logits.data().begin() + (last + 1) * v);
      if (in_image) {
        for (int64_t j = 0; j < v; ++j)
          if (!lay.is_image(static_cast<int>(j))) row[static_cast<size_t>(j)] = -1e30f;
      } else {
        for (int j = lay.image_base; j < lay.image_base + lay.n_image; ++j)
          row[static_cast<size_t>(j)] = -1e30f;
        row[static_cast<size_t>(lay.eoi)] = -1e30f;  // never closes what never opened
        // refuse to open an image block that cannot finish before the
        // context edge or the token budget runs out
        int64_t room = std::min<int64_t>(
            model.cfg.context - static_cast<int64_t>(seq.size()),
            sampler.max_new_tokens - produced);
        if (room < lay.image_span_len + 2) row[static_cast<size_t>(lay.boi)] = -1e30f;
      }
      next = sample_row(row, sampler, rng);
    }
    seq.push_back(next);
    if (next == lay.eos) break;
    if (next == lay.boi) {
      in_image = true;
      image_left = lay.image_span_len;
    } else if (in_image && lay.is_image(static_cast<int>(next))) {
      --image_left;
    } else if (next == lay.eoi) {
      in_image = false;
      image_left = 0;
    }
  }
  return seq;
}

}  // namespace chemlm::lm
