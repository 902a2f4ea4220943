#pragma once

// One finite-difference trial generator per registered tensor op. Shared by
// the unit tests (a few seeds) and the acceptance suite (200 seeds per op).

#include <functional>
#include <string>
#include <vector>

#include "chemlm/tensor/tensor.hpp"
#include "gradcheck.hpp"

namespace op_trials {

using chemlm::Rng;
using namespace chemlm::tg;

struct OpTrial {
  std::string name;
  std::function<gradcheck::Result(uint64_t seed)> run;
};

inline Tensor rand_t(const Shape& s, Rng& rng, float lo = -1.0f, float hi = 1.0f) {
  std::vector<float> v(static_cast<size_t>(shape_numel(s)));
  for (auto& x : v) x = rng.next_uniform(lo, hi);
  return Tensor::from(s, std::move(v));
}

// values kept away from 0 so kinked activations stay FD-friendly
inline Tensor rand_away_from_zero(const Shape& s, Rng& rng) {
  std::vector<float> v(static_cast<size_t>(shape_numel(s)));
  for (auto& x : v) {
    float m = rng.next_uniform(0.2f, 1.5f);
    x = rng.next_double() < 0.5 ? -m : m;
  }
  return Tensor::from(s, std::move(v));
}

inline Tensor weighted_sum(const Tensor& out, Rng& rng) {
  return sum(mul(out, rand_t(out.shape(), rng, -1.0f, 1.0f)));
}

inline std::vector<OpTrial> all_trials() {
  std::vector<OpTrial> trials;
  auto add_trial = [&](const std::string& name, auto fn) {
    trials.push_back({name, fn});
  };

  add_trial("add", [](uint64_t seed) {
    Rng r(seed, "add");
    Tensor w = rand_t({3, 4}, r);
    return gradcheck::check({rand_t({3, 4}, r), rand_t({3, 4}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(add(l[0], l[1]), w)); });
  });
  add_trial("sub", [](uint64_t seed) {
    Rng r(seed, "sub");
    Tensor w = rand_t({3, 4}, r);
    return gradcheck::check({rand_t({3, 4}, r), rand_t({3, 4}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(sub(l[0], l[1]), w)); });
  });
  add_trial("mul", [](uint64_t seed) {
    Rng r(seed, "mul");
    Tensor w = rand_t({3, 4}, r);
    return gradcheck::check({rand_t({3, 4}, r), rand_t({3, 4}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(mul(l[0], l[1]), w)); });
  });
  add_trial("scale", [](uint64_t seed) {
    Rng r(seed, "scale");
    Tensor w = rand_t({5}, r);
    return gradcheck::check({rand_t({5}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(scale(l[0], 1.7f), w)); });
  });
  add_trial("add_scalar", [](uint64_t seed) {
    Rng r(seed, "add_scalar");
    Tensor w = rand_t({5}, r);
    return gradcheck::check({rand_t({5}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(add_scalar(l[0], 0.3f), w)); });
  });
  add_trial("add_bias", [](uint64_t seed) {
    Rng r(seed, "add_bias");
    Tensor w = rand_t({4, 3}, r);
    return gradcheck::check({rand_t({4, 3}, r), rand_t({3}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(add_bias(l[0], l[1]), w)); });
  });
  add_trial("relu", [](uint64_t seed) {
    Rng r(seed, "relu");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_away_from_zero({6}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(relu(l[0]), w)); });
  });
  add_trial("gelu", [](uint64_t seed) {
    Rng r(seed, "gelu");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_t({6}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(gelu(l[0]), w)); });
  });
  add_trial("tanh", [](uint64_t seed) {
    Rng r(seed, "tanh");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_t({6}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(tanh_op(l[0]), w)); });
  });
  add_trial("sigmoid", [](uint64_t seed) {
    Rng r(seed, "sigmoid");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_t({6}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(sigmoid(l[0]), w)); });
  });
  add_trial("softplus", [](uint64_t seed) {
    Rng r(seed, "softplus");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_t({6}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(softplus(l[0]), w)); });
  });
  add_trial("sum", [](uint64_t seed) {
    Rng r(seed, "sum");
    return gradcheck::check({rand_t({7}, r)},
                            [&](std::vector<Tensor>& l) { return sum(l[0]); });
  });
  add_trial("mean", [](uint64_t seed) {
    Rng r(seed, "mean");
    return gradcheck::check({rand_t({7}, r)},
                            [&](std::vector<Tensor>& l) { return mean(l[0]); });
  });
  add_trial("reshape", [](uint64_t seed) {
    Rng r(seed, "reshape");
    Tensor w = rand_t({6}, r);
    return gradcheck::check({rand_t({2, 3}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(reshape(l[0], {6}), w)); });
  });
  add_trial("transpose", [](uint64_t seed) {
    Rng r(seed, "transpose");
    Tensor w = rand_t({4, 2, 3}, r);
    return gradcheck::check({rand_t({2, 4, 3}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(transpose(l[0], 0, 1), w)); });
  });
  add_trial("slice0", [](uint64_t seed) {
    Rng r(seed, "slice0");
    Tensor w = rand_t({2, 3}, r);
    return gradcheck::check({rand_t({5, 3}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(slice0(l[0], 1, 2), w)); });
  });
  add_trial("matmul", [](uint64_t seed) {
    Rng r(seed, "matmul");
    Tensor w = rand_t({3, 4}, r);
    return gradcheck::check({rand_t({3, 5}, r), rand_t({5, 4}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(matmul(l[0], l[1]), w)); });
  });
  add_trial("bmm", [](uint64_t seed) {
    Rng r(seed, "bmm");
    Tensor w = rand_t({2, 3, 4}, r);
    return gradcheck::check({rand_t({2, 3, 5}, r), rand_t({2, 5, 4}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(bmm(l[0], l[1]), w)); });
  });
  add_trial("conv2d", [](uint64_t seed) {
    Rng r(seed, "conv2d");
    Tensor w = rand_t({1, 3, 3, 3}, r);
    return gradcheck::check(
        {rand_t({1, 2, 5, 5}, r), rand_t({3, 2, 3, 3}, r, -0.5f, 0.5f), rand_t({3}, r)},
        [&](std::vector<Tensor>& l) { return sum(mul(conv2d(l[0], l[1], l[2], 2, 1), w)); });
  });
  add_trial("conv_transpose2d", [](uint64_t seed) {
    Rng r(seed, "convt");
    Tensor w = rand_t({1, 3, 6, 6}, r);
    return gradcheck::check(
        {rand_t({1, 2, 3, 3}, r), rand_t({2, 3, 4, 4}, r, -0.5f, 0.5f), rand_t({3}, r)},
        [&](std::vector<Tensor>& l) {
          return sum(mul(conv_transpose2d(l[0], l[1], l[2], 2, 1), w));
        });
  });
  add_trial("softmax", [](uint64_t seed) {
    Rng r(seed, "softmax");
    Tensor w = rand_t({3, 5}, r);
    return gradcheck::check({rand_t({3, 5}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(softmax(l[0]), w)); });
  });
  add_trial("log_sum_exp", [](uint64_t seed) {
    Rng r(seed, "lse");
    Tensor w = rand_t({3}, r);
    return gradcheck::check({rand_t({3, 5}, r, -2.0f, 2.0f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(log_sum_exp(l[0]), w)); });
  });
  add_trial("group_norm", [](uint64_t seed) {
    Rng r(seed, "gn");
    Tensor w = rand_t({2, 4, 3, 3}, r);
    return gradcheck::check(
        {rand_t({2, 4, 3, 3}, r), rand_t({4}, r, 0.5f, 1.5f), rand_t({4}, r)},
        [&](std::vector<Tensor>& l) {
          return sum(mul(group_norm(l[0], l[1], l[2], 2), w));
        });
  });
  add_trial("rms_norm", [](uint64_t seed) {
    Rng r(seed, "rms");
    Tensor w = rand_t({3, 6}, r);
    return gradcheck::check({rand_t({3, 6}, r), rand_t({6}, r, 0.5f, 1.5f)},
                            [&](std::vector<Tensor>& l) { return sum(mul(rms_norm(l[0], l[1]), w)); });
  });
  add_trial("embedding_lookup", [](uint64_t seed) {
    Rng r(seed, "emb");
    std::vector<int64_t> ids = {static_cast<int64_t>(r.next_below(6)),
                                static_cast<int64_t>(r.next_below(6)),
                                static_cast<int64_t>(r.next_below(6))};
    Tensor w = rand_t({3, 4}, r);
    return gradcheck::check({rand_t({6, 4}, r)},
                            [&, ids](std::vector<Tensor>& l) {
                              return sum(mul(embedding_lookup(l[0], ids), w));
                            });
  });
  add_trial("rope", [](uint64_t seed) {
    Rng r(seed, "rope");
    Tensor w = rand_t({4, 2, 6}, r);
    return gradcheck::check({rand_t({4, 2, 6}, r)},
                            [&](std::vector<Tensor>& l) { return sum(mul(rope(l[0]), w)); });
  });
  add_trial("causal_mask", [](uint64_t seed) {
    Rng r(seed, "mask");
    Tensor w = rand_t({2, 4, 4}, r);
    return gradcheck::check({rand_t({2, 4, 4}, r)},
                            [&](std::vector<Tensor>& l) {
                              return sum(mul(softmax(causal_mask(l[0])), w));
                            });
  });
  add_trial("dropout", [](uint64_t seed) {
    Rng rr(seed, "dropout");
    Tensor w = rand_t({8}, rr);
    Tensor x = rand_t({8}, rr);
    // the mask must be identical on every rebuild for FD to be meaningful
    return gradcheck::check({x}, [seed, &w](std::vector<Tensor>& l) {
      Rng mask_rng(seed, "dropout-mask");
      return sum(mul(dropout(l[0], 0.3f, mask_rng), w));
    });
  });
  add_trial("mse", [](uint64_t seed) {
    Rng r(seed, "mse");
    return gradcheck::check({rand_t({3, 4}, r), rand_t({3, 4}, r)},
                            [&](std::vector<Tensor>& l) { return mse(l[0], l[1]); });
  });
  add_trial("cross_entropy", [](uint64_t seed) {
    Rng r(seed, "ce");
    std::vector<int64_t> targets(5);
    std::vector<uint8_t> mask(5);
    for (auto& t : targets) t = static_cast<int64_t>(r.next_below(4));
    for (auto& m : mask) m = r.next_double() < 0.6 ? 1 : 0;
    mask[0] = 1;
    return gradcheck::check({rand_t({5, 4}, r, -2.0f, 2.0f)},
                            [&, targets, mask](std::vector<Tensor>& l) {
                              return cross_entropy(l[0], targets, mask);
                            });
  });
  // stop_gradient and straight_through are definitional: the forward value
  // depends on inputs whose gradient is deliberately cut, so a finite
  // difference would disagree by construction. Checked against the stated
  // routing contract instead.
  add_trial("stop_gradient", [](uint64_t seed) {
    Rng r(seed, "sg");
    Tensor x = rand_t({5}, r);
    x.set_requires_grad(true);
    Tensor w = rand_t({5}, r);
    Tensor y = stop_gradient(x);
    Tensor probe = add(mul(x, w), mul(y, w));
    Tensor loss = sum(probe);
    x.zero_grad();
    backward(loss);
    gradcheck::Result res;
    for (size_t i = 0; i < 5; ++i) {
      if (y.data()[i] != x.data()[i]) {
        res.ok = false;
        res.detail = "stop_gradient altered forward value";
        return res;
      }
      // only the direct x*w path contributes
      if (std::fabs(x.grad()[i] - w.data()[i]) > 1e-6f) {
        res.ok = false;
        res.detail = "gradient leaked through stop_gradient";
        return res;
      }
    }
    return res;
  });
  add_trial("straight_through", [](uint64_t seed) {
    Rng r(seed, "st");
    Tensor zq = rand_t({6}, r);
    Tensor zhat = rand_t({6}, r);
    zq.set_requires_grad(true);
    zhat.set_requires_grad(true);
    Tensor w = rand_t({6}, r);
    Tensor out = straight_through(zq, zhat);
    Tensor loss = sum(mul(out, w));
    zq.zero_grad();
    zhat.zero_grad();
    backward(loss);
    gradcheck::Result res;
    for (size_t i = 0; i < 6; ++i) {
      if (std::fabs(out.data()[i] - zq.data()[i]) > 1e-6f) {
        res.ok = false;
        res.detail = "straight_through forward != zq";
        return res;
      }
      if (std::fabs(zhat.grad()[i] - w.data()[i]) > 1e-6f) {
        res.ok = false;
        res.detail = "straight_through zhat gradient is not identity";
        return res;
      }
      if (zq.has_grad() && std::fabs(zq.grad()[i]) > 0.0f) {
        res.ok = false;
        res.detail = "straight_through leaked gradient to zq";
        return res;
      }
    }
    return res;
  });
  return trials;
}

}  // namespace op_trials
