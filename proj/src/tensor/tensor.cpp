#include "chemlm/tensor/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace chemlm::tg {

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

namespace {

std::shared_ptr<Node> make_leaf(const Shape& s, std::vector<float> v, bool rg) {
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->value = std::move(v);
  n->requires_grad = rg;
  return n;
}

std::shared_ptr<Node> make_op(const Shape& s,
                              std::vector<std::shared_ptr<Node>> parents) {
  auto n = std::make_shared<Node>();
  n->shape = s;
  n->value.assign(static_cast<size_t>(shape_numel(s)), 0.0f);
  for (auto& p : parents)
    if (p->requires_grad) n->requires_grad = true;
  n->parents = std::move(parents);
  return n;
}

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeMismatch(op, a.shape(), b.shape());
}

}  // namespace

Tensor Tensor::zeros(const Shape& s, bool rg) {
  return Tensor(make_leaf(s, std::vector<float>(static_cast<size_t>(shape_numel(s)), 0.0f), rg));
}

Tensor Tensor::constant(const Shape& s, float v, bool rg) {
  return Tensor(make_leaf(s, std::vector<float>(static_cast<size_t>(shape_numel(s)), v), rg));
}

Tensor Tensor::from(const Shape& s, std::vector<float> v, bool rg) {
  if (static_cast<int64_t>(v.size()) != shape_numel(s))
    throw ShapeMismatch("Tensor::from: data length does not match shape " + shape_str(s));
  return Tensor(make_leaf(s, std::move(v), rg));
}

Tensor Tensor::randn(const Shape& s, Rng& rng, float stddev, bool rg) {
  std::vector<float> v(static_cast<size_t>(shape_numel(s)));
  for (auto& x : v) x = rng.next_normal(stddev);
  return Tensor(make_leaf(s, std::move(v), rg));
}

float Tensor::item() const {
  if (node_->value.size() != 1)
    throw ShapeMismatch("item() on non-scalar tensor " + shape_str(node_->shape));
  return node_->value[0];
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ShapeMismatch("backward() requires a scalar loss, got " + shape_str(loss.shape()));
  // post-order DFS
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(loss.node().get(), 0);
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [n, idx] = stack.back();
    if (idx < n->parents.size()) {
      Node* p = n->parents[idx++].get();
      if (!visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0f;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && n->requires_grad) {
      for (auto& p : n->parents) p->ensure_grad();
      n->backward_fn();
    }
  }
}

// ---------------------------------------------------------------- arithmetic

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  auto n = make_op(a.shape(), {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i];
  Node* self = n.get();
  n->backward_fn = [self] {
    auto& ga = self->parents[0]->grad;
    auto& gb = self->parents[1]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) {
      ga[i] += self->grad[i];
      gb[i] += self->grad[i];
    }
  };
  return Tensor(n);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  auto n = make_op(a.shape(), {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] - bv[i];
  Node* self = n.get();
  n->backward_fn = [self] {
    auto& ga = self->parents[0]->grad;
    auto& gb = self->parents[1]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) {
      ga[i] += self->grad[i];
      gb[i] -= self->grad[i];
    }
  };
  return Tensor(n);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  auto n = make_op(a.shape(), {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * bv[i];
  Node* self = n.get();
  std::vector<float> sa = av, sb = bv;
  n->backward_fn = [self, sa = std::move(sa), sb = std::move(sb)] {
    auto& ga = self->parents[0]->grad;
    auto& gb = self->parents[1]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) {
      ga[i] += self->grad[i] * sb[i];
      gb[i] += self->grad[i] * sa[i];
    }
  };
  return Tensor(n);
}

Tensor scale(const Tensor& a, float s) {
  auto n = make_op(a.shape(), {a.node()});
  const auto& av = a.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] * s;
  Node* self = n.get();
  n->backward_fn = [self, s] {
    auto& ga = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i] * s;
  };
  return Tensor(n);
}

Tensor add_scalar(const Tensor& a, float s) {
  auto n = make_op(a.shape(), {a.node()});
  const auto& av = a.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + s;
  Node* self = n.get();
  n->backward_fn = [self] {
    auto& ga = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i];
  };
  return Tensor(n);
}

Tensor add_bias(const Tensor& a, const Tensor& b) {
  if (b.rank() != 1 || a.dim(a.rank() - 1) != b.dim(0))
    throw ShapeMismatch("add_bias", a.shape(), b.shape());
  auto n = make_op(a.shape(), {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  const size_t c = bv.size();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = av[i] + bv[i % c];
  Node* self = n.get();
  n->backward_fn = [self, c] {
    auto& ga = self->parents[0]->grad;
    auto& gb = self->parents[1]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) {
      ga[i] += self->grad[i];
      gb[i % c] += self->grad[i];
    }
  };
  return Tensor(n);
}

// -------------------------------------------------------------- activations

namespace {

template <typename F, typename DF>
Tensor unary_op(const Tensor& a, F f, DF df) {
  auto n = make_op(a.shape(), {a.node()});
  const auto& av = a.data();
  for (size_t i = 0; i < n->value.size(); ++i) n->value[i] = f(av[i]);
  Node* self = n.get();
  std::vector<float> saved = av;
  n->backward_fn = [self, df, saved = std::move(saved)] {
    auto& ga = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i)
      ga[i] += self->grad[i] * df(saved[i], self->value[i]);
  };
  return Tensor(n);
}

}  // namespace

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](float x) { return x > 0.0f ? x : 0.0f; },
      [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      a, [](float x) { return std::tanh(x); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus(const Tensor& a) {
  return unary_op(
      a,
      [](float x) {
        // log(1+exp(x)) without overflow
        return std::max(x, 0.0f) + std::log1p(std::exp(-std::fabs(x)));
      },
      [](float x, float) { return 1.0f / (1.0f + std::exp(-x)); });
}

Tensor gelu(const Tensor& a) {
  // tanh approximation; the backward differentiates the same approximation
  constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr float kA = 0.044715f;
  return unary_op(
      a,
      [](float x) {
        float u = kC * (x + kA * x * x * x);
        return 0.5f * x * (1.0f + std::tanh(u));
      },
      [](float x, float) {
        float u = kC * (x + kA * x * x * x);
        float t = std::tanh(u);
        float du = kC * (1.0f + 3.0f * kA * x * x);
        return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
      });
}

// --------------------------------------------------------------- reductions

Tensor sum(const Tensor& a) {
  auto n = make_op({1}, {a.node()});
  float acc = 0.0f;
  for (float x : a.data()) acc += x;
  n->value[0] = acc;
  Node* self = n.get();
  n->backward_fn = [self] {
    auto& ga = self->parents[0]->grad;
    float g = self->grad[0];
    for (auto& x : ga) x += g;
  };
  return Tensor(n);
}

Tensor mean(const Tensor& a) {
  auto n = make_op({1}, {a.node()});
  float acc = 0.0f;
  for (float x : a.data()) acc += x;
  float inv = 1.0f / static_cast<float>(a.numel());
  n->value[0] = acc * inv;
  Node* self = n.get();
  n->backward_fn = [self, inv] {
    auto& ga = self->parents[0]->grad;
    float g = self->grad[0] * inv;
    for (auto& x : ga) x += g;
  };
  return Tensor(n);
}

Tensor reshape(const Tensor& a, const Shape& s) {
  if (shape_numel(s) != a.numel())
    throw ShapeMismatch("reshape", a.shape(), s);
  auto n = make_op(s, {a.node()});
  n->value = a.data();
  Node* self = n.get();
  n->backward_fn = [self] {
    auto& ga = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i) ga[i] += self->grad[i];
  };
  return Tensor(n);
}

namespace {

std::vector<int64_t> row_major_strides(const Shape& s) {
  std::vector<int64_t> st(s.size());
  int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<size_t>(i)] = acc;
    acc *= s[static_cast<size_t>(i)];
  }
  return st;
}

}  // namespace

Tensor transpose(const Tensor& a, int d0, int d1) {
  Shape s = a.shape();
  std::swap(s[static_cast<size_t>(d0)], s[static_cast<size_t>(d1)]);
  auto n = make_op(s, {a.node()});
  const auto& av = a.data();
  auto in_strides = row_major_strides(a.shape());
  std::swap(in_strides[static_cast<size_t>(d0)], in_strides[static_cast<size_t>(d1)]);
  auto out_strides = row_major_strides(s);
  const int rank = static_cast<int>(s.size());
  const int64_t total = a.numel();
  std::vector<int64_t> perm_map(static_cast<size_t>(total));
  for (int64_t out = 0; out < total; ++out) {
    int64_t rem = out, src = 0;
    for (int d = 0; d < rank; ++d) {
      int64_t idx = rem / out_strides[static_cast<size_t>(d)];
      rem %= out_strides[static_cast<size_t>(d)];
      src += idx * in_strides[static_cast<size_t>(d)];
    }
    perm_map[static_cast<size_t>(out)] = src;
    n->value[static_cast<size_t>(out)] = av[static_cast<size_t>(src)];
  }
  Node* self = n.get();
  n->backward_fn = [self, perm_map = std::move(perm_map)] {
    auto& ga = self->parents[0]->grad;
    for (size_t out = 0; out < self->grad.size(); ++out)
      ga[static_cast<size_t>(perm_map[out])] += self->grad[out];
  };
  return Tensor(n);
}

Tensor slice0(const Tensor& a, int64_t start, int64_t len) {
  Shape s = a.shape();
  if (start < 0 || start + len > s[0])
    throw ShapeMismatch("slice0 out of range on " + shape_str(s));
  int64_t inner = a.numel() / s[0];
  s[0] = len;
  auto n = make_op(s, {a.node()});
  const auto& av = a.data();
  std::copy(av.begin() + start * inner, av.begin() + (start + len) * inner,
            n->value.begin());
  Node* self = n.get();
  n->backward_fn = [self, start, inner] {
    auto& ga = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i)
      ga[static_cast<size_t>(start * inner) + i] += self->grad[i];
  };
  return Tensor(n);
}

// ------------------------------------------------------------ linear algebra

namespace {

void mm(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t nn) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    float* crow = c + i * nn;
    for (int64_t j = 0; j < nn; ++j) crow[j] = 0.0f;
    const float* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      float av = arow[p];
      const float* brow = b + p * nn;
      for (int64_t j = 0; j < nn; ++j) crow[j] += av * brow[j];
    }
  }
}

// c[m,k] += a[m,n] * b^T[n,k]  (b given as [k,n])
void mm_nt(const float* a, const float* b, float* c, int64_t m, int64_t n, int64_t k) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < m; ++i) {
    const float* arow = a + i * n;
    float* crow = c + i * k;
    for (int64_t j = 0; j < k; ++j) {
      const float* brow = b + j * n;
      float acc = 0.0f;
      for (int64_t p = 0; p < n; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// c[k,n] += a^T[k,m] * b[m,n]  (a given as [m,k])
void mm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
#pragma omp parallel for schedule(static)
  for (int64_t i = 0; i < k; ++i) {
    float* crow = c + i * n;
    for (int64_t p = 0; p < m; ++p) {
      float av = a[p * k + i];
      const float* brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeMismatch("matmul", a.shape(), b.shape());
  int64_t m = a.dim(0), k = a.dim(1), nn = b.dim(1);
  auto n = make_op({m, nn}, {a.node(), b.node()});
  mm(a.data().data(), b.data().data(), n->value.data(), m, k, nn);
  Node* self = n.get();
  std::vector<float> sa = a.data(), sb = b.data();
  n->backward_fn = [self, m, k, nn, sa = std::move(sa), sb = std::move(sb)] {
    // dA += dC * B^T ; dB += A^T * dC
    mm_nt(self->grad.data(), sb.data(), self->parents[0]->grad.data(), m, nn, k);
    mm_tn(sa.data(), self->grad.data(), self->parents[1]->grad.data(), m, k, nn);
  };
  return Tensor(n);
}

Tensor bmm(const Tensor& a, const Tensor& b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
    throw ShapeMismatch("bmm", a.shape(), b.shape());
  int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), nn = b.dim(2);
  auto n = make_op({bs, m, nn}, {a.node(), b.node()});
  for (int64_t i = 0; i < bs; ++i)
    mm(a.data().data() + i * m * k, b.data().data() + i * k * nn,
       n->value.data() + i * m * nn, m, k, nn);
  Node* self = n.get();
  std::vector<float> sa = a.data(), sb = b.data();
  n->backward_fn = [self, bs, m, k, nn, sa = std::move(sa), sb = std::move(sb)] {
    for (int64_t i = 0; i < bs; ++i) {
      mm_nt(self->grad.data() + i * m * nn, sb.data() + i * k * nn,
            self->parents[0]->grad.data() + i * m * k, m, nn, k);
      mm_tn(sa.data() + i * m * k, self->grad.data() + i * m * nn,
            self->parents[1]->grad.data() + i * k * nn, m, k, nn);
    }
  };
  return Tensor(n);
}

// -------------------------------------------------------------- convolution

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(1))
    throw ShapeMismatch("conv2d", x.shape(), w.shape());
  if (b.rank() != 1 || b.dim(0) != w.dim(0))
    throw ShapeMismatch("conv2d bias", b.shape(), w.shape());
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t O = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int64_t OH = (H + 2 * pad - kh) / stride + 1;
  int64_t OW = (W + 2 * pad - kw) / stride + 1;
  auto n = make_op({N, O, OH, OW}, {x.node(), w.node(), b.node()});
  const float* xv = x.data().data();
  const float* wv = w.data().data();
  const float* bv = b.data().data();
  float* yv = n->value.data();
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t img = 0; img < N; ++img) {
    for (int64_t o = 0; o < O; ++o) {
      for (int64_t oy = 0; oy < OH; ++oy) {
        for (int64_t ox = 0; ox < OW; ++ox) {
          float acc = bv[o];
          for (int64_t c = 0; c < C; ++c) {
            for (int64_t ky = 0; ky < kh; ++ky) {
              int64_t iy = oy * stride + ky - pad;
              if (iy < 0 || iy >= H) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t ix = ox * stride + kx - pad;
                if (ix < 0 || ix >= W) continue;
                acc += xv[((img * C + c) * H + iy) * W + ix] *
                       wv[((o * C + c) * kh + ky) * kw + kx];
              }
            }
          }
          yv[((img * O + o) * OH + oy) * OW + ox] = acc;
        }
      }
    }
  }
  Node* self = n.get();
  std::vector<float> sx = x.data(), sw = w.data();
  n->backward_fn = [self, N, C, H, W, O, kh, kw, OH, OW, stride, pad,
                    sx = std::move(sx), sw = std::move(sw)] {
    auto& gx = self->parents[0]->grad;
    auto& gw = self->parents[1]->grad;
    auto& gb = self->parents[2]->grad;
    const float* gy = self->grad.data();
    for (int64_t img = 0; img < N; ++img)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t oy = 0; oy < OH; ++oy)
          for (int64_t ox = 0; ox < OW; ++ox) {
            float g = gy[((img * O + o) * OH + oy) * OW + ox];
            gb[static_cast<size_t>(o)] += g;
            for (int64_t c = 0; c < C; ++c)
              for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t iy = oy * stride + ky - pad;
                if (iy < 0 || iy >= H) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                  int64_t ix = ox * stride + kx - pad;
                  if (ix < 0 || ix >= W) continue;
                  size_t xi = static_cast<size_t>(((img * C + c) * H + iy) * W + ix);
                  size_t wi = static_cast<size_t>(((o * C + c) * kh + ky) * kw + kx);
                  gx[xi] += g * sw[wi];
                  gw[wi] += g * sx[xi];
                }
              }
          }
  };
  return Tensor(n);
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b,
                        int stride, int pad) {
  // w: [C_in, C_out, kh, kw]
  if (x.rank() != 4 || w.rank() != 4 || x.dim(1) != w.dim(0))
    throw ShapeMismatch("conv_transpose2d", x.shape(), w.shape());
  if (b.rank() != 1 || b.dim(0) != w.dim(1))
    throw ShapeMismatch("conv_transpose2d bias", b.shape(), w.shape());
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int64_t O = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  int64_t OH = (H - 1) * stride - 2 * pad + kh;
  int64_t OW = (W - 1) * stride - 2 * pad + kw;
  auto n = make_op({N, O, OH, OW}, {x.node(), w.node(), b.node()});
  const float* xv = x.data().data();
  const float* wv = w.data().data();
  const float* bv = b.data().data();
  float* yv = n->value.data();
  for (int64_t img = 0; img < N; ++img)
    for (int64_t o = 0; o < O; ++o)
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox)
          yv[((img * O + o) * OH + oy) * OW + ox] = bv[o];
  for (int64_t img = 0; img < N; ++img)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t iy = 0; iy < H; ++iy)
        for (int64_t ix = 0; ix < W; ++ix) {
          float xval = xv[((img * C + c) * H + iy) * W + ix];
          for (int64_t o = 0; o < O; ++o)
            for (int64_t ky = 0; ky < kh; ++ky) {
              int64_t oy = iy * stride + ky - pad;
              if (oy < 0 || oy >= OH) continue;
              for (int64_t kx = 0; kx < kw; ++kx) {
                int64_t ox = ix * stride + kx - pad;
                if (ox < 0 || ox >= OW) continue;
                yv[((img * O + o) * OH + oy) * OW + ox] +=
                    xval * wv[((c * O + o) * kh + ky) * kw + kx];
              }
            }
        }
  Node* self = n.get();
  std::vector<float> sx = x.data(), sw = w.data();
  n->backward_fn = [self, N, C, H, W, O, kh, kw, OH, OW, stride, pad,
                    sx = std::move(sx), sw = std::move(sw)] {
    auto& gx = self->parents[0]->grad;
    auto& gw = self->parents[1]->grad;
    auto& gb = self->parents[2]->grad;
    const float* gy = self->grad.data();
    for (int64_t img = 0; img < N; ++img)
      for (int64_t o = 0; o < O; ++o)
        for (int64_t oy = 0; oy < OH; ++oy)
          for (int64_t ox = 0; ox < OW; ++ox)
            gb[static_cast<size_t>(o)] += gy[((img * O + o) * OH + oy) * OW + ox];
    for (int64_t img = 0; img < N; ++img)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t iy = 0; iy < H; ++iy)
          for (int64_t ix = 0; ix < W; ++ix) {
            size_t xi = static_cast<size_t>(((img * C + c) * H + iy) * W + ix);
            for (int64_t o = 0; o < O; ++o)
              for (int64_t ky = 0; ky < kh; ++ky) {
                int64_t oy = iy * stride + ky - pad;
                if (oy < 0 || oy >= OH) continue;
                for (int64_t kx = 0; kx < kw; ++kx) {
                  int64_t ox = ix * stride + kx - pad;
                  if (ox < 0 || ox >= OW) continue;
                  size_t wi = static_cast<size_t>(((c * O + o) * kh + ky) * kw + kx);
                  float g = gy[((img * O + o) * OH + oy) * OW + ox];
                  gx[xi] += g * sw[wi];
                  gw[wi] += g * sx[xi];
                }
              }
          }
  };
  return Tensor(n);
}

// ------------------------------------------------------ softmax / normalizers

Tensor softmax(const Tensor& a) {
  int64_t V = a.dim(a.rank() - 1);
  int64_t rows = a.numel() / V;
  auto n = make_op(a.shape(), {a.node()});
  const float* av = a.data().data();
  float* yv = n->value.data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* in = av + r * V;
    float* out = yv + r * V;
    float mx = in[0];
    for (int64_t j = 1; j < V; ++j) mx = std::max(mx, in[j]);
    float z = 0.0f;
    for (int64_t j = 0; j < V; ++j) {
      out[j] = std::exp(in[j] - mx);
      z += out[j];
    }
    float inv = 1.0f / z;
    for (int64_t j = 0; j < V; ++j) out[j] *= inv;
  }
  Node* self = n.get();
  n->backward_fn = [self, rows, V] {
    auto& ga = self->parents[0]->grad;
    for (int64_t r = 0; r < rows; ++r) {
      const float* y = self->value.data() + r * V;
      const float* g = self->grad.data() + r * V;
      float dot = 0.0f;
      for (int64_t j = 0; j < V; ++j) dot += y[j] * g[j];
      for (int64_t j = 0; j < V; ++j)
        ga[static_cast<size_t>(r * V + j)] += y[j] * (g[j] - dot);
    }
  };
  return Tensor(n);
}

Tensor log_sum_exp(const Tensor& a) {
  int64_t V = a.dim(a.rank() - 1);
  int64_t rows = a.numel() / V;
  Shape out_shape(a.shape().begin(), a.shape().end() - 1);
  if (out_shape.empty()) out_shape = {1};
  auto n = make_op(out_shape, {a.node()});
  const float* av = a.data().data();
  for (int64_t r = 0; r < rows; ++r) {
    const float* in = av + r * V;
    float mx = in[0];
    for (int64_t j = 1; j < V; ++j) mx = std::max(mx, in[j]);
    float z = 0.0f;
    for (int64_t j = 0; j < V; ++j) z += std::exp(in[j] - mx);
    n->value[static_cast<size_t>(r)] = mx + std::log(z);
  }
  Node* self = n.get();
  std::vector<float> sa = a.data();
  n->backward_fn = [self, rows, V, sa = std::move(sa)] {
    auto& ga = self->parents[0]->grad;
    for (int64_t r = 0; r < rows; ++r) {
      float lse = self->value[static_cast<size_t>(r)];
      float g = self->grad[static_cast<size_t>(r)];
      for (int64_t j = 0; j < V; ++j)
        ga[static_cast<size_t>(r * V + j)] +=
            g * std::exp(sa[static_cast<size_t>(r * V + j)] - lse);
    }
  };
  return Tensor(n);
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps) {
  if (x.rank() != 4) throw ShapeMismatch("group_norm expects NCHW, got " + shape_str(x.shape()));
  int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || C % groups != 0)
    throw ShapeMismatch("group_norm params", gamma.shape(), x.shape());
  int64_t cg = C / groups;
  int64_t gsize = cg * H * W;
  auto n = make_op(x.shape(), {x.node(), gamma.node(), beta.node()});
  const float* xv = x.data().data();
  const float* gv = gamma.data().data();
  const float* bv = beta.data().data();
  float* yv = n->value.data();
  std::vector<float> xhat(static_cast<size_t>(x.numel()));
  std::vector<float> inv_std(static_cast<size_t>(N * groups));
  for (int64_t img = 0; img < N; ++img) {
    for (int64_t g = 0; g < groups; ++g) {
      const float* base = xv + (img * C + g * cg) * H * W;
      float mu = 0.0f;
      for (int64_t i = 0; i < gsize; ++i) mu += base[i];
      mu /= static_cast<float>(gsize);
      float var = 0.0f;
      for (int64_t i = 0; i < gsize; ++i) {
        float d = base[i] - mu;
        var += d * d;
      }
      var /= static_cast<float>(gsize);
      float istd = 1.0f / std::sqrt(var + eps);
      inv_std[static_cast<size_t>(img * groups + g)] = istd;
      for (int64_t i = 0; i < gsize; ++i) {
        int64_t c = g * cg + i / (H * W);
        size_t idx = static_cast<size_t>((img * C + g * cg) * H * W + i);
        xhat[idx] = (base[i] - mu) * istd;
        yv[idx] = xhat[idx] * gv[c] + bv[c];
      }
    }
  }
  Node* self = n.get();
  std::vector<float> sgamma = gamma.data();
  n->backward_fn = [self, N, C, H, W, groups, cg, gsize, xhat = std::move(xhat),
                    inv_std = std::move(inv_std), sgamma = std::move(sgamma)] {
    auto& gx = self->parents[0]->grad;
    auto& gg = self->parents[1]->grad;
    auto& gb = self->parents[2]->grad;
    const float* gy = self->grad.data();
    for (int64_t img = 0; img < N; ++img)
      for (int64_t g = 0; g < groups; ++g) {
        float istd = inv_std[static_cast<size_t>(img * groups + g)];
        float sum_dxhat = 0.0f, sum_dxhat_xhat = 0.0f;
        for (int64_t i = 0; i < gsize; ++i) {
          int64_t c = g * cg + i / (H * W);
          size_t idx = static_cast<size_t>((img * C + g * cg) * H * W + i);
          float dxhat = gy[idx] * sgamma[static_cast<size_t>(c)];
          sum_dxhat += dxhat;
          sum_dxhat_xhat += dxhat * xhat[idx];
          gg[static_cast<size_t>(c)] += gy[idx] * xhat[idx];
          gb[static_cast<size_t>(c)] += gy[idx];
        }
        float invm = 1.0f / static_cast<float>(gsize);
        for (int64_t i = 0; i < gsize; ++i) {
          int64_t c = g * cg + i / (H * W);
          size_t idx = static_cast<size_t>((img * C + g * cg) * H * W + i);
          float dxhat = gy[idx] * sgamma[static_cast<size_t>(c)];
          gx[idx] += istd * (dxhat - invm * sum_dxhat - xhat[idx] * invm * sum_dxhat_xhat);
        }
      }
  };
  return Tensor(n);
}

Tensor rms_norm(const Tensor& x, const Tensor& gamma, float eps) {
  int64_t C = x.dim(x.rank() - 1);
  if (gamma.numel() != C) throw ShapeMismatch("rms_norm", x.shape(), gamma.shape());
  int64_t rows = x.numel() / C;
  auto n = make_op(x.shape(), {x.node(), gamma.node()});
  const float* xv = x.data().data();
  const float* gv = gamma.data().data();
  float* yv = n->value.data();
  std::vector<float> inv_rms(static_cast<size_t>(rows));
  for (int64_t r = 0; r < rows; ++r) {
    const float* in = xv + r * C;
    float ms = 0.0f;
    for (int64_t j = 0; j < C; ++j) ms += in[j] * in[j];
    ms /= static_cast<float>(C);
    float ir = 1.0f / std::sqrt(ms + eps);
    inv_rms[static_cast<size_t>(r)] = ir;
    for (int64_t j = 0; j < C; ++j) yv[r * C + j] = in[j] * ir * gv[j];
  }
  Node* self = n.get();
  std::vector<float> sx = x.data(), sg = gamma.data();
  n->backward_fn = [self, rows, C, inv_rms = std::move(inv_rms),
                    sx = std::move(sx), sg = std::move(sg)] {
    auto& gx = self->parents[0]->grad;
    auto& gg = self->parents[1]->grad;
    const float* gy = self->grad.data();
    for (int64_t r = 0; r < rows; ++r) {
      float ir = inv_rms[static_cast<size_t>(r)];
      const float* in = sx.data() + r * C;
      const float* g = gy + r * C;
      float dot = 0.0f;  // sum_j g_j * gamma_j * x_j
      for (int64_t j = 0; j < C; ++j) dot += g[j] * sg[static_cast<size_t>(j)] * in[j];
      float k = dot * ir * ir * ir / static_cast<float>(C);
      for (int64_t j = 0; j < C; ++j) {
        gx[static_cast<size_t>(r * C + j)] += g[j] * sg[static_cast<size_t>(j)] * ir - in[j] * k;
        gg[static_cast<size_t>(j)] += g[j] * in[j] * ir;
      }
    }
  };
  return Tensor(n);
}

// --------------------------------------------------------- sequence helpers

Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids) {
  int64_t V = table.dim(0), D = table.dim(1);
  int64_t L = static_cast<int64_t>(ids.size());
  for (int64_t id : ids)
    if (id < 0 || id >= V)
      throw ShapeMismatch("embedding_lookup: id " + std::to_string(id) +
                          " out of range for table " + shape_str(table.shape()));
  auto n = make_op({L, D}, {table.node()});
  const float* tv = table.data().data();
  for (int64_t i = 0; i < L; ++i)
    std::copy(tv + ids[static_cast<size_t>(i)] * D, tv + (ids[static_cast<size_t>(i)] + 1) * D,
              n->value.begin() + i * D);
  Node* self = n.get();
  std::vector<int64_t> sids = ids;
  n->backward_fn = [self, D, sids = std::move(sids)] {
    auto& gt = self->parents[0]->grad;
    for (size_t i = 0; i < sids.size(); ++i)
      for (int64_t j = 0; j < D; ++j)
        gt[static_cast<size_t>(sids[i] * D + j)] += self->grad[i * static_cast<size_t>(D) + static_cast<size_t>(j)];
  };
  return Tensor(n);
}

Tensor rope(const Tensor& x) {
  if (x.rank() != 3 || x.dim(2) % 2 != 0)
    throw ShapeMismatch("rope expects [T,H,D] with even D, got " + shape_str(x.shape()));
  int64_t T = x.dim(0), H = x.dim(1), D = x.dim(2);
  auto n = make_op(x.shape(), {x.node()});
  const float* xv = x.data().data();
  float* yv = n->value.data();
  std::vector<float> cs(static_cast<size_t>(T * D / 2)), sn(static_cast<size_t>(T * D / 2));
  for (int64_t t = 0; t < T; ++t)
    for (int64_t i = 0; i < D / 2; ++i) {
      double theta = static_cast<double>(t) *
                     std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(D));
      cs[static_cast<size_t>(t * D / 2 + i)] = static_cast<float>(std::cos(theta));
      sn[static_cast<size_t>(t * D / 2 + i)] = static_cast<float>(std::sin(theta));
    }
  for (int64_t t = 0; t < T; ++t)
    for (int64_t h = 0; h < H; ++h)
      for (int64_t i = 0; i < D / 2; ++i) {
        float c = cs[static_cast<size_t>(t * D / 2 + i)];
        float s = sn[static_cast<size_t>(t * D / 2 + i)];
        size_t base = static_cast<size_t>((t * H + h) * D + 2 * i);
        float x0 = xv[base], x1 = xv[base + 1];
        yv[base] = x0 * c - x1 * s;
        yv[base + 1] = x0 * s + x1 * c;
      }
  Node* self = n.get();
  n->backward_fn = [self, T, H, D, cs = std::move(cs), sn = std::move(sn)] {
    auto& gx = self->parents[0]->grad;
    const float* gy = self->grad.data();
    for (int64_t t = 0; t < T; ++t)
      for (int64_t h = 0; h < H; ++h)
        for (int64_t i = 0; i < D / 2; ++i) {
          float c = cs[static_cast<size_t>(t * D / 2 + i)];
          float s = sn[static_cast<size_t>(t * D / 2 + i)];
          size_t base = static_cast<size_t>((t * H + h) * D + 2 * i);
          float g0 = gy[base], g1 = gy[base + 1];
          // inverse rotation
          gx[base] += g0 * c + g1 * s;
          gx[base + 1] += -g0 * s + g1 * c;
        }
  };
  return Tensor(n);
}

Tensor causal_mask(const Tensor& scores) {
  int r = scores.rank();
  if (r < 2 || scores.dim(r - 1) != scores.dim(r - 2))
    throw ShapeMismatch("causal_mask expects [...,T,T], got " + shape_str(scores.shape()));
  int64_t T = scores.dim(r - 1);
  int64_t heads = scores.numel() / (T * T);
  auto n = make_op(scores.shape(), {scores.node()});
  const float* sv = scores.data().data();
  float* yv = n->value.data();
  for (int64_t h = 0; h < heads; ++h)
    for (int64_t i = 0; i < T; ++i)
      for (int64_t j = 0; j < T; ++j)
        yv[(h * T + i) * T + j] = (j > i) ? -1e30f : sv[(h * T + i) * T + j];
  Node* self = n.get();
  n->backward_fn = [self, heads, T] {
    auto& gx = self->parents[0]->grad;
    for (int64_t h = 0; h < heads; ++h)
      for (int64_t i = 0; i < T; ++i)
        for (int64_t j = 0; j <= i; ++j)
          gx[static_cast<size_t>((h * T + i) * T + j)] +=
              self->grad[static_cast<size_t>((h * T + i) * T + j)];
  };
  return Tensor(n);
}

Tensor dropout(const Tensor& x, float p, Rng& rng) {
  if (p <= 0.0f) return x;
  auto n = make_op(x.shape(), {x.node()});
  const float* xv = x.data().data();
  float keep = 1.0f - p;
  float scale = 1.0f / keep;
  std::vector<uint8_t> mask(static_cast<size_t>(x.numel()));
  for (size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.next_double() < keep ? 1 : 0;
    n->value[i] = mask[i] ? xv[i] * scale : 0.0f;
  }
  Node* self = n.get();
  n->backward_fn = [self, scale, mask = std::move(mask)] {
    auto& gx = self->parents[0]->grad;
    for (size_t i = 0; i < self->grad.size(); ++i)
      if (mask[i]) gx[i] += self->grad[i] * scale;
  };
  return Tensor(n);
}

// -------------------------------------------------------------------- losses

Tensor mse(const Tensor& a, const Tensor& b) {
  check_same_shape("mse", a, b);
  auto n = make_op({1}, {a.node(), b.node()});
  const auto& av = a.data();
  const auto& bv = b.data();
  float acc = 0.0f;
  for (size_t i = 0; i < av.size(); ++i) {
    float d = av[i] - bv[i];
    acc += d * d;
  }
  float inv = 1.0f / static_cast<float>(a.numel());
  n->value[0] = acc * inv;
  Node* self = n.get();
  std::vector<float> sa = av, sb = bv;
  n->backward_fn = [self, inv, sa = std::move(sa), sb = std::move(sb)] {
    auto& ga = self->parents[0]->grad;
    auto& gb = self->parents[1]->grad;
    float g = self->grad[0] * 2.0f * inv;
    for (size_t i = 0; i < sa.size(); ++i) {
      float d = (sa[i] - sb[i]) * g;
      ga[i] += d;
      gb[i] -= d;
    }
  };
  return Tensor(n);
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                     const std::vector<uint8_t>& mask) {
  if (logits.rank() != 2 || static_cast<int64_t>(targets.size()) != logits.dim(0) ||
      targets.size() != mask.size())
    throw ShapeMismatch("cross_entropy: logits " + shape_str(logits.shape()) +
                        " vs " + std::to_string(targets.size()) + " targets");
  int64_t L = logits.dim(0), V = logits.dim(1);
  int64_t n_masked = 0;
  for (uint8_t m : mask) n_masked += m ? 1 : 0;
  if (n_masked == 0) throw AllMasked("cross_entropy: no supervised positions");
  auto n = make_op({1}, {logits.node()});
  const float* lv = logits.data().data();
  std::vector<float> lse(static_cast<size_t>(L));
  float acc = 0.0f;
  for (int64_t i = 0; i < L; ++i) {
    if (!mask[static_cast<size_t>(i)]) continue;
    const float* row = lv + i * V;
    float mx = row[0];
    for (int64_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    float z = 0.0f;
    for (int64_t j = 0; j < V; ++j) z += std::exp(row[j] - mx);
    lse[static_cast<size_t>(i)] = mx + std::log(z);
    acc += lse[static_cast<size_t>(i)] - row[targets[static_cast<size_t>(i)]];
  }
  float inv = 1.0f / static_cast<float>(n_masked);
  n->value[0] = acc * inv;
  Node* self = n.get();
  std::vector<float> sl = logits.data();
  std::vector<int64_t> st = targets;
  std::vector<uint8_t> sm = mask;
  n->backward_fn = [self, L, V, inv, sl = std::move(sl), st = std::move(st),
                    sm = std::move(sm), lse = std::move(lse)] {
    auto& gx = self->parents[0]->grad;
    float g = self->grad[0] * inv;
    for (int64_t i = 0; i < L; ++i) {
      if (!sm[static_cast<size_t>(i)]) continue;
      for (int64_t j = 0; j < V; ++j) {
        float p = std::exp(sl[static_cast<size_t>(i * V + j)] - lse[static_cast<size_t>(i)]);
        float ind = (j == st[static_cast<size_t>(i)]) ? 1.0f : 0.0f;
        gx[static_cast<size_t>(i * V + j)] += g * (p - ind);
      }
    }
  };
  return Tensor(n);
}

Tensor stop_gradient(const Tensor& a) {
  auto n = std::make_shared<Node>();
  n->shape = a.shape();
  n->value = a.data();
  n->requires_grad = false;  // blocks all gradient flow
  return Tensor(n);
}

Tensor straight_through(const Tensor& zq, const Tensor& zhat) {
  check_same_shape("straight_through", zq, zhat);
  return add(zhat, stop_gradient(Tensor::from(zq.shape(), [&] {
    std::vector<float> d(zq.data().size());
    for (size_t i = 0; i < d.size(); ++i) d[i] = zq.data()[i] - zhat.data()[i];
    return d;
  }())));
}

}  // namespace chemlm::tg
