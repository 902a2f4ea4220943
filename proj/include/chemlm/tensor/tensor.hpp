#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "chemlm/util/errors.hpp"
#include "chemlm/util/rng.hpp"

namespace chemlm::tg {

using Shape = std::vector<int64_t>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

struct ShapeMismatch : Error {
  ShapeMismatch(const std::string& what, const Shape& a, const Shape& b)
      : Error(what + ": " + shape_str(a) + " vs " + shape_str(b)) {}
  explicit ShapeMismatch(const std::string& what) : Error(what) {}
};

struct Node {
  Shape shape;
  std::vector<float> value;
  std::vector<float> grad;  // allocated lazily
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  // Accumulates into parent grads given this node's grad.
  std::function<void()> backward_fn;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0f);
  }
};

// Value-semantic handle to a graph node. Leaf tensors with requires_grad set
// are trainable parameters; ops build the graph implicitly.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor constant(const Shape& s, float v, bool requires_grad = false);
  static Tensor from(const Shape& s, std::vector<float> v, bool requires_grad = false);
  static Tensor randn(const Shape& s, Rng& rng, float stddev, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(int i) const { return node_->shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }

  std::vector<float>& data() { return node_->value; }
  const std::vector<float>& data() const { return node_->value; }
  std::vector<float>& grad() { node_->ensure_grad(); return node_->grad; }
  bool has_grad() const { return !node_->grad.empty(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  void zero_grad() { node_->grad.assign(node_->value.size(), 0.0f); }

  float item() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Runs reverse-mode accumulation from a scalar loss. Each reachable node is
// visited exactly once, in reverse topological order.
void backward(const Tensor& loss);

// ---- elementwise / arithmetic ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor add_scalar(const Tensor& a, float s);
// b has shape [C] and broadcasts over the leading dims of a (a: [..., C]).
Tensor add_bias(const Tensor& a, const Tensor& b);

Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);

// ---- reductions / shape ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reshape(const Tensor& a, const Shape& s);
Tensor transpose(const Tensor& a, int d0, int d1);
Tensor slice0(const Tensor& a, int64_t start, int64_t len);  // along dim 0

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);             // [M,K]x[K,N]
Tensor bmm(const Tensor& a, const Tensor& b);                // [B,M,K]x[B,K,N]

// ---- convolutions (NCHW) ----
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);

// ---- normalization / softmax ----
Tensor softmax(const Tensor& a);       // over last dim
Tensor log_sum_exp(const Tensor& a);   // over last dim, max-subtracted
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int groups, float eps = 1e-5f);
Tensor rms_norm(const Tensor& x, const Tensor& gamma, float eps = 1e-5f);

// ---- sequence model helpers ----
Tensor embedding_lookup(const Tensor& table, const std::vector<int64_t>& ids);
// x: [T, H, D]; rotates each consecutive pair of the D axis by position-
// dependent angles (base 10000).
Tensor rope(const Tensor& x);
// scores: [H, T, T]; adds -1e30 above the diagonal of the last two dims.
Tensor causal_mask(const Tensor& scores);
Tensor dropout(const Tensor& x, float p, Rng& rng);

// ---- losses ----
Tensor mse(const Tensor& a, const Tensor& b);
struct AllMasked : Error {
  using Error::Error;
};
// logits: [L,V]; mean cross-entropy over positions with mask[i] != 0.
Tensor cross_entropy(const Tensor& logits, const std::vector<int64_t>& targets,
                     const std::vector<uint8_t>& mask);

Tensor stop_gradient(const Tensor& a);
// Forward value of zq, gradient routed to zhat (identity Jacobian).
Tensor straight_through(const Tensor& zq, const Tensor& zhat);

}  // namespace chemlm::tg
