#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "sen/common.hpp"

namespace sen {

// Dense row-major tensor of 64-bit floats with reverse-mode autodiff.
//
// Tensors are cheap handles onto graph nodes; ops record the executed
// primitive so that backward() can replay it in reverse. Leaves created with
// requires_grad accumulate gradients; everything else gets a fresh gradient
// buffer per backward() call. There is no implicit broadcasting: the few
// broadcasting ops that exist (broadcast_add, row_scale) are explicit.

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first needed
  bool requires_grad = false;  // trainable leaf
  bool on_path = false;        // gradient must flow through this node
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backward_fn;

  int64_t numel() const { return int64_t(value.size()); }
  bool is_leaf() const { return parents.empty(); }
  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), 0.0);
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double v, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, double stddev,
                      bool requires_grad = false);
  static Tensor identity(int64_t n, bool requires_grad = false);
  static Tensor from_node(detail::NodePtr n) { return Tensor(std::move(n)); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  int rank() const { return int(shape().size()); }
  int64_t dim(int axis) const;
  int64_t numel() const;

  std::span<const double> values() const;
  // Mutable access to the raw values. Meant for leaves (optimizer updates,
  // finite-difference probes) between graph builds.
  std::span<double> values_mut();
  double at(std::initializer_list<int64_t> idx) const;
  double item() const;

  bool requires_grad() const;
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> grad_mut();
  void zero_grad();

  // Reverse-mode sweep from a scalar root. Visits each recorded node exactly
  // once; leaf gradients accumulate across repeated calls.
  void backward() const;

  // Value-only constant copy, detached from the graph.
  Tensor detach() const;

  detail::Node* node() const { return node_.get(); }
  const detail::NodePtr& node_ptr() const { return node_; }

 private:
  explicit Tensor(detail::NodePtr n) : node_(std::move(n)) {}
  detail::NodePtr node_;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
// Elementwise division by a constant (kept distinct from scale() so means
// computed as sum/M match reduce_mean bit for bit).
Tensor divide(const Tensor& x, double c);
Tensor gelu(const Tensor& x);  // tanh approximation
Tensor exp(const Tensor& x);
Tensor rsqrt(const Tensor& x);  // requires strictly positive inputs
// x * s with s a single-element tensor (e.g. a trainable logit scale).
Tensor scalar_mul(const Tensor& x, const Tensor& s);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }

// ---- explicit broadcasts ----
// x[..., d] + bias[d]
Tensor broadcast_add(const Tensor& x, const Tensor& bias);
// x[r, c] with per-row scalars s of shape [r] or [r, 1]
Tensor row_scale(const Tensor& x, const Tensor& s);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
// x[m,k] * w[k,n] + bias[n], fused into one node
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias);
// C = A * B^T  (A[m,k], B[n,k] -> C[m,n])
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// rank-3 batched product: a[G,m,k] @ b[G,k,n] -> [G,m,n]
Tensor batched_matmul(const Tensor& a, const Tensor& b, bool trans_a = false,
                      bool trans_b = false);

// ---- structure ----
Tensor concat(std::span<const Tensor> parts, int axis);
Tensor concat(std::initializer_list<Tensor> parts, int axis);
Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len);
Tensor reshape(const Tensor& x, Shape new_shape);
// [B*T, H*dh] -> [B*H, T, dh] and back; plain index permutations used by
// multi-head attention.
Tensor split_heads(const Tensor& x, int64_t batch, int64_t tokens,
                   int64_t heads);
Tensor merge_heads(const Tensor& x, int64_t batch, int64_t tokens,
                   int64_t heads);

// ---- reductions ----
Tensor reduce_mean(const Tensor& x, int axis);
Tensor reduce_sum(const Tensor& x, int axis);
Tensor sum_all(const Tensor& x);

// ---- nonlinear blocks ----
Tensor softmax(const Tensor& x, int axis);
// Normalizes over the last axis; gamma/beta of shape [d]; epsilon 1e-5.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta);

// ---- losses ----
// logits[B,C], labels in [0,C); mean cross entropy, numerically stable.
Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> labels);
Tensor mse_loss(const Tensor& pred, const Tensor& target);

// Extension point for modules that define their own differentiable
// primitives: `value` is the forward result, `pullback` accumulates
// d(loss)/dx given d(loss)/d(out).
Tensor custom_unary_op(
    const Tensor& x, Shape out_shape, std::vector<double> value,
    std::function<void(std::span<const double> upstream,
                       std::span<double> x_grad)>
        pullback);

constexpr double kLayerNormEps = 1e-5;

}  // namespace sen
