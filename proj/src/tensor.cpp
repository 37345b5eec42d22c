#include "sen/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace sen {

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

using detail::Node;
using detail::NodePtr;

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ShapeError(std::string(op) + ": undefined tensor");
}

void check_shape_positive(const Shape& s, const char* op) {
  for (int64_t e : s) {
    if (e <= 0)
      throw ShapeError(std::string(op) + ": non-positive extent in shape " +
                       shape_str(s));
  }
}

bool wants_grad(const Node& n) { return n.requires_grad || n.on_path; }

NodePtr new_leaf(Shape shape, std::vector<double> value, bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

// Records the op when any input is on the gradient path; otherwise the
// result is a plain constant and the whole subgraph stays tape-free.
NodePtr new_op(Shape shape, std::vector<double> value,
               std::vector<NodePtr> parents,
               std::function<void(Node&)> backward) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool path = false;
  for (const auto& p : parents) path = path || wants_grad(*p);
  if (path) {
    n->on_path = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return n;
}

// ---- dense kernels (row-major) ----

// C[m,n] (+)= A[m,k] * B[k,n]
void mm_nn(const double* A, const double* B, double* C, int64_t m, int64_t k,
           int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    double* c = C + i * n;
    if (!acc) std::fill(c, c + n, 0.0);
    const double* a = A + i * k;
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = a[kk];
      const double* b = B + kk * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// C[m,n] (+)= A[m,k] * B[n,k]^T
void mm_nt(const double* A, const double* B, double* C, int64_t m, int64_t k,
           int64_t n, bool acc) {
  for (int64_t i = 0; i < m; ++i) {
    const double* a = A + i * k;
    double* c = C + i * n;
    for (int64_t j = 0; j < n; ++j) {
      const double* b = B + j * k;
      double s = 0.0;
      for (int64_t kk = 0; kk < k; ++kk) s += a[kk] * b[kk];
      c[j] = acc ? c[j] + s : s;
    }
  }
}

// C[m,n] (+)= A[k,m]^T * B[k,n]
void mm_tn(const double* A, const double* B, double* C, int64_t m, int64_t k,
           int64_t n, bool acc) {
  if (!acc) std::fill(C, C + m * n, 0.0);
  for (int64_t kk = 0; kk < k; ++kk) {
    const double* a = A + kk * m;
    const double* b = B + kk * n;
    for (int64_t i = 0; i < m; ++i) {
      const double av = a[i];
      double* c = C + i * n;
      for (int64_t j = 0; j < n; ++j) c[j] += av * b[j];
    }
  }
}

// scratch transpose; the backward products then run on the fast nn kernel
void transpose_into(const double* src, double* dst, int64_t rows,
                    int64_t cols) {
  for (int64_t i = 0; i < rows; ++i)
    for (int64_t j = 0; j < cols; ++j) dst[j * rows + i] = src[i * cols + j];
}

void add_into(Node& p, const double* src, int64_t count) {
  p.ensure_grad();
  double* g = p.grad.data();
  for (int64_t i = 0; i < count; ++i) g[i] += src[i];
}

struct AxisSplit {
  int64_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, int axis) {
  AxisSplit r;
  r.extent = s[size_t(axis)];
  for (int i = 0; i < axis; ++i) r.outer *= s[size_t(i)];
  for (size_t i = size_t(axis) + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

void check_axis(const Tensor& x, int axis, const char* op) {
  if (axis < 0 || axis >= x.rank())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(x.shape()));
}

}  // namespace

// ---- Tensor basics ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  check_shape_positive(shape, "zeros");
  const int64_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0),
                         requires_grad));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
  check_shape_positive(shape, "full");
  const int64_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(static_cast<size_t>(n), v),
                         requires_grad));
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return Tensor(new_leaf(Shape{}, std::vector<double>{v}, requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data,
                         bool requires_grad) {
  check_shape_positive(shape, "from_data");
  if (shape_numel(shape) != int64_t(data.size()))
    throw ShapeError("from_data: shape " + shape_str(shape) + " expects " +
                     std::to_string(shape_numel(shape)) + " values, got " +
                     std::to_string(data.size()));
  return Tensor(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::randn(Shape shape, Rng& rng, double stddev, bool requires_grad) {
  check_shape_positive(shape, "randn");
  const int64_t n = shape_numel(shape);
  std::vector<double> data(static_cast<size_t>(n));
  for (auto& v : data) v = rng.gaussian() * stddev;
  return Tensor(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::identity(int64_t n, bool requires_grad) {
  if (n <= 0) throw ShapeError("identity: size must be positive");
  std::vector<double> data(static_cast<size_t>(n * n), 0.0);
  for (int64_t i = 0; i < n; ++i) data[size_t(i * n + i)] = 1.0;
  return Tensor(new_leaf(Shape{n, n}, std::move(data), requires_grad));
}

const Shape& Tensor::shape() const {
  check_defined(*this, "shape");
  return node_->shape;
}

int64_t Tensor::dim(int axis) const {
  const Shape& s = shape();
  if (axis < 0 || size_t(axis) >= s.size())
    throw ShapeError("dim: axis out of range for shape " + shape_str(s));
  return s[size_t(axis)];
}

int64_t Tensor::numel() const {
  check_defined(*this, "numel");
  return node_->numel();
}

std::span<const double> Tensor::values() const {
  check_defined(*this, "values");
  return node_->value;
}

std::span<double> Tensor::values_mut() {
  check_defined(*this, "values_mut");
  return node_->value;
}

double Tensor::at(std::initializer_list<int64_t> idx) const {
  const Shape& s = shape();
  if (idx.size() != s.size())
    throw ShapeError("at: index rank mismatch for shape " + shape_str(s));
  int64_t flat = 0;
  size_t i = 0;
  for (int64_t v : idx) {
    if (v < 0 || v >= s[i]) throw ShapeError("at: index out of bounds");
    flat = flat * s[i] + v;
    ++i;
  }
  return node_->value[size_t(flat)];
}

double Tensor::item() const {
  check_defined(*this, "item");
  if (node_->numel() != 1)
    throw ShapeError("item: tensor has " + std::to_string(node_->numel()) +
                     " elements");
  return node_->value[0];
}

bool Tensor::requires_grad() const {
  check_defined(*this, "requires_grad");
  return node_->requires_grad;
}

bool Tensor::has_grad() const {
  check_defined(*this, "has_grad");
  return !node_->grad.empty();
}

std::span<const double> Tensor::grad() const {
  check_defined(*this, "grad");
  return node_->grad;
}

std::span<double> Tensor::grad_mut() {
  check_defined(*this, "grad_mut");
  return node_->grad;
}

void Tensor::zero_grad() {
  check_defined(*this, "zero_grad");
  if (node_->grad.empty() && node_->requires_grad) node_->ensure_grad();
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  check_defined(*this, "detach");
  return Tensor(new_leaf(node_->shape, node_->value, false));
}

void Tensor::backward() const {
  check_defined(*this, "backward");
  if (node_->numel() != 1)
    throw ShapeError("backward: root must be a scalar, got shape " +
                     shape_str(node_->shape));

  // Post-order topological sort, iterative to keep deep graphs safe.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& top = stack.back();
    Node* n = top.first;
    if (top.second < n->parents.size()) {
      Node* p = n->parents[top.second++].get();
      if (wants_grad(*p) && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior nodes get fresh buffers each sweep; leaves keep accumulating.
  for (Node* n : order) {
    if (n->is_leaf()) {
      if (n->requires_grad) n->ensure_grad();
    } else {
      n->grad.assign(n->value.size(), 0.0);
    }
  }
  node_->ensure_grad();
  node_->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---- elementwise ----

namespace {
void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_defined(a, op);
  check_defined(b, op);
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  const int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = av[i] + bv[i];
  return Tensor::from_node(new_op(
      a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [n](Node& self) {
        const double* g = self.grad.data();
        if (wants_grad(*self.parents[0])) add_into(*self.parents[0], g, n);
        if (wants_grad(*self.parents[1])) add_into(*self.parents[1], g, n);
      }));
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  const int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = av[i] - bv[i];
  return Tensor::from_node(new_op(
      a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [n](Node& self) {
        const double* g = self.grad.data();
        if (wants_grad(*self.parents[0])) add_into(*self.parents[0], g, n);
        if (wants_grad(*self.parents[1])) {
          Node& p = *self.parents[1];
          p.ensure_grad();
          for (int64_t i = 0; i < n; ++i) p.grad[size_t(i)] -= g[i];
        }
      }));
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  const int64_t n = a.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = av[i] * bv[i];
  return Tensor::from_node(new_op(
      a.shape(), std::move(out), {a.node_ptr(), b.node_ptr()}, [n](Node& self) {
        const double* g = self.grad.data();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(pa)) {
          pa.ensure_grad();
          const double* bvv = pb.value.data();
          for (int64_t i = 0; i < n; ++i) pa.grad[size_t(i)] += g[i] * bvv[i];
        }
        if (wants_grad(pb)) {
          pb.ensure_grad();
          const double* avv = pa.value.data();
          for (int64_t i = 0; i < n; ++i) pb.grad[size_t(i)] += g[i] * avv[i];
        }
      }));
}

Tensor scale(const Tensor& x, double c) {
  check_defined(x, "scale");
  const int64_t n = x.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = xv[i] * c;
  return Tensor::from_node(
      new_op(x.shape(), std::move(out), {x.node_ptr()}, [n, c](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        for (int64_t i = 0; i < n; ++i) p.grad[size_t(i)] += g[i] * c;
      }));
}

Tensor divide(const Tensor& x, double c) {
  check_defined(x, "divide");
  if (c == 0.0) throw NumericError("divide: division by zero");
  const int64_t n = x.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = xv[i] / c;
  return Tensor::from_node(
      new_op(x.shape(), std::move(out), {x.node_ptr()}, [n, c](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        for (int64_t i = 0; i < n; ++i) p.grad[size_t(i)] += g[i] / c;
      }));
}

Tensor exp(const Tensor& x) {
  check_defined(x, "exp");
  const int64_t n = x.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = std::exp(xv[i]);
  return Tensor::from_node(
      new_op(x.shape(), std::move(out), {x.node_ptr()}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        const double* y = self.value.data();
        for (int64_t i = 0; i < n; ++i) p.grad[size_t(i)] += g[i] * y[i];
      }));
}

Tensor scalar_mul(const Tensor& x, const Tensor& s) {
  check_defined(x, "scalar_mul");
  check_defined(s, "scalar_mul");
  if (s.numel() != 1)
    throw ShapeError("scalar_mul: scale must have one element, got " +
                     shape_str(s.shape()));
  const int64_t n = x.numel();
  const double sv = s.values()[0];
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) out[size_t(i)] = xv[i] * sv;
  return Tensor::from_node(new_op(
      x.shape(), std::move(out), {x.node_ptr(), s.node_ptr()},
      [n](Node& self) {
        const double* g = self.grad.data();
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        if (wants_grad(px)) {
          px.ensure_grad();
          const double sv = ps.value[0];
          for (int64_t i = 0; i < n; ++i) px.grad[size_t(i)] += g[i] * sv;
        }
        if (wants_grad(ps)) {
          ps.ensure_grad();
          const double* xv = px.value.data();
          double acc = 0.0;
          for (int64_t i = 0; i < n; ++i) acc += g[i] * xv[i];
          ps.grad[0] += acc;
        }
      }));
}

namespace {
constexpr double kGeluC1 = 0.7978845608;  // sqrt(2/pi), tanh approximation
constexpr double kGeluC2 = 0.044715;
}  // namespace

Tensor gelu(const Tensor& x) {
  check_defined(x, "gelu");
  const int64_t n = x.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  // keep the tanh values for the backward pass
  auto tanhs = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double v = xv[i];
    const double t = std::tanh(kGeluC1 * (v + kGeluC2 * v * v * v));
    (*tanhs)[size_t(i)] = t;
    out[size_t(i)] = 0.5 * v * (1.0 + t);
  }
  return Tensor::from_node(new_op(
      x.shape(), std::move(out), {x.node_ptr()},
      [n, tanhs = std::move(tanhs)](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        const double* xvv = p.value.data();
        const double* tv = tanhs->data();
        for (int64_t i = 0; i < n; ++i) {
          const double v = xvv[i];
          const double t = tv[i];
          const double d = 0.5 * (1.0 + t) +
                           0.5 * v * (1.0 - t * t) * kGeluC1 *
                               (1.0 + 3.0 * kGeluC2 * v * v);
          p.grad[size_t(i)] += g[i] * d;
        }
      }));
}

Tensor rsqrt(const Tensor& x) {
  check_defined(x, "rsqrt");
  const int64_t n = x.numel();
  std::vector<double> out(static_cast<size_t>(n));
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) {
    if (!(xv[i] > 0.0))
      throw NumericError("rsqrt: input must be strictly positive, got " +
                         std::to_string(xv[i]));
    out[size_t(i)] = 1.0 / std::sqrt(xv[i]);
  }
  return Tensor::from_node(
      new_op(x.shape(), std::move(out), {x.node_ptr()}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        const double* y = self.value.data();
        for (int64_t i = 0; i < n; ++i)
          p.grad[size_t(i)] += g[i] * (-0.5 * y[i] * y[i] * y[i]);
      }));
}

// ---- explicit broadcasts ----

Tensor broadcast_add(const Tensor& x, const Tensor& bias) {
  check_defined(x, "broadcast_add");
  check_defined(bias, "broadcast_add");
  if (bias.rank() != 1)
    throw ShapeError("broadcast_add: bias must be rank 1, got " +
                     shape_str(bias.shape()));
  if (x.rank() < 1 || x.shape().back() != bias.dim(0))
    throw ShapeError("broadcast_add: last extent of " + shape_str(x.shape()) +
                     " does not match bias " + shape_str(bias.shape()));
  const int64_t d = bias.dim(0);
  const int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* xv = x.values().data();
  const double* bv = bias.values().data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < d; ++j)
      out[size_t(r * d + j)] = xv[r * d + j] + bv[j];
  return Tensor::from_node(new_op(
      x.shape(), std::move(out), {x.node_ptr(), bias.node_ptr()},
      [rows, d](Node& self) {
        const double* g = self.grad.data();
        if (wants_grad(*self.parents[0]))
          add_into(*self.parents[0], g, rows * d);
        Node& pb = *self.parents[1];
        if (wants_grad(pb)) {
          pb.ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < d; ++j) pb.grad[size_t(j)] += g[r * d + j];
        }
      }));
}

Tensor row_scale(const Tensor& x, const Tensor& s) {
  check_defined(x, "row_scale");
  check_defined(s, "row_scale");
  if (x.rank() != 2)
    throw ShapeError("row_scale: x must be rank 2, got " +
                     shape_str(x.shape()));
  const int64_t r = x.dim(0), c = x.dim(1);
  if (s.numel() != r)
    throw ShapeError("row_scale: scale " + shape_str(s.shape()) +
                     " does not match rows of " + shape_str(x.shape()));
  std::vector<double> out(static_cast<size_t>(r * c));
  const double* xv = x.values().data();
  const double* sv = s.values().data();
  for (int64_t i = 0; i < r; ++i)
    for (int64_t j = 0; j < c; ++j)
      out[size_t(i * c + j)] = xv[i * c + j] * sv[i];
  return Tensor::from_node(new_op(
      x.shape(), std::move(out), {x.node_ptr(), s.node_ptr()},
      [r, c](Node& self) {
        const double* g = self.grad.data();
        Node& px = *self.parents[0];
        Node& ps = *self.parents[1];
        if (wants_grad(px)) {
          px.ensure_grad();
          const double* sv = ps.value.data();
          for (int64_t i = 0; i < r; ++i)
            for (int64_t j = 0; j < c; ++j)
              px.grad[size_t(i * c + j)] += g[i * c + j] * sv[i];
        }
        if (wants_grad(ps)) {
          ps.ensure_grad();
          const double* xv = px.value.data();
          for (int64_t i = 0; i < r; ++i) {
            double acc = 0.0;
            for (int64_t j = 0; j < c; ++j) acc += g[i * c + j] * xv[i * c + j];
            ps.grad[size_t(i)] += acc;
          }
        }
      }));
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul: expects rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2)
    throw ShapeError("matmul: inner extents differ: " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  mm_nn(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  return Tensor::from_node(new_op(
      Shape{m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [m, k, n](Node& self) {
        const double* g = self.grad.data();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        std::vector<double> scratch;
        if (wants_grad(pa)) {
          pa.ensure_grad();
          // dA += dC * B^T
          scratch.resize(static_cast<size_t>(k * n));
          transpose_into(pb.value.data(), scratch.data(), k, n);
          mm_nn(g, scratch.data(), pa.grad.data(), m, n, k, true);
        }
        if (wants_grad(pb)) {
          pb.ensure_grad();
          // dB += A^T * dC
          scratch.resize(static_cast<size_t>(m * k));
          transpose_into(pa.value.data(), scratch.data(), m, k);
          mm_nn(scratch.data(), g, pb.grad.data(), k, m, n, true);
        }
      }));
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  check_defined(x, "linear");
  check_defined(w, "linear");
  check_defined(bias, "linear");
  if (x.rank() != 2 || w.rank() != 2)
    throw ShapeError("linear: expects rank-2 input and weight, got " +
                     shape_str(x.shape()) + " and " + shape_str(w.shape()));
  const int64_t m = x.dim(0), k = x.dim(1), n = w.dim(1);
  if (w.dim(0) != k)
    throw ShapeError("linear: inner extents differ: " + shape_str(x.shape()) +
                     " vs " + shape_str(w.shape()));
  if (bias.rank() != 1 || bias.dim(0) != n)
    throw ShapeError("linear: bias " + shape_str(bias.shape()) +
                     " does not match output width " + std::to_string(n));
  std::vector<double> out(static_cast<size_t>(m * n));
  const double* bv = bias.values().data();
  for (int64_t i = 0; i < m; ++i)
    std::copy(bv, bv + n, out.data() + i * n);
  mm_nn(x.values().data(), w.values().data(), out.data(), m, k, n, true);
  return Tensor::from_node(new_op(
      Shape{m, n}, std::move(out),
      {x.node_ptr(), w.node_ptr(), bias.node_ptr()}, [m, k, n](Node& self) {
        const double* g = self.grad.data();
        Node& px = *self.parents[0];
        Node& pw = *self.parents[1];
        Node& pb = *self.parents[2];
        std::vector<double> scratch;
        if (wants_grad(px)) {
          px.ensure_grad();
          scratch.resize(static_cast<size_t>(k * n));
          transpose_into(pw.value.data(), scratch.data(), k, n);
          mm_nn(g, scratch.data(), px.grad.data(), m, n, k, true);
        }
        if (wants_grad(pw)) {
          pw.ensure_grad();
          scratch.resize(static_cast<size_t>(m * k));
          transpose_into(px.value.data(), scratch.data(), m, k);
          mm_nn(scratch.data(), g, pw.grad.data(), k, m, n, true);
        }
        if (wants_grad(pb)) {
          pb.ensure_grad();
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) pb.grad[size_t(j)] += g[i * n + j];
        }
      }));
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul_nt");
  check_defined(b, "matmul_nt");
  if (a.rank() != 2 || b.rank() != 2)
    throw ShapeError("matmul_nt: expects rank-2 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  if (b.dim(1) != k)
    throw ShapeError("matmul_nt: inner extents differ: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(m * n));
  mm_nt(a.values().data(), b.values().data(), out.data(), m, k, n, false);
  return Tensor::from_node(new_op(
      Shape{m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [m, k, n](Node& self) {
        const double* g = self.grad.data();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (wants_grad(pa)) {
          pa.ensure_grad();
          mm_nn(g, pb.value.data(), pa.grad.data(), m, n, k, true);
        }
        if (wants_grad(pb)) {
          pb.ensure_grad();
          mm_tn(g, pa.value.data(), pb.grad.data(), n, m, k, true);
        }
      }));
}

Tensor batched_matmul(const Tensor& a, const Tensor& b, bool trans_a,
                      bool trans_b) {
  check_defined(a, "batched_matmul");
  check_defined(b, "batched_matmul");
  if (trans_a && trans_b)
    throw ShapeError("batched_matmul: double transpose unsupported");
  if (a.rank() != 3 || b.rank() != 3)
    throw ShapeError("batched_matmul: expects rank-3 operands, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const int64_t ga = a.dim(0), gb = b.dim(0);
  if (ga != gb)
    throw ShapeError("batched_matmul: batch extents differ: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int64_t m = trans_a ? a.dim(2) : a.dim(1);
  const int64_t k = trans_a ? a.dim(1) : a.dim(2);
  const int64_t kb = trans_b ? b.dim(2) : b.dim(1);
  const int64_t n = trans_b ? b.dim(1) : b.dim(2);
  if (k != kb)
    throw ShapeError("batched_matmul: inner extents differ: " +
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<double> out(static_cast<size_t>(ga * m * n));
  const double* av = a.values().data();
  const double* bv = b.values().data();
  for (int64_t g = 0; g < ga; ++g) {
    const double* ap = av + g * (trans_a ? k * m : m * k);
    const double* bp = bv + g * (trans_b ? n * k : k * n);
    double* cp = out.data() + g * m * n;
    if (!trans_a && !trans_b)
      mm_nn(ap, bp, cp, m, k, n, false);
    else if (!trans_a && trans_b)
      mm_nt(ap, bp, cp, m, k, n, false);
    else
      mm_tn(ap, bp, cp, m, k, n, false);
  }
  return Tensor::from_node(new_op(
      Shape{ga, m, n}, std::move(out), {a.node_ptr(), b.node_ptr()},
      [ga, m, k, n, trans_a, trans_b](Node& self) {
        const double* g = self.grad.data();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        const double* av = pa.value.data();
        const double* bv = pb.value.data();
        const bool wa = wants_grad(pa), wb = wants_grad(pb);
        if (wa) pa.ensure_grad();
        if (wb) pb.ensure_grad();
        for (int64_t gi = 0; gi < ga; ++gi) {
          const double* gp = g + gi * m * n;
          const int64_t a_off = gi * m * k;
          const int64_t b_off = gi * k * n;
          if (!trans_a && !trans_b) {
            if (wa) mm_nt(gp, bv + b_off, pa.grad.data() + a_off, m, n, k, true);
            if (wb) mm_tn(av + a_off, gp, pb.grad.data() + b_off, k, m, n, true);
          } else if (!trans_a && trans_b) {
            // C = A * B^T with B stored [n, k]
            if (wa) mm_nn(gp, bv + b_off, pa.grad.data() + a_off, m, n, k, true);
            if (wb) mm_tn(gp, av + a_off, pb.grad.data() + b_off, n, m, k, true);
          } else {
            // C = A^T * B with A stored [k, m]
            if (wa) mm_nt(bv + b_off, gp, pa.grad.data() + a_off, k, n, m, true);
            if (wb) mm_nn(av + a_off, gp, pb.grad.data() + b_off, k, m, n, true);
          }
        }
      }));
}

// ---- structure ----

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: empty part list");
  for (const Tensor& p : parts) check_defined(p, "concat");
  const Shape& base = parts[0].shape();
  if (axis < 0 || size_t(axis) >= base.size())
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(base));
  int64_t axis_total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != base.size())
      throw ShapeError("concat: rank mismatch " + shape_str(base) + " vs " +
                       shape_str(s));
    for (size_t i = 0; i < s.size(); ++i) {
      if (int(i) != axis && s[i] != base[i])
        throw ShapeError("concat: extent mismatch off axis " +
                         std::to_string(axis) + ": " + shape_str(base) +
                         " vs " + shape_str(s));
    }
    axis_total += s[size_t(axis)];
  }
  Shape out_shape = base;
  out_shape[size_t(axis)] = axis_total;
  const AxisSplit sp = split_axis(out_shape, axis);
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  std::vector<int64_t> extents;
  std::vector<NodePtr> parents;
  extents.reserve(parts.size());
  parents.reserve(parts.size());
  int64_t offset = 0;
  for (const Tensor& p : parts) {
    const int64_t ext = p.dim(axis);
    const double* pv = p.values().data();
    for (int64_t o = 0; o < sp.outer; ++o) {
      std::copy(pv + o * ext * sp.inner, pv + (o + 1) * ext * sp.inner,
                out.data() + (o * axis_total + offset) * sp.inner);
    }
    extents.push_back(ext);
    parents.push_back(p.node_ptr());
    offset += ext;
  }
  return Tensor::from_node(new_op(
      std::move(out_shape), std::move(out), std::move(parents),
      [sp, axis_total, extents](Node& self) {
        const double* g = self.grad.data();
        int64_t offset = 0;
        for (size_t pi = 0; pi < self.parents.size(); ++pi) {
          Node& p = *self.parents[pi];
          const int64_t ext = extents[pi];
          if (wants_grad(p)) {
            p.ensure_grad();
            for (int64_t o = 0; o < sp.outer; ++o) {
              const double* src = g + (o * axis_total + offset) * sp.inner;
              double* dst = p.grad.data() + o * ext * sp.inner;
              for (int64_t i = 0; i < ext * sp.inner; ++i) dst[i] += src[i];
            }
          }
          offset += ext;
        }
      }));
}

Tensor concat(std::initializer_list<Tensor> parts, int axis) {
  std::vector<Tensor> v(parts);
  return concat(std::span<const Tensor>(v), axis);
}

Tensor slice(const Tensor& x, int axis, int64_t start, int64_t len) {
  check_defined(x, "slice");
  check_axis(x, axis, "slice");
  const int64_t ext = x.dim(axis);
  if (start < 0 || len <= 0 || start + len > ext)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") out of bounds for axis " +
                     std::to_string(axis) + " of " + shape_str(x.shape()));
  Shape out_shape = x.shape();
  out_shape[size_t(axis)] = len;
  const AxisSplit sp = split_axis(x.shape(), axis);
  std::vector<double> out(static_cast<size_t>(shape_numel(out_shape)));
  const double* xv = x.values().data();
  for (int64_t o = 0; o < sp.outer; ++o) {
    std::copy(xv + (o * ext + start) * sp.inner,
              xv + (o * ext + start + len) * sp.inner,
              out.data() + o * len * sp.inner);
  }
  return Tensor::from_node(new_op(
      std::move(out_shape), std::move(out), {x.node_ptr()},
      [sp, ext, start, len](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        for (int64_t o = 0; o < sp.outer; ++o) {
          double* dst = p.grad.data() + (o * ext + start) * sp.inner;
          const double* src = g + o * len * sp.inner;
          for (int64_t i = 0; i < len * sp.inner; ++i) dst[i] += src[i];
        }
      }));
}

Tensor reshape(const Tensor& x, Shape new_shape) {
  check_defined(x, "reshape");
  check_shape_positive(new_shape, "reshape");
  if (shape_numel(new_shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(new_shape));
  std::vector<double> out(x.values().begin(), x.values().end());
  const int64_t n = x.numel();
  return Tensor::from_node(
      new_op(std::move(new_shape), std::move(out), {x.node_ptr()},
             [n](Node& self) {
               Node& p = *self.parents[0];
               if (!wants_grad(p)) return;
               add_into(p, self.grad.data(), n);
             }));
}

Tensor split_heads(const Tensor& x, int64_t batch, int64_t tokens,
                   int64_t heads) {
  check_defined(x, "split_heads");
  if (x.rank() != 2 || x.dim(0) != batch * tokens || x.dim(1) % heads != 0)
    throw ShapeError("split_heads: got " + shape_str(x.shape()) +
                     " for batch " + std::to_string(batch) + ", tokens " +
                     std::to_string(tokens) + ", heads " +
                     std::to_string(heads));
  const int64_t d = x.dim(1);
  const int64_t dh = d / heads;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* xv = x.values().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < tokens; ++t)
      for (int64_t h = 0; h < heads; ++h)
        std::copy(xv + (b * tokens + t) * d + h * dh,
                  xv + (b * tokens + t) * d + (h + 1) * dh,
                  out.data() + ((b * heads + h) * tokens + t) * dh);
  return Tensor::from_node(new_op(
      Shape{batch * heads, tokens, dh}, std::move(out), {x.node_ptr()},
      [batch, tokens, heads, d, dh](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t t = 0; t < tokens; ++t)
            for (int64_t h = 0; h < heads; ++h) {
              const double* src = g + ((b * heads + h) * tokens + t) * dh;
              double* dst = p.grad.data() + (b * tokens + t) * d + h * dh;
              for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
            }
      }));
}

Tensor merge_heads(const Tensor& x, int64_t batch, int64_t tokens,
                   int64_t heads) {
  check_defined(x, "merge_heads");
  if (x.rank() != 3 || x.dim(0) != batch * heads || x.dim(1) != tokens)
    throw ShapeError("merge_heads: got " + shape_str(x.shape()) +
                     " for batch " + std::to_string(batch) + ", tokens " +
                     std::to_string(tokens) + ", heads " +
                     std::to_string(heads));
  const int64_t dh = x.dim(2);
  const int64_t d = heads * dh;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* xv = x.values().data();
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < tokens; ++t)
      for (int64_t h = 0; h < heads; ++h)
        std::copy(xv + ((b * heads + h) * tokens + t) * dh,
                  xv + ((b * heads + h) * tokens + t + 1) * dh,
                  out.data() + (b * tokens + t) * d + h * dh);
  return Tensor::from_node(new_op(
      Shape{batch * tokens, d}, std::move(out), {x.node_ptr()},
      [batch, tokens, heads, d, dh](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        for (int64_t b = 0; b < batch; ++b)
          for (int64_t t = 0; t < tokens; ++t)
            for (int64_t h = 0; h < heads; ++h) {
              const double* src = g + (b * tokens + t) * d + h * dh;
              double* dst =
                  p.grad.data() + ((b * heads + h) * tokens + t) * dh;
              for (int64_t c = 0; c < dh; ++c) dst[c] += src[c];
            }
      }));
}

// ---- reductions ----

namespace {
Tensor reduce_impl(const Tensor& x, int axis, bool mean) {
  const char* op = mean ? "reduce_mean" : "reduce_sum";
  check_defined(x, op);
  check_axis(x, axis, op);
  const AxisSplit sp = split_axis(x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + axis);
  std::vector<double> out(static_cast<size_t>(sp.outer * sp.inner), 0.0);
  const double* xv = x.values().data();
  for (int64_t o = 0; o < sp.outer; ++o)
    for (int64_t t = 0; t < sp.extent; ++t)
      for (int64_t i = 0; i < sp.inner; ++i)
        out[size_t(o * sp.inner + i)] += xv[(o * sp.extent + t) * sp.inner + i];
  if (mean)
    for (double& v : out) v /= double(sp.extent);
  return Tensor::from_node(new_op(
      std::move(out_shape), std::move(out), {x.node_ptr()},
      [sp, mean](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        const double w = mean ? 1.0 / double(sp.extent) : 1.0;
        for (int64_t o = 0; o < sp.outer; ++o)
          for (int64_t t = 0; t < sp.extent; ++t)
            for (int64_t i = 0; i < sp.inner; ++i)
              p.grad[size_t((o * sp.extent + t) * sp.inner + i)] +=
                  g[o * sp.inner + i] * w;
      }));
}
}  // namespace

Tensor reduce_mean(const Tensor& x, int axis) { return reduce_impl(x, axis, true); }
Tensor reduce_sum(const Tensor& x, int axis) { return reduce_impl(x, axis, false); }

Tensor sum_all(const Tensor& x) {
  check_defined(x, "sum_all");
  const int64_t n = x.numel();
  double acc = 0.0;
  const double* xv = x.values().data();
  for (int64_t i = 0; i < n; ++i) acc += xv[i];
  return Tensor::from_node(
      new_op(Shape{}, {acc}, {x.node_ptr()}, [n](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double g = self.grad[0];
        for (int64_t i = 0; i < n; ++i) p.grad[size_t(i)] += g;
      }));
}

// ---- nonlinear ----

Tensor softmax(const Tensor& x, int axis) {
  check_defined(x, "softmax");
  check_axis(x, axis, "softmax");
  const double* xv = x.values().data();
  for (int64_t i = 0; i < x.numel(); ++i)
    if (std::isnan(xv[i]))
      throw NumericError("softmax: NaN input at flat index " +
                         std::to_string(i));
  const AxisSplit sp = split_axis(x.shape(), axis);
  std::vector<double> out(static_cast<size_t>(x.numel()));
  for (int64_t o = 0; o < sp.outer; ++o) {
    for (int64_t i = 0; i < sp.inner; ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int64_t t = 0; t < sp.extent; ++t)
        mx = std::max(mx, xv[(o * sp.extent + t) * sp.inner + i]);
      double denom = 0.0;
      for (int64_t t = 0; t < sp.extent; ++t) {
        const double e = std::exp(xv[(o * sp.extent + t) * sp.inner + i] - mx);
        out[size_t((o * sp.extent + t) * sp.inner + i)] = e;
        denom += e;
      }
      for (int64_t t = 0; t < sp.extent; ++t)
        out[size_t((o * sp.extent + t) * sp.inner + i)] /= denom;
    }
  }
  return Tensor::from_node(new_op(
      x.shape(), std::move(out), {x.node_ptr()}, [sp](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double* g = self.grad.data();
        const double* y = self.value.data();
        for (int64_t o = 0; o < sp.outer; ++o)
          for (int64_t i = 0; i < sp.inner; ++i) {
            double dot = 0.0;
            for (int64_t t = 0; t < sp.extent; ++t) {
              const int64_t idx = (o * sp.extent + t) * sp.inner + i;
              dot += g[idx] * y[idx];
            }
            for (int64_t t = 0; t < sp.extent; ++t) {
              const int64_t idx = (o * sp.extent + t) * sp.inner + i;
              p.grad[size_t(idx)] += y[idx] * (g[idx] - dot);
            }
          }
      }));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  check_defined(x, "layer_norm");
  check_defined(gamma, "layer_norm");
  check_defined(beta, "layer_norm");
  if (x.rank() < 1)
    throw ShapeError("layer_norm: input must have rank >= 1");
  const int64_t d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) +
                     "/" + shape_str(beta.shape()) +
                     " do not match last extent of " + shape_str(x.shape()));
  const int64_t rows = x.numel() / d;
  std::vector<double> out(static_cast<size_t>(x.numel()));
  const double* xv = x.values().data();
  const double* gv = gamma.values().data();
  const double* bv = beta.values().data();
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = xv + r * d;
    double mu = 0.0;
    for (int64_t j = 0; j < d; ++j) mu += xr[j];
    mu /= double(d);
    double var = 0.0;
    for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= double(d);
    const double ivar = 1.0 / std::sqrt(var + kLayerNormEps);
    for (int64_t j = 0; j < d; ++j)
      out[size_t(r * d + j)] = gv[j] * (xr[j] - mu) * ivar + bv[j];
  }
  return Tensor::from_node(new_op(
      x.shape(), std::move(out),
      {x.node_ptr(), gamma.node_ptr(), beta.node_ptr()},
      [rows, d](Node& self) {
        const double* g = self.grad.data();
        Node& px = *self.parents[0];
        Node& pg = *self.parents[1];
        Node& pb = *self.parents[2];
        const double* xv = px.value.data();
        const double* gv = pg.value.data();
        const bool wx = wants_grad(px), wg = wants_grad(pg),
                   wb = wants_grad(pb);
        if (wx) px.ensure_grad();
        if (wg) pg.ensure_grad();
        if (wb) pb.ensure_grad();
        std::vector<double> xhat(static_cast<size_t>(d));
        for (int64_t r = 0; r < rows; ++r) {
          const double* xr = xv + r * d;
          const double* gr = g + r * d;
          double mu = 0.0;
          for (int64_t j = 0; j < d; ++j) mu += xr[j];
          mu /= double(d);
          double var = 0.0;
          for (int64_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
          var /= double(d);
          const double ivar = 1.0 / std::sqrt(var + kLayerNormEps);
          for (int64_t j = 0; j < d; ++j) xhat[size_t(j)] = (xr[j] - mu) * ivar;
          if (wg)
            for (int64_t j = 0; j < d; ++j)
              pg.grad[size_t(j)] += gr[j] * xhat[size_t(j)];
          if (wb)
            for (int64_t j = 0; j < d; ++j) pb.grad[size_t(j)] += gr[j];
          if (wx) {
            double s1 = 0.0, s2 = 0.0;
            for (int64_t j = 0; j < d; ++j) {
              const double dxh = gr[j] * gv[j];
              s1 += dxh;
              s2 += dxh * xhat[size_t(j)];
            }
            for (int64_t j = 0; j < d; ++j) {
              const double dxh = gr[j] * gv[j];
              px.grad[size_t(r * d + j)] +=
                  ivar * (dxh - s1 / double(d) -
                          xhat[size_t(j)] * s2 / double(d));
            }
          }
        }
      }));
}

// ---- losses ----

Tensor softmax_cross_entropy(const Tensor& logits,
                             std::span<const int> labels) {
  check_defined(logits, "softmax_cross_entropy");
  if (logits.rank() != 2)
    throw ShapeError("softmax_cross_entropy: logits must be rank 2, got " +
                     shape_str(logits.shape()));
  const int64_t b = logits.dim(0), c = logits.dim(1);
  if (int64_t(labels.size()) != b)
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(b) + " rows");
  const double* lv = logits.values().data();
  std::vector<int> lab(labels.begin(), labels.end());
  for (int y : lab)
    if (y < 0 || y >= c)
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(y) +
                       " out of range [0, " + std::to_string(c) + ")");
  double total = 0.0;
  for (int64_t i = 0; i < b; ++i) {
    const double* row = lv + i * c;
    double mx = row[0];
    for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    if (std::isnan(mx))
      throw NumericError("softmax_cross_entropy: NaN logit in row " +
                         std::to_string(i));
    double denom = 0.0;
    for (int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    total += mx + std::log(denom) - row[lab[size_t(i)]];
  }
  return Tensor::from_node(new_op(
      Shape{}, {total / double(b)}, {logits.node_ptr()},
      [b, c, lab](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        const double g0 = self.grad[0] / double(b);
        const double* lv = p.value.data();
        for (int64_t i = 0; i < b; ++i) {
          const double* row = lv + i * c;
          double mx = row[0];
          for (int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
          double denom = 0.0;
          for (int64_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
          for (int64_t j = 0; j < c; ++j) {
            const double sm = std::exp(row[j] - mx) / denom;
            p.grad[size_t(i * c + j)] +=
                g0 * (sm - (j == lab[size_t(i)] ? 1.0 : 0.0));
          }
        }
      }));
}

Tensor custom_unary_op(
    const Tensor& x, Shape out_shape, std::vector<double> value,
    std::function<void(std::span<const double>, std::span<double>)> pullback) {
  check_defined(x, "custom_unary_op");
  check_shape_positive(out_shape, "custom_unary_op");
  if (shape_numel(out_shape) != int64_t(value.size()))
    throw ShapeError("custom_unary_op: value size " +
                     std::to_string(value.size()) + " does not match shape " +
                     shape_str(out_shape));
  return Tensor::from_node(new_op(
      std::move(out_shape), std::move(value), {x.node_ptr()},
      [pullback = std::move(pullback)](Node& self) {
        Node& p = *self.parents[0];
        if (!wants_grad(p)) return;
        p.ensure_grad();
        pullback(std::span<const double>(self.grad),
                 std::span<double>(p.grad));
      }));
}

Tensor mse_loss(const Tensor& pred, const Tensor& target) {
  check_same_shape(pred, target, "mse_loss");
  const int64_t n = pred.numel();
  const double* pv = pred.values().data();
  const double* tv = target.values().data();
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double e = pv[i] - tv[i];
    total += e * e;
  }
  return Tensor::from_node(new_op(
      Shape{}, {total / double(n)}, {pred.node_ptr(), target.node_ptr()},
      [n](Node& self) {
        const double g0 = self.grad[0] * 2.0 / double(n);
        Node& pp = *self.parents[0];
        Node& pt = *self.parents[1];
        const double* pv = pp.value.data();
        const double* tv = pt.value.data();
        if (wants_grad(pp)) {
          pp.ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            pp.grad[size_t(i)] += g0 * (pv[i] - tv[i]);
        }
        if (wants_grad(pt)) {
          pt.ensure_grad();
          for (int64_t i = 0; i < n; ++i)
            pt.grad[size_t(i)] -= g0 * (pv[i] - tv[i]);
        }
      }));
}

}  // namespace sen
