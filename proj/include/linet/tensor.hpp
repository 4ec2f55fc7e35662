/*
 * Copyright (c) 2026 The linet Authors
 *
 * Licensed under the Apache License, Version 2.0;
 * You may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an 'AS IS' BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense rank-1..3 tensors with reverse-mode differentiation.
//
// Every op returns a new tensor; when gradient recording is enabled and any
// input requires a gradient, the result remembers its inputs and a backward
// rule. `backward()` replays those rules in reverse creation order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <utility>
#include <vector>

#include "linet/error.hpp"

namespace linet {

using Shape = std::vector<std::size_t>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ']';
  return os.str();
}

inline std::size_t shape_numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

/// Live-tensor byte accounting, per thread. Counts data and gradient buffers
/// of every tensor node currently alive.
class MemoryStats {
 public:
  static std::size_t live_bytes() { return state().live; }
  static std::size_t peak_bytes() { return state().peak; }
  static void reset_peak() { state().peak = state().live; }

  static void add(std::size_t bytes) {
    auto& s = state();
    s.live += bytes;
    s.peak = std::max(s.peak, s.live);
  }
  static void remove(std::size_t bytes) { state().live -= bytes; }

 private:
  struct State {
    std::size_t live = 0;
    std::size_t peak = 0;
  };
  static State& state() {
    thread_local State s;
    return s;
  }
};

/// Thread-local switch for gradient recording.
class GradMode {
 public:
  static bool enabled() { return flag(); }
  static void set_enabled(bool on) { flag() = on; }

 private:
  static bool& flag() {
    thread_local bool on = true;
    return on;
  }
};

class NoGradGuard {
 public:
  NoGradGuard() : prev_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

namespace detail {

inline std::uint64_t next_sequence() {
  thread_local std::uint64_t counter = 0;
  return ++counter;
}

template <class S>
struct Node {
  Shape shape;
  std::vector<S> data;
  std::vector<S> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::uint64_t seq = next_sequence();
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Propagates this node's grad into its parents' grads.
  std::function<void(Node&)> backward;

  Node(Shape s, std::vector<S> d) : shape(std::move(s)), data(std::move(d)) {
    MemoryStats::add(data.size() * sizeof(S));
  }
  ~Node() { MemoryStats::remove((data.size() + grad.size()) * sizeof(S)); }
  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  std::vector<S>& ensure_grad() {
    if (grad.empty() && !data.empty()) {
      grad.assign(data.size(), S(0));
      MemoryStats::add(grad.size() * sizeof(S));
    }
    return grad;
  }
};

inline void check_shape(const Shape& s) {
  if (s.empty() || s.size() > 3)
    throw ShapeError("tensor rank must be 1..3, got shape " + shape_str(s));
  for (auto e : s)
    if (e == 0) throw ShapeError("tensor extents must be positive, got " + shape_str(s));
}

}  // namespace detail

/// Handle to a tensor node. Copies share the node; ops never mutate inputs.
template <class S>
class Tensor {
  static_assert(std::is_floating_point_v<S>);

 public:
  using Scalar = S;
  using NodeT = detail::Node<S>;

  Tensor() = default;

  Tensor(Shape shape, std::vector<S> data, bool requires_grad = false) {
    detail::check_shape(shape);
    if (shape_numel(shape) != data.size())
      throw ShapeError("data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    node_ = std::make_shared<NodeT>(std::move(shape), std::move(data));
    node_->requires_grad = requires_grad;
  }

  static Tensor full(const Shape& shape, S value, bool requires_grad = false) {
    detail::check_shape(shape);
    return Tensor(shape, std::vector<S>(shape_numel(shape), value), requires_grad);
  }
  static Tensor zeros(const Shape& shape, bool requires_grad = false) {
    return full(shape, S(0), requires_grad);
  }
  static Tensor ones(const Shape& shape, bool requires_grad = false) {
    return full(shape, S(1), requires_grad);
  }
  static Tensor vector(std::initializer_list<S> values, bool requires_grad = false) {
    return Tensor({values.size()}, std::vector<S>(values), requires_grad);
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<S>> rows,
                       bool requires_grad = false) {
    std::vector<S> d;
    std::size_t cols = rows.begin()->size();
    for (const auto& r : rows) {
      if (r.size() != cols) throw ShapeError("ragged matrix literal");
      d.insert(d.end(), r.begin(), r.end());
    }
    return Tensor({rows.size(), cols}, std::move(d), requires_grad);
  }
  static Tensor scalar(S v, bool requires_grad = false) { return Tensor({1}, {v}, requires_grad); }

  bool defined() const noexcept { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<const S> data() const { return node_->data; }
  /// Writable storage. Only meaningful for leaves (parameters, inputs).
  std::span<S> mutable_data() { return node_->data; }
  const std::vector<S>& values() const { return node_->data; }

  S item() const {
    if (numel() != 1) throw ShapeError("item() needs a one-element tensor, got " + shape_str(shape()));
    return node_->data[0];
  }
  S operator[](std::size_t i) const { return node_->data[i]; }
  S at(std::size_t i, std::size_t j) const { return node_->data[i * node_->shape.back() + j]; }
  S at(std::size_t b, std::size_t i, std::size_t j) const {
    const auto& s = node_->shape;
    return node_->data[(b * s[1] + i) * s[2] + j];
  }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward; }

  bool has_grad() const { return !node_->grad.empty(); }
  /// Accumulated gradient; zeros when nothing has been accumulated yet.
  std::vector<S> grad() const {
    if (node_->grad.empty()) return std::vector<S>(numel(), S(0));
    return node_->grad;
  }
  std::span<const S> grad_view() const { return node_->grad; }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), S(0));
  }

  /// New leaf holding a copy of the values.
  Tensor detach() const { return Tensor(shape(), node_->data, false); }
  Tensor clone(bool requires_grad) const { return Tensor(shape(), node_->data, requires_grad); }

  /// Reverse-mode pass from a one-element tensor. Leaf gradients accumulate
  /// across calls; interior gradients are recomputed each call.
  void backward() const;

  const std::shared_ptr<NodeT>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<NodeT> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<NodeT> node_;
};

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

namespace autograd {

/// Builds an op result. The backward rule is recorded only when gradient
/// recording is on and at least one input requires a gradient.
template <class S>
Tensor<S> make_result(Shape shape, std::vector<S> data, std::vector<Tensor<S>> inputs,
                      const char* op, std::function<void(detail::Node<S>&)> backward) {
  Tensor<S> out(std::move(shape), std::move(data), false);
  if (!GradMode::enabled()) return out;
  bool any = false;
  for (const auto& in : inputs) any = any || in.requires_grad();
  if (!any) return out;
  auto& n = *out.node();
  n.requires_grad = true;
  n.op = op;
  for (auto& in : inputs) n.parents.push_back(in.node());
  n.backward = std::move(backward);
  return out;
}

/// Parent's grad buffer if the parent wants a gradient, else nullptr.
template <class S>
S* grad_of(detail::Node<S>& self, std::size_t i) {
  auto& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  return p.ensure_grad().data();
}

}  // namespace autograd

template <class S>
void Tensor<S>::backward() const {
  if (numel() != 1)
    throw ShapeError("backward() needs a scalar loss, got shape " + shape_str(shape()));
  if (!requires_grad()) return;

  // Ordered record of every reachable node; reverse creation order is a valid
  // reverse topological order because inputs are always created first.
  std::vector<NodeT*> tape;
  std::unordered_set<NodeT*> seen;
  std::vector<NodeT*> stack{node_.get()};
  while (!stack.empty()) {
    NodeT* n = stack.back();
    stack.pop_back();
    if (!seen.insert(n).second) continue;
    tape.push_back(n);
    for (auto& p : n->parents)
      if (p->requires_grad) stack.push_back(p.get());
  }
  std::sort(tape.begin(), tape.end(), [](NodeT* a, NodeT* b) { return a->seq > b->seq; });
  // Leaves collect this pass into a zeroed buffer that is added to their
  // running total once at the end, so repeated passes accumulate exactly.
  std::vector<std::pair<NodeT*, std::vector<S>>> leaves;
  for (NodeT* n : tape) {
    auto& g = n->ensure_grad();
    if (!n->backward) leaves.emplace_back(n, std::exchange(g, std::vector<S>(g.size(), S(0))));
    else std::fill(g.begin(), g.end(), S(0));
  }
  node_->ensure_grad()[0] += S(1);
  for (NodeT* n : tape)
    if (n->backward) n->backward(*n);
  for (auto& [n, prev] : leaves)
    for (std::size_t i = 0; i < prev.size(); ++i) n->grad[i] += prev[i];
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace kernel {

// C[m,n] += A[m,k] * B[k,n]
template <class S>
void gemm_nn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    S* crow = c + i * n;
    for (std::size_t l = 0; l < k; ++l) {
      const S av = a[i * k + l];
      if (av == S(0)) continue;
      const S* brow = b + l * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
template <class S>
void gemm_nt(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const S* arow = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const S* brow = b + j * k;
      S acc = 0;
      for (std::size_t l = 0; l < k; ++l) acc += arow[l] * brow[l];
      c[i * n + j] += acc;
    }
  }
}

// C[m,n] += A[k,m]^T * B[k,n]
template <class S>
void gemm_tn(const S* a, const S* b, S* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t l = 0; l < k; ++l) {
    const S* brow = b + l * n;
    for (std::size_t i = 0; i < m; ++i) {
      const S av = a[l * m + i];
      if (av == S(0)) continue;
      S* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

/// Iteration geometry of the slices running along one axis.
struct AxisGeometry {
  std::size_t outer = 1, len = 1, inner = 1;

  AxisGeometry(const Shape& s, std::size_t axis) {
    if (axis >= s.size())
      throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + shape_str(s));
    for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
    len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  }
  std::size_t slices() const { return outer * inner; }
  /// Offset of the first element of slice `q`; elements are `inner` apart.
  std::size_t base(std::size_t q) const { return (q / inner) * len * inner + q % inner; }
};

/// Softmax of one strided slice restricted to entries whose mask byte is set
/// (all entries when `mask` is null). Unselected outputs are exactly zero.
template <class S>
void softmax_slice(const S* z, const std::uint8_t* mask, S* out, std::size_t len,
                   std::size_t stride) {
  S mx = -std::numeric_limits<S>::infinity();
  for (std::size_t i = 0; i < len; ++i)
    if (!mask || mask[i * stride]) mx = std::max(mx, z[i * stride]);
  if (!(mx > -std::numeric_limits<S>::infinity()))
    throw NumericalError("softmax over a slice with empty support");
  S sum = 0;
  for (std::size_t i = 0; i < len; ++i) {
    if (!mask || mask[i * stride]) {
      const S e = std::exp(z[i * stride] - mx);
      out[i * stride] = e;
      sum += e;
    } else {
      out[i * stride] = S(0);
    }
  }
  for (std::size_t i = 0; i < len; ++i) out[i * stride] /= sum;
}

/// grad_z = p * (g - <p, g>) along one slice; zero wherever p is zero.
template <class S>
void softmax_slice_backward(const S* p, const S* g, S* gz, std::size_t len, std::size_t stride) {
  S dot = 0;
  for (std::size_t i = 0; i < len; ++i) dot += p[i * stride] * g[i * stride];
  for (std::size_t i = 0; i < len; ++i) gz[i * stride] += p[i * stride] * (g[i * stride] - dot);
}

}  // namespace kernel

// ---------------------------------------------------------------------------
// Ops
// ---------------------------------------------------------------------------

namespace detail {

struct BatchedDims {
  std::size_t batch, rows, cols;
};

inline BatchedDims batched_dims(const Shape& s, const char* op) {
  if (s.size() == 2) return {1, s[0], s[1]};
  if (s.size() == 3) return {s[0], s[1], s[2]};
  throw ShapeError(std::string(op) + ": expected rank 2 or 3, got " + shape_str(s));
}

}  // namespace detail

/// out[b] = a[b] * b[b]. Rank-2 inputs are treated as a batch of one.
template <class S>
Tensor<S> matmul_batched(const Tensor<S>& a, const Tensor<S>& b) {
  const auto da = detail::batched_dims(a.shape(), "matmul_batched");
  const auto db = detail::batched_dims(b.shape(), "matmul_batched");
  if (da.batch != db.batch)
    throw ShapeError("matmul_batched: batch extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  if (da.cols != db.rows)
    throw ShapeError("matmul_batched: inner extents differ: " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  const std::size_t B = da.batch, m = da.rows, k = da.cols, n = db.cols;
  std::vector<S> out(B * m * n, S(0));
  for (std::size_t bi = 0; bi < B; ++bi)
    kernel::gemm_nn(a.data().data() + bi * m * k, b.data().data() + bi * k * n,
                    out.data() + bi * m * n, m, k, n);
  Shape os = (a.rank() == 3 || b.rank() == 3) ? Shape{B, m, n} : Shape{m, n};
  return autograd::make_result<S>(
      std::move(os), std::move(out), {a, b}, "matmul_batched",
      [B, m, k, n](detail::Node<S>& self) {
        const S* g = self.grad.data();
        const S* av = self.parents[0]->data.data();
        const S* bv = self.parents[1]->data.data();
        if (S* ga = autograd::grad_of(self, 0))
          for (std::size_t bi = 0; bi < B; ++bi)
            kernel::gemm_nt(g + bi * m * n, bv + bi * k * n, ga + bi * m * k, m, n, k);
        if (S* gb = autograd::grad_of(self, 1))
          for (std::size_t bi = 0; bi < B; ++bi)
            kernel::gemm_tn(av + bi * m * k, g + bi * m * n, gb + bi * k * n, k, m, n);
      });
}

/// Swap the last two axes (copying). Rank-2 inputs are treated as B = 1.
template <class S>
Tensor<S> transpose_last2(const Tensor<S>& a) {
  if (a.rank() < 2)
    throw ShapeError("transpose_last2: rank must be 2 or 3, got " + shape_str(a.shape()));
  const auto d = detail::batched_dims(a.shape(), "transpose_last2");
  std::vector<S> out(a.numel());
  const S* src = a.data().data();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t i = 0; i < d.rows; ++i)
      for (std::size_t j = 0; j < d.cols; ++j)
        out[(b * d.cols + j) * d.rows + i] = src[(b * d.rows + i) * d.cols + j];
  Shape os = a.shape();
  std::swap(os[os.size() - 1], os[os.size() - 2]);
  return autograd::make_result<S>(std::move(os), std::move(out), {a}, "transpose_last2",
                                  [d](detail::Node<S>& self) {
                                    S* ga = autograd::grad_of(self, 0);
                                    const S* g = self.grad.data();
                                    for (std::size_t b = 0; b < d.batch; ++b)
                                      for (std::size_t i = 0; i < d.rows; ++i)
                                        for (std::size_t j = 0; j < d.cols; ++j)
                                          ga[(b * d.rows + i) * d.cols + j] +=
                                              g[(b * d.cols + j) * d.rows + i];
                                  });
}

/// Concatenate along the last axis. All leading extents must agree.
template <class S>
Tensor<S> concat_lastdim(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_lastdim: no parts");
  const Shape& first = parts.front().shape();
  Shape lead(first.begin(), first.end() - 1);
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape pl(p.shape().begin(), p.shape().end() - 1);
    if (pl != lead)
      throw ShapeError("concat_lastdim: leading extents differ: " + shape_str(first) + " vs " +
                       shape_str(p.shape()));
    widths.push_back(p.shape().back());
    total += p.shape().back();
  }
  const std::size_t rows = shape_numel(lead);
  std::vector<S> out(rows * total);
  std::size_t off = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const S* src = parts[pi].data().data();
    const std::size_t w = widths[pi];
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(src + r * w, src + (r + 1) * w, out.begin() + r * total + off);
    off += w;
  }
  Shape os = lead;
  os.push_back(total);
  return autograd::make_result<S>(std::move(os), std::move(out), parts, "concat_lastdim",
                                  [rows, total, widths](detail::Node<S>& self) {
                                    const S* g = self.grad.data();
                                    std::size_t off = 0;
                                    for (std::size_t pi = 0; pi < widths.size(); ++pi) {
                                      const std::size_t w = widths[pi];
                                      if (S* gp = autograd::grad_of(self, pi))
                                        for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t j = 0; j < w; ++j)
                                            gp[r * w + j] += g[r * total + off + j];
                                      off += w;
                                    }
                                  });
}

/// Columns [offset, offset + width) of the last axis.
template <class S>
Tensor<S> slice_lastdim(const Tensor<S>& a, std::size_t offset, std::size_t width) {
  const std::size_t total = a.shape().back();
  if (width == 0 || offset + width > total)
    throw ShapeError("slice_lastdim: range [" + std::to_string(offset) + "," +
                     std::to_string(offset + width) + ") outside last extent " +
                     std::to_string(total));
  const std::size_t rows = a.numel() / total;
  std::vector<S> out(rows * width);
  const S* src = a.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(src + r * total + offset, src + r * total + offset + width, out.begin() + r * width);
  Shape os = a.shape();
  os.back() = width;
  return autograd::make_result<S>(std::move(os), std::move(out), {a}, "slice_lastdim",
                                  [rows, total, offset, width](detail::Node<S>& self) {
                                    S* ga = autograd::grad_of(self, 0);
                                    const S* g = self.grad.data();
                                    for (std::size_t r = 0; r < rows; ++r)
                                      for (std::size_t j = 0; j < width; ++j)
                                        ga[r * total + offset + j] += g[r * width + j];
                                  });
}

/// Same values, new extents.
template <class S>
Tensor<S> reshape(const Tensor<S>& a, Shape shape) {
  detail::check_shape(shape);
  if (shape_numel(shape) != a.numel())
    throw ShapeError("reshape: " + shape_str(a.shape()) + " -> " + shape_str(shape));
  return autograd::make_result<S>(std::move(shape), a.values(), {a}, "reshape",
                                  [](detail::Node<S>& self) {
                                    S* ga = autograd::grad_of(self, 0);
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      ga[i] += self.grad[i];
                                  });
}

enum class BinaryKind { kAdd, kSub, kMul };

namespace detail {

// Equal shapes, or b is a rank-1 bias matching a's last extent.
template <class S>
Tensor<S> binary(const Tensor<S>& a, const Tensor<S>& b, BinaryKind kind) {
  const bool bias = a.shape() != b.shape();
  if (bias && !(b.rank() == 1 && b.dim(0) == a.shape().back()))
    throw ShapeError("elementwise: shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " are not broadcastable");
  const std::size_t n = a.numel(), w = b.numel();
  const S* av = a.data().data();
  const S* bv = b.data().data();
  std::vector<S> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const S y = bv[bias ? i % w : i];
    switch (kind) {
      case BinaryKind::kAdd: out[i] = av[i] + y; break;
      case BinaryKind::kSub: out[i] = av[i] - y; break;
      case BinaryKind::kMul: out[i] = av[i] * y; break;
    }
  }
  const char* name = kind == BinaryKind::kAdd ? "add" : kind == BinaryKind::kSub ? "sub" : "mul";
  return autograd::make_result<S>(
      a.shape(), std::move(out), {a, b}, name, [n, w, bias, kind](detail::Node<S>& self) {
        const S* g = self.grad.data();
        const S* av = self.parents[0]->data.data();
        const S* bv = self.parents[1]->data.data();
        if (S* ga = autograd::grad_of(self, 0))
          for (std::size_t i = 0; i < n; ++i)
            ga[i] += kind == BinaryKind::kMul ? g[i] * bv[bias ? i % w : i] : g[i];
        if (S* gb = autograd::grad_of(self, 1))
          for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = bias ? i % w : i;
            switch (kind) {
              case BinaryKind::kAdd: gb[j] += g[i]; break;
              case BinaryKind::kSub: gb[j] -= g[i]; break;
              case BinaryKind::kMul: gb[j] += g[i] * av[i]; break;
            }
          }
      });
}

}  // namespace detail

template <class S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary(a, b, BinaryKind::kAdd);
}
template <class S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary(a, b, BinaryKind::kSub);
}
template <class S>
Tensor<S> mul(const Tensor<S>& a, const Tensor<S>& b) {
  return detail::binary(a, b, BinaryKind::kMul);
}

template <class S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  std::vector<S> out(a.values());
  for (auto& v : out) v *= c;
  return autograd::make_result<S>(a.shape(), std::move(out), {a}, "scale",
                                  [c](detail::Node<S>& self) {
                                    S* ga = autograd::grad_of(self, 0);
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      ga[i] += c * self.grad[i];
                                  });
}

/// max(x, 0). The subgradient at exactly 0 is taken as 0.
template <class S>
Tensor<S> relu(const Tensor<S>& a) {
  std::vector<S> out(a.values());
  for (auto& v : out) v = v > S(0) ? v : S(0);
  return autograd::make_result<S>(a.shape(), std::move(out), {a}, "relu",
                                  [](detail::Node<S>& self) {
                                    S* ga = autograd::grad_of(self, 0);
                                    const S* x = self.parents[0]->data.data();
                                    for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      if (x[i] > S(0)) ga[i] += self.grad[i];
                                  });
}

/// x[..., F_in] * W[F_in, F_out] (+ bias[F_out]), applied to every row.
template <class S>
Tensor<S> linear(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>* bias = nullptr) {
  if (w.rank() != 2 || x.shape().back() != w.dim(0))
    throw ShapeError("linear: input " + shape_str(x.shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  if (bias && (bias->rank() != 1 || bias->dim(0) != w.dim(1)))
    throw ShapeError("linear: bias " + shape_str(bias->shape()) + " incompatible with weight " +
                     shape_str(w.shape()));
  const std::size_t fin = w.dim(0), fout = w.dim(1), rows = x.numel() / fin;
  std::vector<S> out(rows * fout, S(0));
  if (bias)
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(bias->data().begin(), bias->data().end(), out.begin() + r * fout);
  kernel::gemm_nn(x.data().data(), w.data().data(), out.data(), rows, fin, fout);
  Shape os = x.shape();
  os.back() = fout;
  std::vector<Tensor<S>> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return autograd::make_result<S>(
      std::move(os), std::move(out), std::move(inputs), "linear",
      [rows, fin, fout](detail::Node<S>& self) {
        const S* g = self.grad.data();
        if (S* gx = autograd::grad_of(self, 0))
          kernel::gemm_nt(g, self.parents[1]->data.data(), gx, rows, fout, fin);
        if (S* gw = autograd::grad_of(self, 1))
          kernel::gemm_tn(self.parents[0]->data.data(), g, gw, fin, rows, fout);
        if (self.parents.size() > 2)
          if (S* gb = autograd::grad_of(self, 2))
            for (std::size_t r = 0; r < rows; ++r)
              for (std::size_t j = 0; j < fout; ++j) gb[j] += g[r * fout + j];
      });
}

/// Numerically stable softmax along `axis`.
template <class S>
Tensor<S> softmax_axis(const Tensor<S>& z, std::size_t axis) {
  const kernel::AxisGeometry geo(z.shape(), axis);
  std::vector<S> out(z.numel());
  for (std::size_t q = 0; q < geo.slices(); ++q) {
    const std::size_t b = geo.base(q);
    kernel::softmax_slice(z.data().data() + b, static_cast<const std::uint8_t*>(nullptr),
                          out.data() + b, geo.len, geo.inner);
  }
  return autograd::make_result<S>(z.shape(), std::move(out), {z}, "softmax_axis",
                                  [geo](detail::Node<S>& self) {
                                    S* gz = autograd::grad_of(self, 0);
                                    for (std::size_t q = 0; q < geo.slices(); ++q) {
                                      const std::size_t b = geo.base(q);
                                      kernel::softmax_slice_backward(
                                          self.data.data() + b, self.grad.data() + b, gz + b,
                                          geo.len, geo.inner);
                                    }
                                  });
}

template <class S>
Tensor<S> sum(const Tensor<S>& a) {
  S s = 0;
  for (S v : a.data()) s += v;
  return autograd::make_result<S>({1}, {s}, {a}, "sum", [](detail::Node<S>& self) {
    S* ga = autograd::grad_of(self, 0);
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += self.grad[0];
  });
}

template <class S>
Tensor<S> mean(const Tensor<S>& a) {
  return scale(sum(a), S(1) / static_cast<S>(a.numel()));
}

/// Rows of a [V, D] table selected by index, giving [n, D].
template <class S>
Tensor<S> gather_rows(const Tensor<S>& table, const std::vector<std::size_t>& idx) {
  if (table.rank() != 2) throw ShapeError("gather_rows: table must be rank 2");
  if (idx.empty()) throw ShapeError("gather_rows: no indices");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<S> out(idx.size() * d);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    if (idx[r] >= vocab)
      throw ShapeError("gather_rows: index " + std::to_string(idx[r]) + " >= vocab " +
                       std::to_string(vocab));
    std::copy_n(table.data().data() + idx[r] * d, d, out.begin() + r * d);
  }
  return autograd::make_result<S>({idx.size(), d}, std::move(out), {table}, "gather_rows",
                                  [idx, d](detail::Node<S>& self) {
                                    S* gt = autograd::grad_of(self, 0);
                                    for (std::size_t r = 0; r < idx.size(); ++r)
                                      for (std::size_t j = 0; j < d; ++j)
                                        gt[idx[r] * d + j] += self.grad[r * d + j];
                                  });
}

/// Normalize every row over the last axis, then apply gain and shift.
template <class S>
Tensor<S> layer_norm(const Tensor<S>& x, const Tensor<S>& gain, const Tensor<S>& shift,
                     S eps = S(1e-5)) {
  const std::size_t d = x.shape().back(), rows = x.numel() / d;
  if (gain.numel() != d || shift.numel() != d)
    throw ShapeError("layer_norm: gain/shift must have " + std::to_string(d) + " elements");
  std::vector<S> out(x.numel()), xhat(x.numel()), inv_std(rows);
  const S* xv = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    S mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += xv[r * d + j];
    mu /= static_cast<S>(d);
    S var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (xv[r * d + j] - mu) * (xv[r * d + j] - mu);
    var /= static_cast<S>(d);
    inv_std[r] = S(1) / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (xv[r * d + j] - mu) * inv_std[r];
      out[r * d + j] = xhat[r * d + j] * gain[j] + shift[j];
    }
  }
  return autograd::make_result<S>(
      x.shape(), std::move(out), {x, gain, shift}, "layer_norm",
      [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node<S>& self) {
        const S* g = self.grad.data();
        const S* gamma = self.parents[1]->data.data();
        if (S* gx = autograd::grad_of(self, 0))
          for (std::size_t r = 0; r < rows; ++r) {
            S m1 = 0, m2 = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const S gh = g[r * d + j] * gamma[j];
              m1 += gh;
              m2 += gh * xhat[r * d + j];
            }
            m1 /= static_cast<S>(d);
            m2 /= static_cast<S>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const S gh = g[r * d + j] * gamma[j];
              gx[r * d + j] += inv_std[r] * (gh - m1 - xhat[r * d + j] * m2);
            }
          }
        if (S* gg = autograd::grad_of(self, 1))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * xhat[r * d + j];
        if (S* gs = autograd::grad_of(self, 2))
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gs[j] += g[r * d + j];
      });
}

/// log(1 + sum_i exp(s_i)), evaluated as a log-sum-exp that includes the
/// implicit zero exponent.
template <class S>
Tensor<S> log1p_sum_exp(const Tensor<S>& s) {
  // value = m + log1p(sum of every other term scaled by e^-m), where m is the
  // largest exponent including the implicit zero.
  const auto& v = s.data();
  S mx = 0;
  std::size_t arg = v.size();
  for (std::size_t i = 0; i < v.size(); ++i)
    if (v[i] > mx) mx = v[arg = i];
  S rest = arg == v.size() ? S(0) : std::exp(-mx);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (i != arg) rest += std::exp(v[i] - mx);
  const S value = mx + std::log1p(rest);
  return autograd::make_result<S>({1}, {value}, {s}, "log1p_sum_exp",
                                  [value](detail::Node<S>& self) {
                                    S* gs = autograd::grad_of(self, 0);
                                    const auto& v = self.parents[0]->data;
                                    for (std::size_t i = 0; i < v.size(); ++i)
                                      gs[i] += self.grad[0] * std::exp(v[i] - value);
                                  });
}

/// Same shape, different element type. Not differentiable.
template <class To, class From>
Tensor<To> cast(const Tensor<From>& a) {
  std::vector<To> d(a.data().begin(), a.data().end());
  return Tensor<To>(a.shape(), std::move(d));
}

}  // namespace linet
