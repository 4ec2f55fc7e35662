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

// Top-K Softmax gating.
//
// Along the gate axis only the k largest logits survive; the softmax is taken
// over the survivors and every other weight is exactly zero. Excluded entries
// are left out of the normalizing sum rather than set to -inf.
//
// Every gate in the model normalizes along the axis contracted by the matmul
// that consumes it, so each output slot is a convex combination of sources.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "linet/error.hpp"
#include "linet/tensor.hpp"

namespace linet {

using GateMask = std::vector<std::uint8_t>;

struct GateConfig {
  double retention = 1.0;  // fraction of entries kept along `axis`, in (0, 1]
  std::size_t axis = 0;

  void validate(const Shape& logits) const {
    if (!(retention > 0.0 && retention <= 1.0))
      throw ConfigError("gate retention must be in (0, 1], got " + std::to_string(retention));
    if (axis >= logits.size())
      throw ConfigError("gate axis " + std::to_string(axis) + " invalid for logits " +
                        shape_str(logits));
  }
};

/// k = clamp(ceil(retention * axis_len), 1, axis_len).
inline std::size_t retention_to_k(double retention, std::size_t axis_len) {
  if (!(retention > 0.0 && retention <= 1.0))
    throw ConfigError("retention must be in (0, 1], got " + std::to_string(retention));
  if (axis_len == 0) throw ConfigError("gate axis length must be positive");
  // Guard against products like 0.7 * 10 = 7.000000000000001.
  const double raw = retention * static_cast<double>(axis_len);
  const double nearest = std::round(raw);
  const double k = std::abs(raw - nearest) < 1e-9 ? nearest : std::ceil(raw);
  return std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, axis_len);
}

template <class S>
struct GateOutput {
  Tensor<S> weights;  // same shape as the logits
  GateMask mask;      // 1 = member of the selected index set
  std::size_t axis = 0;
  std::size_t k = 0;
};

/// Selects the k largest entries of every slice along `axis`. Ties at the
/// boundary go to the lower index.
template <class S>
GateMask topk_mask(const Tensor<S>& z, std::size_t axis, std::size_t k) {
  const kernel::AxisGeometry geo(z.shape(), axis);
  if (k == 0 || k > geo.len)
    throw ConfigError("top-k: k=" + std::to_string(k) + " outside [1, " + std::to_string(geo.len) +
                      "]");
  GateMask mask(z.numel(), 0);
  const S* zv = z.data().data();
  std::vector<std::size_t> order(geo.len);
  for (std::size_t q = 0; q < geo.slices(); ++q) {
    const std::size_t base = geo.base(q);
    auto at = [&](std::size_t i) { return zv[base + i * geo.inner]; };
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (k < geo.len)
      std::nth_element(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k - 1),
                       order.end(), [&](std::size_t a, std::size_t b) {
                         return at(a) > at(b) || (at(a) == at(b) && a < b);
                       });
    for (std::size_t j = 0; j < k; ++j) mask[base + order[j] * geo.inner] = 1;
  }
  return mask;
}

namespace detail {

template <class S>
GateOutput<S> masked_softmax(const Tensor<S>& z, std::size_t axis, std::size_t k, GateMask mask) {
  const kernel::AxisGeometry geo(z.shape(), axis);
  std::vector<S> out(z.numel());
  for (std::size_t q = 0; q < geo.slices(); ++q) {
    const std::size_t b = geo.base(q);
    kernel::softmax_slice(z.data().data() + b, mask.data() + b, out.data() + b, geo.len,
                          geo.inner);
  }
  // Mask is constant for differentiation; softmax_slice_backward is zero
  // wherever the weight is zero, which covers every unselected entry.
  Tensor<S> w = autograd::make_result<S>(
      z.shape(), std::move(out), {z}, "topk_softmax", [geo](Node<S>& self) {
        S* gz = autograd::grad_of(self, 0);
        for (std::size_t q = 0; q < geo.slices(); ++q) {
          const std::size_t b = geo.base(q);
          kernel::softmax_slice_backward(self.data.data() + b, self.grad.data() + b, gz + b,
                                         geo.len, geo.inner);
        }
      });
  return {std::move(w), std::move(mask), axis, k};
}

template <class S>
void check_finite(const Tensor<S>& z, const char* what) {
  for (S v : z.data())
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + ": non-finite logit");
}

}  // namespace detail

/// Top-K Softmax along `cfg.axis`. With `frozen`, that selection is reused
/// instead of recomputed (for finite-difference checks).
template <class S>
GateOutput<S> topk_softmax(const Tensor<S>& z, const GateConfig& cfg,
                           const GateMask* frozen = nullptr) {
  cfg.validate(z.shape());
  detail::check_finite(z, "topk_softmax");
  const std::size_t k = retention_to_k(cfg.retention, z.dim(cfg.axis));
  if (frozen) {
    if (frozen->size() != z.numel())
      throw ShapeError("topk_softmax: frozen mask size does not match logits");
    return detail::masked_softmax(z, cfg.axis, k, *frozen);
  }
  return detail::masked_softmax(z, cfg.axis, k, topk_mask(z, cfg.axis, k));
}

/// Gradient of the gate with respect to its logits, mask held fixed:
/// for i, j selected, dp_i/dz_j = p_i (delta_ij - p_j); zero elsewhere.
template <class S>
std::vector<S> topk_softmax_backward(std::span<const S> grad_out, const GateOutput<S>& gate) {
  const auto& w = gate.weights;
  if (grad_out.size() != w.numel())
    throw ShapeError("topk_softmax_backward: upstream gradient size mismatch");
  const kernel::AxisGeometry geo(w.shape(), gate.axis);
  std::vector<S> gz(w.numel(), S(0));
  for (std::size_t q = 0; q < geo.slices(); ++q) {
    const std::size_t b = geo.base(q);
    kernel::softmax_slice_backward(w.data().data() + b, grad_out.data() + b, gz.data() + b,
                                   geo.len, geo.inner);
  }
  return gz;
}

/// Ordinary softmax presented as a gate whose mask is all-true.
template <class S>
GateOutput<S> dense_softmax_gate(const Tensor<S>& z, std::size_t axis) {
  GateConfig{1.0, axis}.validate(z.shape());
  detail::check_finite(z, "dense_softmax_gate");
  return detail::masked_softmax(z, axis, z.dim(axis), GateMask(z.numel(), 1));
}

}  // namespace linet
