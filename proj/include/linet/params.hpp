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

#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "linet/error.hpp"
#include "linet/tensor.hpp"

namespace linet {

using ShapeList = std::vector<std::pair<std::string, Shape>>;

template <class S>
struct NamedTensor {
  std::string name;
  Tensor<S> tensor;
};

/// Ordered collection of named learnable tensors.
template <class S>
class ParamSet {
 public:
  void add(std::string name, Tensor<S> t) {
    for (const auto& p : items_)
      if (p.name == name) throw ConfigError("duplicate parameter '" + name + "'");
    t.set_requires_grad(true);
    items_.push_back({std::move(name), std::move(t)});
  }

  const Tensor<S>& get(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return p.tensor;
    throw ConfigError("no parameter named '" + name + "'");
  }
  bool contains(const std::string& name) const {
    for (const auto& p : items_)
      if (p.name == name) return true;
    return false;
  }

  std::size_t size() const { return items_.size(); }
  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : items_) n += p.tensor.numel();
    return n;
  }
  void zero_grad() {
    for (auto& p : items_) p.tensor.zero_grad();
  }

  /// Deep copy of the values (fresh leaves).
  ParamSet clone() const {
    ParamSet out;
    for (const auto& p : items_) out.add(p.name, p.tensor.clone(true));
    return out;
  }
  /// Overwrite values from another set with identical names and shapes.
  void assign(const ParamSet& other) {
    if (other.size() != size()) throw ConfigError("parameter sets differ in size");
    for (std::size_t i = 0; i < items_.size(); ++i) {
      if (items_[i].name != other.items_[i].name ||
          items_[i].tensor.shape() != other.items_[i].tensor.shape())
        throw ConfigError("parameter '" + items_[i].name + "' does not match");
      auto dst = items_[i].tensor.mutable_data();
      auto src = other.items_[i].tensor.data();
      std::copy(src.begin(), src.end(), dst.begin());
    }
  }

  auto begin() { return items_.begin(); }
  auto end() { return items_.end(); }
  auto begin() const { return items_.begin(); }
  auto end() const { return items_.end(); }
  const NamedTensor<S>& operator[](std::size_t i) const { return items_[i]; }

 private:
  std::vector<NamedTensor<S>> items_;
};

/// Initial values by naming convention: `*.w*` matrices get Glorot-uniform
/// values, `*.b*` and `*.shift` zeros, `*.gain` ones, `emb.*` rows N(0, 0.02).
template <class S>
ParamSet<S> init_params(const ShapeList& shapes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  ParamSet<S> ps;
  for (const auto& [name, shape] : shapes) {
    const auto leaf = name.substr(name.rfind('.') + 1);
    std::vector<S> d(shape_numel(shape), S(0));
    if (name.rfind("emb.", 0) == 0) {
      std::normal_distribution<double> dist(0.0, 0.02);
      for (auto& v : d) v = static_cast<S>(dist(rng));
    } else if (leaf == "gain") {
      std::fill(d.begin(), d.end(), S(1));
    } else if (leaf[0] == 'w' && shape.size() == 2) {
      const double a = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      std::uniform_real_distribution<double> dist(-a, a);
      for (auto& v : d) v = static_cast<S>(dist(rng));
    }
    ps.add(name, Tensor<S>(shape, std::move(d), true));
  }
  return ps;
}

inline std::size_t count_scalars(const ShapeList& shapes) {
  std::size_t n = 0;
  for (const auto& [name, shape] : shapes) n += shape_numel(shape);
  return n;
}

}  // namespace linet
