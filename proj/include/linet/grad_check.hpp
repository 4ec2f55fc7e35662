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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "linet/tensor.hpp"

namespace linet {

struct GradCheckOptions {
  double step = 1e-5;
  double tol = 1e-4;
  // Denominator floor of the relative error, so coordinates whose true
  // derivative is zero are judged by absolute error instead.
  double floor = 1e-6;
  // The floor also scales with the largest analytic gradient: a coordinate
  // 1e4 times smaller than the dominant one is compared in absolute terms,
  // where central differences are limited by rounding rather than slope.
  double scale_floor = 1e-4;
};

struct GradCheckReport {
  bool passed = true;
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::size_t worst_input = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::string message;
};

inline double relative_error(double analytic, double numeric, double floor) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

/// Compares analytic gradients of a scalar function against central
/// differences (f(x+h) - f(x-h)) / 2h, coordinate by coordinate, over every
/// tensor in `inputs`. `f` must rebuild its graph from the inputs' current
/// values each call.
inline GradCheckReport grad_check(const std::function<Tensor64()>& f,
                                  std::vector<Tensor64> inputs,
                                  const GradCheckOptions& opt = {}) {
  GradCheckReport rep;
  for (auto& t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  const Tensor64 loss = f();
  if (!std::isfinite(loss.item())) {
    rep.passed = false;
    rep.message = "loss is not finite";
    return rep;
  }
  loss.backward();

  double gmax = 0;
  for (const auto& x : inputs)
    for (double g : x.grad_view()) gmax = std::max(gmax, std::abs(g));
  const double floor = std::max(opt.floor, opt.scale_floor * gmax);

  NoGradGuard no_grad;
  for (std::size_t ti = 0; ti < inputs.size(); ++ti) {
    auto& x = inputs[ti];
    const std::vector<double> analytic = x.grad();
    auto data = x.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double orig = data[i];
      data[i] = orig + opt.step;
      const double fp = f().item();
      data[i] = orig - opt.step;
      const double fm = f().item();
      data[i] = orig;
      const double numeric = (fp - fm) / (2.0 * opt.step);
      ++rep.coordinates;
      if (!std::isfinite(numeric) || !std::isfinite(analytic[i])) {
        rep.passed = false;
        std::ostringstream os;
        os << "NaN/inf at input " << ti << " coordinate " << i;
        rep.message = os.str();
        rep.worst_input = ti;
        rep.worst_index = i;
        return rep;
      }
      const double err = relative_error(analytic[i], numeric, floor);
      if (err > rep.max_rel_error) {
        rep.max_rel_error = err;
        rep.worst_input = ti;
        rep.worst_index = i;
        rep.worst_analytic = analytic[i];
        rep.worst_numeric = numeric;
      }
    }
  }
  rep.passed = rep.max_rel_error <= opt.tol;
  std::ostringstream os;
  os << "max rel err " << rep.max_rel_error << " over " << rep.coordinates
     << " coordinates (worst: input " << rep.worst_input << " index " << rep.worst_index
     << ", analytic " << rep.worst_analytic << ", numeric " << rep.worst_numeric << ")";
  rep.message = os.str();
  return rep;
}

/// Single-input form: `f` maps x to a scalar.
inline GradCheckReport grad_check(const std::function<Tensor64(const Tensor64&)>& f,
                                  const Tensor64& x, const GradCheckOptions& opt = {}) {
  return grad_check([&] { return f(x); }, std::vector<Tensor64>{x}, opt);
}

}  // namespace linet
