// Copyright 2026 The lid-crnn Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Central finite-difference gradient checking, shared by the unit and
// acceptance suites. Independent of the backward rules it checks: it only
// calls forward passes.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "lid/tensor.hpp"

namespace lid::testing {

using DTensor = BasicTensor<double>;
using DTape = Tape<double>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor). The floor keeps
// gradients that are zero up to rounding from dominating the statistic.
inline double relative_error(double analytic, double numeric, double floor = 1e-2) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

inline DTensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                             bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  DTensor t(std::move(shape), requires_grad);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

// sum_i out[i] * weights[i] as a taped scalar, so every output element
// contributes to the quantity under test.
inline DTensor project(DTape* tape, const DTensor& out, const std::vector<double>& weights) {
  double acc = 0.0;
  for (std::size_t i = 0; i < out.numel(); ++i) acc += out.data()[i] * weights[i];
  DTensor result(Shape{1}, std::vector<double>{acc});
  if (tape != nullptr && out.requires_grad()) {
    result.set_requires_grad(true);
    tape->record([out = out, result, weights]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0];
      auto gx = out.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g * weights[i];
    });
  }
  return result;
}

inline DTensor add_scalars(DTape* tape, const DTensor& a, const DTensor& b) {
  DTensor result(Shape{1}, std::vector<double>{a.item() + b.item()});
  if (tape != nullptr && (a.requires_grad() || b.requires_grad())) {
    result.set_requires_grad(true);
    tape->record([a = a, b = b, result]() mutable {
      if (!result.has_grad()) return;
      const double g = result.grad()[0];
      if (a.requires_grad()) a.grad()[0] += g;
      if (b.requires_grad()) b.grad()[0] += g;
    });
  }
  return result;
}

// loss(tape) must rebuild the graph from the given inputs on every call and
// return a scalar tensor. Analytic gradients come from one taped backward;
// numeric ones from (f(x + h) - f(x - h)) / 2h per element.
inline GradCheckResult check_gradients(const std::function<DTensor(DTape*)>& loss, std::vector<DTensor> inputs,
                                       double step = 1e-3) {
  for (auto& in : inputs) in.zero_grad();
  DTape tape;
  DTensor value = loss(&tape);
  tape.backward(value);

  GradCheckResult result;
  for (auto& in : inputs) {
    std::vector<double> analytic(in.grad().begin(), in.grad().end());
    auto data = in.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + step;
      const double up = loss(nullptr).item();
      data[i] = saved - step;
      const double down = loss(nullptr).item();
      data[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      result.max_rel_error = std::max(result.max_rel_error, relative_error(analytic[i], numeric));
      result.max_abs_error = std::max(result.max_abs_error, std::abs(analytic[i] - numeric));
      ++result.checked;
    }
  }
  return result;
}

}  // namespace lid::testing
