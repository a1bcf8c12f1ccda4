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

#include "lid/optim.hpp"

#include <cmath>
#include <string>

#include "lid/error.hpp"

namespace lid {

template <typename T>
void adam_step(std::span<BasicParameter<T>* const> params, const AdamConfig& config, std::int64_t t) {
  if (t < 1) throw Error("adam_step: step must be >= 1, got " + std::to_string(t));
  const double correction1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double correction2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  for (auto* p : params) {
    if (!p->tensor.has_grad()) continue;
    if (p->m.size() != p->tensor.numel() || p->v.size() != p->tensor.numel()) {
      throw ShapeError("adam_step: moment buffers of " + p->name + " do not match its shape");
    }
    auto theta = p->tensor.data();
    auto g = p->tensor.grad();
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double m = config.beta1 * static_cast<double>(p->m[i]) + (1.0 - config.beta1) * gi;
      const double v = config.beta2 * static_cast<double>(p->v[i]) + (1.0 - config.beta2) * gi * gi;
      p->m[i] = static_cast<T>(m);
      p->v[i] = static_cast<T>(v);
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.eps));
    }
  }
}

template <typename T>
void sgd_step(std::span<BasicParameter<T>* const> params, const SgdConfig& config) {
  for (auto* p : params) {
    if (!p->tensor.has_grad()) continue;
    auto theta = p->tensor.data();
    auto g = p->tensor.grad();
    if (config.momentum == 0.0) {
      for (std::size_t i = 0; i < theta.size(); ++i) {
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) - config.learning_rate * static_cast<double>(g[i]));
      }
      continue;
    }
    if (p->m.size() != theta.size()) throw ShapeError("sgd_step: velocity buffer of " + p->name + " has wrong size");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double vel = config.momentum * static_cast<double>(p->m[i]) + static_cast<double>(g[i]);
      p->m[i] = static_cast<T>(vel);
      theta[i] = static_cast<T>(static_cast<double>(theta[i]) - config.learning_rate * vel);
    }
  }
}

template void adam_step<float>(std::span<BasicParameter<float>* const>, const AdamConfig&, std::int64_t);
template void adam_step<double>(std::span<BasicParameter<double>* const>, const AdamConfig&, std::int64_t);
template void sgd_step<float>(std::span<BasicParameter<float>* const>, const SgdConfig&);
template void sgd_step<double>(std::span<BasicParameter<double>* const>, const SgdConfig&);

}  // namespace lid
