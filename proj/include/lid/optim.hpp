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

#pragma once

#include <cstdint>
#include <span>

#include "lid/tensor.hpp"

namespace lid {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct SgdConfig {
  double learning_rate = 1e-2;
  double momentum = 0.0;
};

// One Adam update with bias correction at step t (t >= 1):
//   m = b1 m + (1 - b1) g,  v = b2 v + (1 - b2) g^2
//   theta -= lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
template <typename T>
void adam_step(std::span<BasicParameter<T>* const> params, const AdamConfig& config, std::int64_t t);

// theta -= lr * g, or with momentum: vel = momentum * vel + g; theta -= lr * vel.
template <typename T>
void sgd_step(std::span<BasicParameter<T>* const> params, const SgdConfig& config);

template <typename T>
void zero_grad(std::span<BasicParameter<T>* const> params) {
  for (auto* p : params) p->tensor.zero_grad();
}

}  // namespace lid
