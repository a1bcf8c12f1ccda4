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
#include <vector>

#include "lid/tensor.hpp"

// Differentiable operators. Each takes an optional tape: when the tape is
// non-null and any input requires a gradient, the op records its backward
// rule and the output requires a gradient too. With a null tape the op is a
// plain forward computation (inference).

namespace lid {

enum class Mode { kTrain, kInfer };
enum class Direction { kForward, kBackward };

// Number of worker threads used inside conv2d. 1 (the default) keeps every
// reduction in a fixed order, which makes training bit-reproducible.
void set_intra_op_threads(int threads);
int intra_op_threads();

// Stride-1 cross-correlation with "same" zero padding.
// x [N, C, H, W], weight [F, C, kh, kw], bias [F] -> [N, F, H, W].
template <typename T>
BasicTensor<T> conv2d(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> relu(Tape<T>* tape, const BasicTensor<T>& x);

template <typename T>
struct BatchNormStats {
  BasicTensor<T> running_mean;
  BasicTensor<T> running_var;

  BatchNormStats() = default;
  explicit BatchNormStats(std::size_t channels)
      : running_mean(Shape{channels}), running_var(Shape{channels}, std::vector<T>(channels, T(1))) {}
};

struct BatchNormOptions {
  double momentum = 0.9;
  double eps = 1e-5;
};

// Per-channel normalization over (N, H, W). Train mode uses batch statistics
// and updates the running estimates as
//   running = momentum * running + (1 - momentum) * batch
// (running variance takes the unbiased batch variance). Infer mode reads the
// running estimates and leaves them untouched.
template <typename T>
BasicTensor<T> batchnorm2d(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                           const BatchNormOptions& options = {});

// 2x2 window, stride 2, trailing odd row/column dropped. The gradient goes to
// the first maximum in row-major scan order.
template <typename T>
BasicTensor<T> maxpool2x2(Tape<T>* tape, const BasicTensor<T>& x);

// Gate columns are laid out [input | forget | candidate | output].
template <typename T>
struct LstmWeights {
  BasicTensor<T> w_input;      // [D, 4H]
  BasicTensor<T> w_recurrent;  // [H, 4H]
  BasicTensor<T> bias;         // [4H]
};

// xs [T, N, D] -> [T, N, H], zero initial state. The backward direction runs
// over reversed time and returns outputs in original time order.
template <typename T>
BasicTensor<T> lstm_sequence(Tape<T>* tape, const BasicTensor<T>& xs, const LstmWeights<T>& weights,
                             Direction direction);

// x [N, D], weight [D, K], bias [K] -> [N, K].
template <typename T>
BasicTensor<T> dense(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias);

// Mean negative log-likelihood over the batch; returns shape [1].
template <typename T>
BasicTensor<T> softmax_cross_entropy(Tape<T>* tape, const BasicTensor<T>& logits, std::span<const int> labels);

// Row-wise softmax, no gradient.
template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits);

// featmap [N, C, H, W] -> sequence [W, N, C * H]; step w holds feature
// c * H + h = featmap[n, c, h, w] (channel-major).
template <typename T>
BasicTensor<T> feature_sequence(Tape<T>* tape, const BasicTensor<T>& featmap);

// xs [T, N, D] -> xs[t] as [N, D].
template <typename T>
BasicTensor<T> time_step(Tape<T>* tape, const BasicTensor<T>& xs, std::size_t t);

// xs [T, N, D] -> mean over T, [N, D].
template <typename T>
BasicTensor<T> time_mean(Tape<T>* tape, const BasicTensor<T>& xs);

// a [N, A], b [N, B] -> [N, A + B].
template <typename T>
BasicTensor<T> concat_features(Tape<T>* tape, const BasicTensor<T>& a, const BasicTensor<T>& b);

// x [N, ...] -> [N, prod(...)].
template <typename T>
BasicTensor<T> flatten(Tape<T>* tape, const BasicTensor<T>& x);

}  // namespace lid
