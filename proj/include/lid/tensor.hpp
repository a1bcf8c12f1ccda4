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

#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace lid {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

// Dense row-major tensor handle. Copies share storage (like a framework
// "variable"); use clone() for an independent copy. The gradient buffer is
// allocated on first use.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, bool requires_grad = false);
  BasicTensor(Shape shape, std::vector<T> values, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape.at(i); }
  std::size_t numel() const { return impl_->value.size(); }

  std::span<T> data() { return impl_->value; }
  std::span<const T> data() const { return impl_->value; }
  std::vector<T>& values() { return impl_->value; }
  const std::vector<T>& values() const { return impl_->value; }
  T item() const { return impl_->value.at(0); }

  bool requires_grad() const { return impl_ && impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }
  bool has_grad() const { return impl_ && !impl_->grad.empty(); }
  // Zero-initialized on first access.
  std::span<T> grad();
  std::span<const T> grad() const { return impl_->grad; }
  void zero_grad();

  BasicTensor clone() const;

  friend bool same_storage(const BasicTensor& a, const BasicTensor& b) { return a.impl_ == b.impl_; }

 private:
  struct Impl {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> impl_;
};

// Record of executed differentiable operations. backward() replays the
// recorded closures in exact reverse order; each closure accumulates (+=)
// into the gradients of its inputs.
template <typename T>
class Tape {
 public:
  void record(std::function<void()> backward_fn) { entries_.push_back(std::move(backward_fn)); }

  // Seeds d(loss)/d(loss) = 1, runs every closure in reverse, then clears.
  void backward(BasicTensor<T>& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

 private:
  std::vector<std::function<void()>> entries_;
};

// Trainable tensor plus its optimizer slots (first and second moments for
// Adam; m doubles as the velocity buffer for momentum SGD).
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> tensor;
  std::vector<T> m;
  std::vector<T> v;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
    reset_moments();
  }
  void reset_moments() {
    m.assign(tensor.numel(), T(0));
    v.assign(tensor.numel(), T(0));
  }
};

using Tensor = BasicTensor<float>;
using Parameter = BasicParameter<float>;

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace lid
