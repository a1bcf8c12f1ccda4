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

#include "lid/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>
#include <thread>

#include "lid/error.hpp"

namespace lid {
namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<Mat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const Mat<T>>;
template <typename T>
using ConstMapRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;
template <typename T>
using MapRow = Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// Plain loops keep the summation order independent of buffer alignment, which
// Eigen's vectorized reductions do not.
template <typename T, typename M>
void add_row_sums(const M& m, T* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    T acc = T(0);
    for (Eigen::Index c = 0; c < m.cols(); ++c) acc += m(r, c);
    out[r] += acc;
  }
}

template <typename T, typename M>
void add_col_sums(const M& m, T* out) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  }
}

std::atomic<int> g_intra_op_threads{1};

template <typename T>
bool should_record(Tape<T>* tape, std::initializer_list<const BasicTensor<T>*> inputs) {
  if (tape == nullptr) return false;
  for (const auto* t : inputs) {
    if (t->defined() && t->requires_grad()) return true;
  }
  return false;
}

template <typename T>
void require_rank(const BasicTensor<T>& t, std::size_t rank, const char* op, const char* arg) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) + ", got " +
                     (t.defined() ? shape_string(t.shape()) : std::string("undefined")));
  }
}

// Splits [0, count) into contiguous chunks, one per worker, and calls
// fn(begin, end, worker).
template <typename Fn>
void parallel_chunks(std::size_t count, int workers, Fn&& fn) {
  workers = std::max(1, std::min<int>(workers, static_cast<int>(count)));
  if (workers == 1) {
    fn(std::size_t{0}, count, 0);
    return;
  }
  std::vector<std::thread> threads;
  const std::size_t chunk = (count + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t begin = std::min(count, w * chunk);
    const std::size_t end = std::min(count, begin + chunk);
    threads.emplace_back([&fn, begin, end, w] { fn(begin, end, w); });
  }
  for (auto& t : threads) t.join();
}

struct ConvGeometry {
  std::size_t n, c, h, w, f, kh, kw, pad_h, pad_w;
  std::size_t patch() const { return c * kh * kw; }
  std::size_t area() const { return h * w; }
};

// cols [C*kh*kw, H*W]
template <typename T>
void im2col(const T* image, const ConvGeometry& g, T* cols) {
  const std::size_t area = g.area();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        const auto dx = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad_w);
        const auto dy = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(g.pad_h);
        const std::size_t x_lo = std::min(g.w, dx < 0 ? static_cast<std::size_t>(-dx) : std::size_t{0});
        const std::size_t x_hi = dx > 0 ? g.w - std::min<std::size_t>(g.w, static_cast<std::size_t>(dx)) : g.w;
        for (std::size_t y = 0; y < g.h; ++y) {
          T* out = row + y * g.w;
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(out, out + g.w, T(0));
            continue;
          }
          const T* src = image + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          std::fill(out, out + x_lo, T(0));
          for (std::size_t x = x_lo; x < x_hi; ++x) out[x] = src[static_cast<std::ptrdiff_t>(x) + dx];
          std::fill(out + std::max(x_lo, x_hi), out + g.w, T(0));
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* image) {
  const std::size_t area = g.area();
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * area;
        const auto dx = static_cast<std::ptrdiff_t>(j) - static_cast<std::ptrdiff_t>(g.pad_w);
        const auto dy = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(g.pad_h);
        const std::size_t x_lo = std::min(g.w, dx < 0 ? static_cast<std::size_t>(-dx) : std::size_t{0});
        const std::size_t x_hi = dx > 0 ? g.w - std::min<std::size_t>(g.w, static_cast<std::size_t>(dx)) : g.w;
        for (std::size_t y = 0; y < g.h; ++y) {
          const auto sy = static_cast<std::ptrdiff_t>(y) + dy;
          if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = image + (c * g.h + static_cast<std::size_t>(sy)) * g.w;
          const T* in = row + y * g.w;
          for (std::size_t x = x_lo; x < x_hi; ++x) dst[static_cast<std::ptrdiff_t>(x) + dx] += in[x];
        }
      }
    }
  }
}

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

}  // namespace

void set_intra_op_threads(int threads) { g_intra_op_threads = std::max(1, threads); }
int intra_op_threads() { return g_intra_op_threads; }

template <typename T>
BasicTensor<T> conv2d(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                      const BasicTensor<T>& bias) {
  require_rank(x, 4, "conv2d", "input");
  require_rank(weight, 4, "conv2d", "weight");
  require_rank(bias, 1, "conv2d", "bias");
  if (x.dim(1) != weight.dim(1) || bias.dim(0) != weight.dim(0)) {
    throw ShapeError("conv2d: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()) + " and bias " + shape_string(bias.shape()));
  }
  const ConvGeometry g{x.dim(0),      x.dim(1),      x.dim(2), x.dim(3), weight.dim(0), weight.dim(2),
                       weight.dim(3), (weight.dim(2) - 1) / 2, (weight.dim(3) - 1) / 2};
  BasicTensor<T> out(Shape{g.n, g.f, g.h, g.w});
  const std::size_t in_image = g.c * g.area();
  const std::size_t out_image = g.f * g.area();

  ConstMapMat<T> wmat(weight.data().data(), static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(g.patch()));
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data().data(), static_cast<Eigen::Index>(g.f));
  const T* xdata = x.data().data();
  T* odata = out.data().data();
  parallel_chunks(g.n, intra_op_threads(), [&](std::size_t begin, std::size_t end, int) {
    Mat<T> cols(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.area()));
    for (std::size_t n = begin; n < end; ++n) {
      im2col(xdata + n * in_image, g, cols.data());
      MapMat<T> o(odata + n * out_image, static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(g.area()));
      o.noalias() = wmat * cols;
      o.colwise() += bvec;
    }
  });

  if (should_record(tape, {&x, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([x = x, weight = weight, bias = bias, out, g, in_image, out_image]() mutable {
      if (!out.has_grad()) return;
      const T* gy = out.grad().data();
      const bool need_x = x.requires_grad();
      const bool need_w = weight.requires_grad();
      const bool need_b = bias.requires_grad();
      const int workers = std::max(1, std::min<int>(intra_op_threads(), static_cast<int>(g.n)));
      std::vector<Mat<T>> dw(static_cast<std::size_t>(workers));
      std::vector<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(static_cast<std::size_t>(workers));
      ConstMapMat<T> wmat(weight.data().data(), static_cast<Eigen::Index>(g.f),
                          static_cast<Eigen::Index>(g.patch()));
      T* gx = need_x ? x.grad().data() : nullptr;
      const T* xdata = x.data().data();
      parallel_chunks(g.n, workers, [&](std::size_t begin, std::size_t end, int worker) {
        auto& dw_local = dw[static_cast<std::size_t>(worker)];
        auto& db_local = db[static_cast<std::size_t>(worker)];
        dw_local = Mat<T>::Zero(static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(g.patch()));
        db_local = Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(static_cast<Eigen::Index>(g.f));
        Mat<T> cols(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(g.area()));
        Mat<T> dcols;
        for (std::size_t n = begin; n < end; ++n) {
          ConstMapMat<T> go(gy + n * out_image, static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(g.area()));
          if (need_w) {
            im2col(xdata + n * in_image, g, cols.data());
            dw_local.noalias() += go * cols.transpose();
          }
          if (need_b) add_row_sums(go, db_local.data());
          if (need_x) {
            dcols.noalias() = wmat.transpose() * go;
            col2im_add(dcols.data(), g, gx + n * in_image);
          }
        }
      });
      if (need_w) {
        MapMat<T> gw(weight.grad().data(), static_cast<Eigen::Index>(g.f), static_cast<Eigen::Index>(g.patch()));
        for (const auto& part : dw) gw += part;
      }
      if (need_b) {
        auto gb = bias.grad();
        for (const auto& part : db) {
          for (std::size_t f = 0; f < g.f; ++f) gb[f] += part[static_cast<Eigen::Index>(f)];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> relu(Tape<T>* tape, const BasicTensor<T>& x) {
  BasicTensor<T> out(x.shape());
  auto xs = x.data();
  auto ys = out.data();
  for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = xs[i] > T(0) ? xs[i] : T(0);
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = x.grad();
      auto xs = x.data();
      for (std::size_t i = 0; i < gx.size(); ++i) {
        if (xs[i] > T(0)) gx[i] += gy[i];
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> batchnorm2d(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& gamma,
                           const BasicTensor<T>& beta, BatchNormStats<T>& stats, Mode mode,
                           const BatchNormOptions& options) {
  require_rank(x, 4, "batchnorm2d", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), area = x.dim(2) * x.dim(3);
  if (gamma.numel() != c || beta.numel() != c || stats.running_mean.numel() != c ||
      stats.running_var.numel() != c) {
    throw ShapeError("batchnorm2d: parameters sized " + std::to_string(gamma.numel()) + " for input " +
                     shape_string(x.shape()));
  }
  const std::size_t m = n * area;
  if (mode == Mode::kTrain && m <= 1) {
    throw ShapeError("batchnorm2d: train mode needs more than one value per channel, got " +
                     shape_string(x.shape()));
  }

  std::vector<T> mean(c), inv_std(c);
  auto xs = x.data();
  if (mode == Mode::kTrain) {
    auto rm = stats.running_mean.data();
    auto rv = stats.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      double sum = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) sum += static_cast<double>(p[i]);
      }
      const double mu = sum / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* p = xs.data() + (b * c + ch) * area;
        for (std::size_t i = 0; i < area; ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / static_cast<double>(m);
      mean[ch] = static_cast<T>(mu);
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(var + options.eps));
      rm[ch] = static_cast<T>(options.momentum * rm[ch] + (1.0 - options.momentum) * mu);
      rv[ch] = static_cast<T>(options.momentum * rv[ch] +
                              (1.0 - options.momentum) * sq / static_cast<double>(m - 1));
    }
  } else {
    auto rm = stats.running_mean.data();
    auto rv = stats.running_var.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
      mean[ch] = rm[ch];
      inv_std[ch] = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rv[ch]) + options.eps));
    }
  }

  BasicTensor<T> out(x.shape());
  BasicTensor<T> xhat(x.shape());
  auto ys = out.data();
  auto hs = xhat.data();
  auto gs = gamma.data();
  auto bs = beta.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const std::size_t off = (b * c + ch) * area;
      for (std::size_t i = 0; i < area; ++i) {
        const T h = (xs[off + i] - mean[ch]) * inv_std[ch];
        hs[off + i] = h;
        ys[off + i] = gs[ch] * h + bs[ch];
      }
    }
  }

  if (should_record(tape, {&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    tape->record([x = x, gamma = gamma, beta = beta, out, xhat, inv_std, n, c, area, m, mode]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto hs = xhat.data();
      auto gs = gamma.data();
      std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = (b * c + ch) * area;
          for (std::size_t i = 0; i < area; ++i) {
            sum_dy[ch] += static_cast<double>(gy[off + i]);
            sum_dy_xhat[ch] += static_cast<double>(gy[off + i]) * static_cast<double>(hs[off + i]);
          }
        }
      }
      if (gamma.requires_grad()) {
        auto gg = gamma.grad();
        for (std::size_t ch = 0; ch < c; ++ch) gg[ch] += static_cast<T>(sum_dy_xhat[ch]);
      }
      if (beta.requires_grad()) {
        auto gb = beta.grad();
        for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += static_cast<T>(sum_dy[ch]);
      }
      if (!x.requires_grad()) return;
      auto gx = x.grad();
      const double inv_m = 1.0 / static_cast<double>(m);
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          const std::size_t off = (b * c + ch) * area;
          const double scale = static_cast<double>(gs[ch]) * static_cast<double>(inv_std[ch]);
          if (mode == Mode::kTrain) {
            const double mean_dy = sum_dy[ch] * inv_m;
            const double mean_dy_xhat = sum_dy_xhat[ch] * inv_m;
            for (std::size_t i = 0; i < area; ++i) {
              gx[off + i] += static_cast<T>(
                  scale * (static_cast<double>(gy[off + i]) - mean_dy - static_cast<double>(hs[off + i]) * mean_dy_xhat));
            }
          } else {
            for (std::size_t i = 0; i < area; ++i) gx[off + i] += static_cast<T>(scale * static_cast<double>(gy[off + i]));
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> maxpool2x2(Tape<T>* tape, const BasicTensor<T>& x) {
  require_rank(x, 4, "maxpool2x2", "input");
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h < 2 || w < 2) throw ShapeError("maxpool2x2: spatial dims must be >= 2, got " + shape_string(x.shape()));
  const std::size_t oh = h / 2, ow = w / 2;
  BasicTensor<T> out(Shape{n, c, oh, ow});
  std::vector<std::size_t> argmax(out.numel());
  auto xs = x.data();
  auto ys = out.data();
  std::size_t o = 0;
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t y = 0; y < oh; ++y) {
      for (std::size_t xx = 0; xx < ow; ++xx, ++o) {
        const std::size_t candidates[4] = {base + (2 * y) * w + 2 * xx, base + (2 * y) * w + 2 * xx + 1,
                                           base + (2 * y + 1) * w + 2 * xx, base + (2 * y + 1) * w + 2 * xx + 1};
        std::size_t best = candidates[0];
        for (int k = 1; k < 4; ++k) {
          if (xs[candidates[k]] > xs[best]) best = candidates[k];
        }
        argmax[o] = best;
        ys[o] = xs[best];
      }
    }
  }
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out, argmax = std::move(argmax)]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[argmax[i]] += gy[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> lstm_sequence(Tape<T>* tape, const BasicTensor<T>& xs, const LstmWeights<T>& weights,
                             Direction direction) {
  require_rank(xs, 3, "lstm_sequence", "input");
  require_rank(weights.w_input, 2, "lstm_sequence", "w_input");
  require_rank(weights.w_recurrent, 2, "lstm_sequence", "w_recurrent");
  require_rank(weights.bias, 1, "lstm_sequence", "bias");
  const std::size_t steps = xs.dim(0), n = xs.dim(1), d = xs.dim(2);
  if (steps == 0) throw ShapeError("lstm_sequence: empty sequence");
  const std::size_t hid = weights.w_recurrent.dim(0);
  if (weights.w_input.dim(0) != d || weights.w_input.dim(1) != 4 * hid || weights.w_recurrent.dim(1) != 4 * hid ||
      weights.bias.dim(0) != 4 * hid) {
    throw ShapeError("lstm_sequence: input " + shape_string(xs.shape()) + " incompatible with w_input " +
                     shape_string(weights.w_input.shape()) + ", w_recurrent " +
                     shape_string(weights.w_recurrent.shape()) + ", bias " + shape_string(weights.bias.shape()));
  }
  const auto N = static_cast<Eigen::Index>(n);
  const auto H = static_cast<Eigen::Index>(hid);
  const auto G = 4 * H;
  const auto TN = static_cast<Eigen::Index>(steps * n);

  std::vector<std::size_t> order(steps);
  for (std::size_t s = 0; s < steps; ++s) order[s] = direction == Direction::kForward ? s : steps - 1 - s;

  ConstMapMat<T> x(xs.data().data(), TN, static_cast<Eigen::Index>(d));
  ConstMapMat<T> w_in(weights.w_input.data().data(), static_cast<Eigen::Index>(d), G);
  ConstMapMat<T> w_rec(weights.w_recurrent.data().data(), H, G);
  ConstMapRow<T> bias(weights.bias.data().data(), G);

  // gates holds activated [i | f | g | o] per (t, n) row.
  Mat<T> gates(TN, G);
  gates.noalias() = x * w_in;
  gates.rowwise() += bias;
  Mat<T> cell(TN, H), tanh_cell(TN, H);
  BasicTensor<T> out(Shape{steps, n, hid});
  MapMat<T> hs(out.data().data(), TN, H);

  Mat<T> h_prev = Mat<T>::Zero(N, H);
  Mat<T> c_prev = Mat<T>::Zero(N, H);
  for (std::size_t s = 0; s < steps; ++s) {
    const auto row = static_cast<Eigen::Index>(order[s] * n);
    auto z = gates.middleRows(row, N);
    z.noalias() += h_prev * w_rec;
    for (Eigen::Index r = 0; r < N; ++r) {
      for (Eigen::Index k = 0; k < H; ++k) {
        const T ig = sigmoid(z(r, k));
        const T fg = sigmoid(z(r, H + k));
        const T gg = std::tanh(z(r, 2 * H + k));
        const T og = sigmoid(z(r, 3 * H + k));
        z(r, k) = ig;
        z(r, H + k) = fg;
        z(r, 2 * H + k) = gg;
        z(r, 3 * H + k) = og;
        const T cv = fg * c_prev(r, k) + ig * gg;
        const T tc = std::tanh(cv);
        cell(row + r, k) = cv;
        tanh_cell(row + r, k) = tc;
        hs(row + r, k) = og * tc;
      }
    }
    h_prev = hs.middleRows(row, N);
    c_prev = cell.middleRows(row, N);
  }

  if (should_record(tape, {&xs, &weights.w_input, &weights.w_recurrent, &weights.bias})) {
    out.set_requires_grad(true);
    tape->record([xs = xs, weights = weights, out, order = std::move(order), gates = std::move(gates), cell = std::move(cell), tanh_cell = std::move(tanh_cell), N, H, G, TN, d]() mutable {
      if (!out.has_grad()) return;
      ConstMapMat<T> dys(out.grad().data(), TN, H);
      ConstMapMat<T> hs(out.data().data(), TN, H);
      ConstMapMat<T> w_rec(weights.w_recurrent.data().data(), H, G);
      ConstMapMat<T> w_in(weights.w_input.data().data(), static_cast<Eigen::Index>(d), G);
      Mat<T> dz(TN, G);
      Mat<T> dh_next = Mat<T>::Zero(N, H);
      Mat<T> dc_next = Mat<T>::Zero(N, H);
      Mat<T> dw_rec = Mat<T>::Zero(H, G);
      for (std::size_t s = order.size(); s-- > 0;) {
        const auto row = static_cast<Eigen::Index>(order[s]) * N;
        const bool has_prev = s > 0;
        const auto prev_row = has_prev ? static_cast<Eigen::Index>(order[s - 1]) * N : 0;
        for (Eigen::Index r = 0; r < N; ++r) {
          for (Eigen::Index k = 0; k < H; ++k) {
            const T ig = gates(row + r, k);
            const T fg = gates(row + r, H + k);
            const T gg = gates(row + r, 2 * H + k);
            const T og = gates(row + r, 3 * H + k);
            const T tc = tanh_cell(row + r, k);
            const T cp = has_prev ? cell(prev_row + r, k) : T(0);
            const T dh = dys(row + r, k) + dh_next(r, k);
            const T dc = dh * og * (T(1) - tc * tc) + dc_next(r, k);
            dz(row + r, k) = dc * gg * ig * (T(1) - ig);
            dz(row + r, H + k) = dc * cp * fg * (T(1) - fg);
            dz(row + r, 2 * H + k) = dc * ig * (T(1) - gg * gg);
            dz(row + r, 3 * H + k) = dh * tc * og * (T(1) - og);
            dc_next(r, k) = dc * fg;
          }
        }
        const auto dz_t = dz.middleRows(row, N);
        dh_next.noalias() = dz_t * w_rec.transpose();
        if (has_prev) dw_rec.noalias() += hs.middleRows(prev_row, N).transpose() * dz_t;
      }
      if (weights.w_recurrent.requires_grad()) {
        MapMat<T> g(weights.w_recurrent.grad().data(), H, G);
        g += dw_rec;
      }
      if (weights.w_input.requires_grad()) {
        ConstMapMat<T> x(xs.data().data(), TN, static_cast<Eigen::Index>(d));
        MapMat<T> g(weights.w_input.grad().data(), static_cast<Eigen::Index>(d), G);
        g.noalias() += x.transpose() * dz;
      }
      if (weights.bias.requires_grad()) {
        add_col_sums(dz, weights.bias.grad().data());
      }
      if (xs.requires_grad()) {
        MapMat<T> g(xs.grad().data(), TN, static_cast<Eigen::Index>(d));
        g.noalias() += dz * w_in.transpose();
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> dense(Tape<T>* tape, const BasicTensor<T>& x, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
  require_rank(x, 2, "dense", "input");
  require_rank(weight, 2, "dense", "weight");
  require_rank(bias, 1, "dense", "bias");
  if (x.dim(1) != weight.dim(0) || bias.dim(0) != weight.dim(1)) {
    throw ShapeError("dense: input " + shape_string(x.shape()) + " incompatible with weight " +
                     shape_string(weight.shape()) + " and bias " + shape_string(bias.shape()));
  }
  const auto N = static_cast<Eigen::Index>(x.dim(0));
  const auto D = static_cast<Eigen::Index>(x.dim(1));
  const auto K = static_cast<Eigen::Index>(weight.dim(1));
  BasicTensor<T> out(Shape{x.dim(0), weight.dim(1)});
  MapMat<T> y(out.data().data(), N, K);
  y.noalias() = ConstMapMat<T>(x.data().data(), N, D) * ConstMapMat<T>(weight.data().data(), D, K);
  y.rowwise() += ConstMapRow<T>(bias.data().data(), K);
  if (should_record(tape, {&x, &weight, &bias})) {
    out.set_requires_grad(true);
    tape->record([x = x, weight = weight, bias = bias, out, N, D, K]() mutable {
      if (!out.has_grad()) return;
      ConstMapMat<T> gy(out.grad().data(), N, K);
      if (x.requires_grad()) {
        MapMat<T>(x.grad().data(), N, D).noalias() += gy * ConstMapMat<T>(weight.data().data(), D, K).transpose();
      }
      if (weight.requires_grad()) {
        MapMat<T>(weight.grad().data(), D, K).noalias() += ConstMapMat<T>(x.data().data(), N, D).transpose() * gy;
      }
      if (bias.requires_grad()) add_col_sums(gy, bias.grad().data());
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& logits) {
  require_rank(logits, 2, "softmax", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  BasicTensor<T> out(logits.shape());
  auto in = logits.data();
  auto p = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = in.data() + r * k;
    const T mx = *std::max_element(row, row + k);
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j] - mx));
    for (std::size_t j = 0; j < k; ++j) p[r * k + j] = static_cast<T>(std::exp(static_cast<double>(row[j] - mx)) / z);
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax_cross_entropy(Tape<T>* tape, const BasicTensor<T>& logits, std::span<const int> labels) {
  require_rank(logits, 2, "softmax_cross_entropy", "logits");
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for " + std::to_string(n) +
                     " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw Error("softmax_cross_entropy: label " + std::to_string(label) + " outside [0, " + std::to_string(k) + ")");
    }
  }
  auto in = logits.data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const T* row = in.data() + r * k;
    const double mx = static_cast<double>(*std::max_element(row, row + k));
    double z = 0.0;
    for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    total += mx + std::log(z) - static_cast<double>(row[labels[r]]);
  }
  BasicTensor<T> loss(Shape{1}, std::vector<T>{static_cast<T>(total / static_cast<double>(n))});
  if (should_record(tape, {&logits})) {
    loss.set_requires_grad(true);
    std::vector<int> label_copy(labels.begin(), labels.end());
    tape->record([logits = logits, loss, label_copy = std::move(label_copy), n, k]() mutable {
      if (!loss.has_grad()) return;
      const double scale = static_cast<double>(loss.grad()[0]) / static_cast<double>(n);
      auto in = logits.data();
      auto gx = logits.grad();
      for (std::size_t r = 0; r < n; ++r) {
        const T* row = in.data() + r * k;
        const double mx = static_cast<double>(*std::max_element(row, row + k));
        double z = 0.0;
        for (std::size_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
        for (std::size_t j = 0; j < k; ++j) {
          const double p = std::exp(static_cast<double>(row[j]) - mx) / z;
          const double onehot = static_cast<int>(j) == label_copy[r] ? 1.0 : 0.0;
          gx[r * k + j] += static_cast<T>(scale * (p - onehot));
        }
      }
    });
  }
  return loss;
}

template <typename T>
BasicTensor<T> feature_sequence(Tape<T>* tape, const BasicTensor<T>& featmap) {
  require_rank(featmap, 4, "feature_sequence", "featmap");
  const std::size_t n = featmap.dim(0), c = featmap.dim(1), h = featmap.dim(2), w = featmap.dim(3);
  const std::size_t feat = c * h;
  BasicTensor<T> out(Shape{w, n, feat});
  auto in = featmap.data();
  auto ys = out.data();
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        const T* src = in.data() + ((b * c + ch) * h + y) * w;
        for (std::size_t t = 0; t < w; ++t) ys[(t * n + b) * feat + ch * h + y] = src[t];
      }
    }
  }
  if (should_record(tape, {&featmap})) {
    out.set_requires_grad(true);
    tape->record([featmap = featmap, out, n, c, h, w, feat]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = featmap.grad();
      for (std::size_t b = 0; b < n; ++b) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          for (std::size_t y = 0; y < h; ++y) {
            T* dst = gx.data() + ((b * c + ch) * h + y) * w;
            for (std::size_t t = 0; t < w; ++t) dst[t] += gy[(t * n + b) * feat + ch * h + y];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> time_step(Tape<T>* tape, const BasicTensor<T>& xs, std::size_t t) {
  require_rank(xs, 3, "time_step", "input");
  if (t >= xs.dim(0)) {
    throw ShapeError("time_step: step " + std::to_string(t) + " out of range for " + shape_string(xs.shape()));
  }
  const std::size_t block = xs.dim(1) * xs.dim(2);
  BasicTensor<T> out(Shape{xs.dim(1), xs.dim(2)});
  std::copy_n(xs.data().begin() + static_cast<std::ptrdiff_t>(t * block), block, out.data().begin());
  if (should_record(tape, {&xs})) {
    out.set_requires_grad(true);
    tape->record([xs = xs, out, t, block]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = xs.grad();
      for (std::size_t i = 0; i < block; ++i) gx[t * block + i] += gy[i];
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> time_mean(Tape<T>* tape, const BasicTensor<T>& xs) {
  require_rank(xs, 3, "time_mean", "input");
  const std::size_t steps = xs.dim(0);
  if (steps == 0) throw ShapeError("time_mean: empty sequence");
  const std::size_t block = xs.dim(1) * xs.dim(2);
  BasicTensor<T> out(Shape{xs.dim(1), xs.dim(2)});
  auto in = xs.data();
  auto ys = out.data();
  const T inv = T(1) / static_cast<T>(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    for (std::size_t i = 0; i < block; ++i) ys[i] += in[t * block + i];
  }
  for (auto& v : ys) v *= inv;
  if (should_record(tape, {&xs})) {
    out.set_requires_grad(true);
    tape->record([xs = xs, out, steps, block, inv]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = xs.grad();
      for (std::size_t t = 0; t < steps; ++t) {
        for (std::size_t i = 0; i < block; ++i) gx[t * block + i] += gy[i] * inv;
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> concat_features(Tape<T>* tape, const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_rank(a, 2, "concat_features", "a");
  require_rank(b, 2, "concat_features", "b");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_features: batch mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  const std::size_t n = a.dim(0), da = a.dim(1), db = b.dim(1);
  BasicTensor<T> out(Shape{n, da + db});
  auto ys = out.data();
  for (std::size_t r = 0; r < n; ++r) {
    std::copy_n(a.data().begin() + static_cast<std::ptrdiff_t>(r * da), da,
                ys.begin() + static_cast<std::ptrdiff_t>(r * (da + db)));
    std::copy_n(b.data().begin() + static_cast<std::ptrdiff_t>(r * db), db,
                ys.begin() + static_cast<std::ptrdiff_t>(r * (da + db) + da));
  }
  if (should_record(tape, {&a, &b})) {
    out.set_requires_grad(true);
    tape->record([a = a, b = b, out, n, da, db]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < da; ++j) ga[r * da + j] += gy[r * (da + db) + j];
        }
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t r = 0; r < n; ++r) {
          for (std::size_t j = 0; j < db; ++j) gb[r * db + j] += gy[r * (da + db) + da + j];
        }
      }
    });
  }
  return out;
}

template <typename T>
BasicTensor<T> flatten(Tape<T>* tape, const BasicTensor<T>& x) {
  if (!x.defined() || x.rank() < 2) throw ShapeError("flatten: input must have rank >= 2");
  const std::size_t n = x.dim(0);
  BasicTensor<T> out(Shape{n, x.numel() / n}, std::vector<T>(x.data().begin(), x.data().end()));
  if (should_record(tape, {&x})) {
    out.set_requires_grad(true);
    tape->record([x = x, out]() mutable {
      if (!out.has_grad()) return;
      auto gy = out.grad();
      auto gx = x.grad();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i];
    });
  }
  return out;
}

#define LID_INSTANTIATE_OPS(T)                                                                                    \
  template BasicTensor<T> conv2d(Tape<T>*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);  \
  template BasicTensor<T> relu(Tape<T>*, const BasicTensor<T>&);                                                  \
  template BasicTensor<T> batchnorm2d(Tape<T>*, const BasicTensor<T>&, const BasicTensor<T>&,                     \
                                      const BasicTensor<T>&, BatchNormStats<T>&, Mode, const BatchNormOptions&); \
  template BasicTensor<T> maxpool2x2(Tape<T>*, const BasicTensor<T>&);                                            \
  template BasicTensor<T> lstm_sequence(Tape<T>*, const BasicTensor<T>&, const LstmWeights<T>&, Direction);       \
  template BasicTensor<T> dense(Tape<T>*, const BasicTensor<T>&, const BasicTensor<T>&, const BasicTensor<T>&);   \
  template BasicTensor<T> softmax_cross_entropy(Tape<T>*, const BasicTensor<T>&, std::span<const int>);           \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                                         \
  template BasicTensor<T> feature_sequence(Tape<T>*, const BasicTensor<T>&);                                      \
  template BasicTensor<T> time_step(Tape<T>*, const BasicTensor<T>&, std::size_t);                                \
  template BasicTensor<T> time_mean(Tape<T>*, const BasicTensor<T>&);                                             \
  template BasicTensor<T> concat_features(Tape<T>*, const BasicTensor<T>&, const BasicTensor<T>&);                \
  template BasicTensor<T> flatten(Tape<T>*, const BasicTensor<T>&);

LID_INSTANTIATE_OPS(float)
LID_INSTANTIATE_OPS(double)

#undef LID_INSTANTIATE_OPS

}  // namespace lid
