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

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <random>

#include "gradient_cases.hpp"
#include "lid/error.hpp"
#include "lid/ops.hpp"

namespace lid {
namespace {

using testing::DTape;
using testing::DTensor;

class GradientCheck : public ::testing::TestWithParam<testing::GradOp> {};

TEST_P(GradientCheck, MatchesCentralDifferencesOverFiveSeeds) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = testing::run_grad_case(GetParam(), seed);
    EXPECT_GT(r.checked, 0u);
    EXPECT_LT(r.max_rel_error, 1e-4) << testing::grad_op_name(GetParam()) << " seed " << seed
                                     << " abs " << r.max_abs_error;
  }
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientCheck, ::testing::ValuesIn(testing::all_grad_ops()),
                         [](const auto& info) { return testing::grad_op_name(info.param); });

TEST(Conv2d, OneByOneUnitKernelIsIdentity) {
  std::mt19937_64 rng(3);
  auto x = testing::random_tensor({2, 1, 4, 5}, rng, -1, 1, false);
  DTensor w(Shape{1, 1, 1, 1}, std::vector<double>{1.0});
  DTensor b(Shape{1});
  auto y = conv2d<double>(nullptr, x, w, b);
  ASSERT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_EQ(y.data()[i], x.data()[i]);
}

TEST(Conv2d, AllOnesKernelCountsOverlap) {
  DTensor x(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
  DTensor w(Shape{1, 1, 3, 3}, std::vector<double>(9, 1.0));
  DTensor b(Shape{1});
  auto y = conv2d<double>(nullptr, x, w, b);
  EXPECT_EQ(y.data()[4], 9.0);
  EXPECT_EQ(y.data()[0], 4.0);
  EXPECT_EQ(y.data()[2], 4.0);
  EXPECT_EQ(y.data()[6], 4.0);
  EXPECT_EQ(y.data()[8], 4.0);
  EXPECT_EQ(y.data()[1], 6.0);
}

TEST(Conv2d, ShapeMismatchNamesBothShapes) {
  DTensor x(Shape{1, 2, 3, 3});
  DTensor w(Shape{1, 3, 3, 3});
  DTensor b(Shape{1});
  try {
    conv2d<double>(nullptr, x, w, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[1, 2, 3, 3]"), std::string::npos);
    EXPECT_NE(msg.find("[1, 3, 3, 3]"), std::string::npos);
  }
}

TEST(Conv2d, ThreadedMatchesSingleThreaded) {
  std::mt19937_64 rng(11);
  auto x = testing::random_tensor({5, 3, 6, 7}, rng);
  auto w = testing::random_tensor({4, 3, 3, 3}, rng);
  auto b = testing::random_tensor({4}, rng);
  auto run = [&](int threads) {
    set_intra_op_threads(threads);
    x.zero_grad();
    w.zero_grad();
    DTape tape;
    auto y = conv2d(&tape, x, w, b);
    std::vector<double> proj(y.numel(), 1.0);
    auto loss = testing::project(&tape, y, proj);
    tape.backward(loss);
    std::vector<double> out(y.data().begin(), y.data().end());
    out.insert(out.end(), x.grad().begin(), x.grad().end());
    out.insert(out.end(), w.grad().begin(), w.grad().end());
    return out;
  };
  const auto single = run(1);
  const auto threaded = run(3);
  set_intra_op_threads(1);
  ASSERT_EQ(single.size(), threaded.size());
  for (std::size_t i = 0; i < single.size(); ++i) EXPECT_NEAR(single[i], threaded[i], 1e-12);
}

TEST(Relu, ForwardAndSubgradient) {
  DTensor x(Shape{1, 4}, {-2.0, 3.0, -1.0, 2.0}, true);
  DTape tape;
  auto y = relu(&tape, x);
  EXPECT_EQ(y.data()[0], 0.0);
  EXPECT_EQ(y.data()[1], 3.0);
  auto loss = testing::project(&tape, y, {1, 1, 1, 1});
  tape.backward(loss);
  EXPECT_EQ(x.grad()[2], 0.0);
  EXPECT_EQ(x.grad()[3], 1.0);

  DTensor zero(Shape{1, 1}, {0.0}, true);
  DTape tape2;
  auto z = relu(&tape2, zero);
  auto l2 = testing::project(&tape2, z, {1.0});
  tape2.backward(l2);
  EXPECT_EQ(zero.grad()[0], 0.0);
}

TEST(BatchNorm2d, StandardizedInputPassesThrough) {
  // Per channel the four values {-a, -b, b, a} with a^2 + b^2 = 2 have mean 0
  // and biased variance 1.
  const double a = std::sqrt(1.5), b = std::sqrt(0.5);
  DTensor x(Shape{1, 2, 2, 2}, {-a, -b, b, a, a, -a, b, -b});
  DTensor gamma(Shape{2}, {1.0, 1.0});
  DTensor beta(Shape{2});
  BatchNormStats<double> stats(2);
  auto y = batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kTrain);
  for (std::size_t i = 0; i < x.numel(); ++i) EXPECT_NEAR(y.data()[i], x.data()[i], 1e-5);
}

TEST(BatchNorm2d, ConstantChannelMapsToBeta) {
  DTensor x(Shape{2, 1, 2, 2}, std::vector<double>(8, 3.7));
  DTensor gamma(Shape{1}, std::vector<double>{2.0});
  DTensor beta(Shape{1}, std::vector<double>{0.25});
  BatchNormStats<double> stats(1);
  auto y = batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kTrain);
  for (double v : y.data()) EXPECT_NEAR(v, 0.25, 1e-9);
}

TEST(BatchNorm2d, SingleValuePerChannelIsRejectedInTrainMode) {
  DTensor x(Shape{1, 2, 1, 1});
  DTensor gamma(Shape{2}, {1.0, 1.0});
  DTensor beta(Shape{2});
  BatchNormStats<double> stats(2);
  EXPECT_THROW(batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kTrain), ShapeError);
  EXPECT_NO_THROW(batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kInfer));
}

TEST(BatchNorm2d, RunningStatsFollowMomentumAndInferLeavesThemAlone) {
  DTensor x(Shape{1, 1, 1, 4}, {1.0, 2.0, 3.0, 4.0});
  DTensor gamma(Shape{1}, std::vector<double>{1.0});
  DTensor beta(Shape{1});
  BatchNormStats<double> stats(1);
  batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kTrain);
  EXPECT_NEAR(stats.running_mean.data()[0], 0.1 * 2.5, 1e-12);
  // Unbiased variance of {1, 2, 3, 4} is 5/3.
  EXPECT_NEAR(stats.running_var.data()[0], 0.9 + 0.1 * 5.0 / 3.0, 1e-12);
  const auto mean_before = stats.running_mean.data()[0];
  auto y = batchnorm2d<double>(nullptr, x, gamma, beta, stats, Mode::kInfer);
  EXPECT_EQ(stats.running_mean.data()[0], mean_before);
  EXPECT_NEAR(y.data()[0], (1.0 - 0.25) / std::sqrt(stats.running_var.data()[0] + 1e-5), 1e-12);
}

TEST(MaxPool2x2, PicksWindowMaximum) {
  DTensor x(Shape{1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  auto y = maxpool2x2<double>(nullptr, x);
  ASSERT_EQ(y.numel(), 1u);
  EXPECT_EQ(y.data()[0], 4.0);
}

TEST(MaxPool2x2, FloorsOddDimensions) {
  DTensor x(Shape{1, 1, 129, 500});
  auto y = maxpool2x2<double>(nullptr, x);
  EXPECT_EQ(y.dim(2), 64u);
  EXPECT_EQ(y.dim(3), 250u);
}

TEST(MaxPool2x2, TiesRouteGradientToFirstElement) {
  DTensor x(Shape{1, 1, 2, 2}, {5.0, 5.0, 5.0, 5.0}, true);
  DTape tape;
  auto y = maxpool2x2(&tape, x);
  auto loss = testing::project(&tape, y, {1.0});
  tape.backward(loss);
  EXPECT_EQ(x.grad()[0], 1.0);
  EXPECT_EQ(x.grad()[1], 0.0);
  EXPECT_EQ(x.grad()[2], 0.0);
  EXPECT_EQ(x.grad()[3], 0.0);
}

TEST(MaxPool2x2, RejectsTinyInputs) {
  DTensor x(Shape{1, 1, 1, 4});
  EXPECT_THROW(maxpool2x2<double>(nullptr, x), ShapeError);
}

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

TEST(LstmSequence, ZeroWeightsGiveZeroOutputs) {
  std::mt19937_64 rng(5);
  auto xs = testing::random_tensor({4, 2, 3}, rng);
  LstmWeights<double> w{DTensor(Shape{3, 8}), DTensor(Shape{2, 8}), DTensor(Shape{8})};
  for (auto dir : {Direction::kForward, Direction::kBackward}) {
    auto y = lstm_sequence<double>(nullptr, xs, w, dir);
    for (double v : y.data()) EXPECT_EQ(v, 0.0);
  }
}

TEST(LstmSequence, SingleStepMatchesHandComputedCell) {
  // D = 1, H = 1: gates are scalars.
  DTensor xs(Shape{1, 1, 1}, std::vector<double>{0.7});
  LstmWeights<double> w{DTensor(Shape{1, 4}, {0.5, -0.3, 0.8, 0.2}), DTensor(Shape{1, 4}, {0.1, 0.2, 0.3, 0.4}),
                        DTensor(Shape{4}, {0.05, 1.0, -0.1, 0.0})};
  const double i = sigmoid(0.7 * 0.5 + 0.05);
  const double f = sigmoid(0.7 * -0.3 + 1.0);
  const double g = std::tanh(0.7 * 0.8 - 0.1);
  const double o = sigmoid(0.7 * 0.2);
  const double c = f * 0.0 + i * g;
  const double h = o * std::tanh(c);
  for (auto dir : {Direction::kForward, Direction::kBackward}) {
    auto y = lstm_sequence<double>(nullptr, xs, w, dir);
    EXPECT_NEAR(y.data()[0], h, 1e-15);
  }
}

TEST(LstmSequence, BackwardDirectionIsForwardOverReversedTime) {
  std::mt19937_64 rng(9);
  auto xs = testing::random_tensor({5, 2, 3}, rng, -1, 1, false);
  LstmWeights<double> w{testing::random_tensor({3, 16}, rng, -1, 1, false),
                        testing::random_tensor({4, 16}, rng, -1, 1, false),
                        testing::random_tensor({16}, rng, -1, 1, false)};
  DTensor reversed(Shape{5, 2, 3});
  const std::size_t block = 6;
  for (std::size_t t = 0; t < 5; ++t) {
    std::copy_n(xs.data().begin() + (4 - t) * block, block, reversed.data().begin() + t * block);
  }
  auto bwd = lstm_sequence<double>(nullptr, xs, w, Direction::kBackward);
  auto fwd_rev = lstm_sequence<double>(nullptr, reversed, w, Direction::kForward);
  const std::size_t out_block = 8;
  for (std::size_t t = 0; t < 5; ++t) {
    for (std::size_t k = 0; k < out_block; ++k) {
      EXPECT_EQ(bwd.data()[t * out_block + k], fwd_rev.data()[(4 - t) * out_block + k]);
    }
  }
}

TEST(LstmSequence, EmptySequenceIsAnError) {
  DTensor xs(Shape{0, 1, 2});
  LstmWeights<double> w{DTensor(Shape{2, 4}), DTensor(Shape{1, 4}), DTensor(Shape{4})};
  EXPECT_THROW(lstm_sequence<double>(nullptr, xs, w, Direction::kForward), ShapeError);
}

TEST(Dense, IdentityAndZeroWeights) {
  DTensor x(Shape{2, 2}, {1.0, 2.0, 3.0, 4.0});
  DTensor eye(Shape{2, 2}, {1.0, 0.0, 0.0, 1.0});
  DTensor zero_bias(Shape{2});
  auto y = dense<double>(nullptr, x, eye, zero_bias);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(y.data()[i], x.data()[i]);

  DTensor zeros(Shape{2, 3});
  DTensor bias(Shape{3}, {0.5, -1.0, 2.0});
  auto z = dense<double>(nullptr, x, zeros, bias);
  for (std::size_t r = 0; r < 2; ++r) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(z.data()[r * 3 + k], bias.data()[k]);
  }
  EXPECT_THROW(dense<double>(nullptr, x, DTensor(Shape{3, 3}), bias), ShapeError);
}

TEST(SoftmaxCrossEntropy, UniformLogitsGiveLogK) {
  DTensor logits(Shape{3, 4});
  std::vector<int> labels = {0, 1, 3};
  auto loss = softmax_cross_entropy<double>(nullptr, logits, labels);
  EXPECT_NEAR(loss.item(), std::log(4.0), 1e-12);
}

TEST(SoftmaxCrossEntropy, LargeMarginDrivesLossToZero) {
  DTensor logits(Shape{1, 3}, {1000.0, 0.0, -5.0});
  std::vector<int> labels = {0};
  auto loss = softmax_cross_entropy<double>(nullptr, logits, labels);
  EXPECT_NEAR(loss.item(), 0.0, 1e-12);
  EXPECT_TRUE(std::isfinite(loss.item()));
}

TEST(SoftmaxCrossEntropy, GradientIsSoftmaxMinusOneHotOverN) {
  DTensor logits(Shape{2, 2}, {0.0, 0.0, 1.0, -1.0}, true);
  std::vector<int> labels = {0, 1};
  DTape tape;
  auto loss = softmax_cross_entropy(&tape, logits, labels);
  tape.backward(loss);
  EXPECT_NEAR(logits.grad()[0], (0.5 - 1.0) / 2.0, 1e-12);
  EXPECT_NEAR(logits.grad()[1], 0.5 / 2.0, 1e-12);
  const double p = 1.0 / (1.0 + std::exp(-2.0));
  EXPECT_NEAR(logits.grad()[2], p / 2.0, 1e-12);
  EXPECT_NEAR(logits.grad()[3], (1.0 - p - 1.0) / 2.0, 1e-12);
}

TEST(SoftmaxCrossEntropy, OutOfRangeLabelIsAnError) {
  DTensor logits(Shape{1, 3});
  std::vector<int> labels = {3};
  EXPECT_THROW(softmax_cross_entropy<double>(nullptr, logits, labels), Error);
  labels = {-1};
  EXPECT_THROW(softmax_cross_entropy<double>(nullptr, logits, labels), Error);
}

TEST(FeatureSequence, SlicesAlongWidthChannelMajor) {
  // N=1, C=2, H=2, W=3; only (c=1, h=0, w=2) is nonzero.
  DTensor fm(Shape{1, 2, 2, 3});
  fm.data()[((0 * 2 + 1) * 2 + 0) * 3 + 2] = 7.0;
  auto seq = feature_sequence<double>(nullptr, fm);
  ASSERT_EQ(seq.shape(), (Shape{3, 1, 4}));
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t k = 0; k < 4; ++k) {
      const double expected = (t == 2 && k == 1 * 2 + 0) ? 7.0 : 0.0;
      EXPECT_EQ(seq.data()[t * 4 + k], expected);
    }
  }
}

TEST(PlumbingOps, GradientsMatchFiniteDifferences) {
  std::mt19937_64 rng(21);
  auto fm = testing::random_tensor({2, 3, 2, 4}, rng);
  auto other = testing::random_tensor({2, 5}, rng);
  const auto proj = testing::random_weights(2 * (6 + 6 + 5 + 24), rng);
  auto r = testing::check_gradients(
      [&](DTape* tape) {
        auto seq = feature_sequence(tape, fm);
        auto first = time_step(tape, seq, 0);
        auto mean = time_mean(tape, seq);
        auto cat = concat_features(tape, concat_features(tape, first, mean), other);
        auto all = concat_features(tape, cat, flatten(tape, fm));
        return testing::project(tape, all, proj);
      },
      {fm, other});
  EXPECT_LT(r.max_rel_error, 1e-6);
}

// Two-layer network dense -> relu -> dense. Compares J v from reverse-mode
// rows against a central difference along v.
TEST(Composition, TwoLayerJacobianVectorProducts) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto x = testing::random_tensor({1, 6}, rng);
    auto w1 = testing::random_tensor({6, 5}, rng);
    auto b1 = testing::random_tensor({5}, rng, 0.1, 0.5);
    auto w2 = testing::random_tensor({5, 3}, rng);
    auto b2 = testing::random_tensor({3}, rng);
    auto net = [&](DTape* tape, const DTensor& in) {
      return dense(tape, relu(tape, dense(tape, in, w1, b1)), w2, b2);
    };
    const auto v = testing::random_weights(6, rng);

    // Rows of J via one backward per output.
    std::vector<double> jv(3, 0.0);
    for (std::size_t k = 0; k < 3; ++k) {
      x.zero_grad();
      DTape tape;
      auto y = net(&tape, x);
      std::vector<double> e(3, 0.0);
      e[k] = 1.0;
      auto s = testing::project(&tape, y, e);
      tape.backward(s);
      for (std::size_t i = 0; i < 6; ++i) jv[k] += x.grad()[i] * v[i];
    }

    const double h = 1e-3;
    DTensor up(Shape{1, 6}), down(Shape{1, 6});
    for (std::size_t i = 0; i < 6; ++i) {
      up.data()[i] = x.data()[i] + h * v[i];
      down.data()[i] = x.data()[i] - h * v[i];
    }
    auto yu = net(nullptr, up);
    auto yd = net(nullptr, down);
    for (std::size_t k = 0; k < 3; ++k) {
      const double numeric = (yu.data()[k] - yd.data()[k]) / (2 * h);
      EXPECT_LT(testing::relative_error(jv[k], numeric), 1e-4) << "seed " << seed << " output " << k;
    }
  }
}

TEST(Tape, BackwardRunsInReverseOrderAndClears) {
  DTape tape;
  std::vector<int> order;
  for (int i = 0; i < 4; ++i) tape.record([&order, i] { order.push_back(i); });
  DTensor loss(Shape{1}, {0.0}, true);
  tape.backward(loss);
  EXPECT_EQ(order, (std::vector<int>{3, 2, 1, 0}));
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Tape, ZeroGradThenBackwardIsIdempotent) {
  std::mt19937_64 rng(4);
  auto x = testing::random_tensor({2, 1, 4, 4}, rng);
  auto w = testing::random_tensor({2, 1, 3, 3}, rng);
  auto b = testing::random_tensor({2}, rng);
  auto once = [&] {
    x.zero_grad();
    w.zero_grad();
    b.zero_grad();
    DTape tape;
    auto y = maxpool2x2(&tape, relu(&tape, conv2d(&tape, x, w, b)));
    auto loss = testing::project(&tape, y, std::vector<double>(y.numel(), 0.5));
    tape.backward(loss);
    std::vector<double> g(w.grad().begin(), w.grad().end());
    g.insert(g.end(), x.grad().begin(), x.grad().end());
    return g;
  };
  EXPECT_EQ(once(), once());
}

TEST(Tape, NullTapeRecordsNothingAndOutputsDoNotRequireGrad) {
  std::mt19937_64 rng(4);
  auto x = testing::random_tensor({1, 3}, rng);
  auto w = testing::random_tensor({3, 2}, rng);
  auto b = testing::random_tensor({2}, rng);
  auto y = dense<double>(nullptr, x, w, b);
  EXPECT_FALSE(y.requires_grad());
}

}  // namespace
}  // namespace lid
