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

#include <cstring>
#include <random>

#include "lid/crnn.hpp"
#include "lid/error.hpp"

namespace lid {
namespace {

Tensor random_images(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  Tensor x(Shape{n, 1, h, w});
  for (auto& v : x.data()) v = dist(rng);
  return x;
}

CrnnConfig desk_config(int width = 100) {
  CrnnConfig c;
  c.input_width = width;
  c.seed = 7;
  return c;
}

std::vector<float> snapshot(const Parameter& p) { return {p.tensor.data().begin(), p.tensor.data().end()}; }

TEST(CrnnShapes, FeatureMapTraceForFullInput) {
  CrnnConfig c;
  const auto fm = feature_map_shape(c);
  EXPECT_EQ(fm.channels, 256u);
  EXPECT_EQ(fm.height, 4u);
  EXPECT_EQ(fm.width, 15u);
  EXPECT_EQ(fm.steps(), 15u);
  EXPECT_EQ(fm.step_dim(), 1024u);
}

TEST(CrnnShapes, StepsForDeskWidths) {
  for (auto [w, t] : std::vector<std::pair<int, std::size_t>>{{100, 3}, {250, 7}, {500, 15}}) {
    CrnnConfig c;
    c.input_width = w;
    std::size_t expected = static_cast<std::size_t>(w);
    for (int i = 0; i < 5; ++i) expected /= 2;
    EXPECT_EQ(feature_map_shape(c).steps(), expected);
    EXPECT_EQ(feature_map_shape(c).steps(), t);
  }
}

TEST(CrnnShapes, ForwardProducesExpectedIntermediates) {
  auto model = build_crnn(CrnnConfig{});
  auto x = random_images(2, 129, 500, 1);
  auto fm = model.conv_features(nullptr, x);
  EXPECT_EQ(fm.shape(), (Shape{2, 256, 4, 15}));
  auto seq = feature_sequence<float>(nullptr, fm);
  EXPECT_EQ(seq.shape(), (Shape{15, 2, 1024}));
  auto fused = model.fused_features(nullptr, x);
  EXPECT_EQ(fused.shape(), (Shape{2, 512}));
  auto logits = model.forward(nullptr, x);
  EXPECT_EQ(logits.shape(), (Shape{2, 4}));
}

TEST(CrnnShapes, InputThatPoolsToNothingIsAConfigError) {
  CrnnConfig c;
  c.input_height = 20;
  EXPECT_THROW(c.validate(), ConfigError);
  c = CrnnConfig{};
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(CrnnParams, Counts) {
  auto crnn = build_crnn(CrnnConfig{});
  const auto params = crnn.parameters();
  ASSERT_EQ(params[0]->name, "conv1.weight");
  EXPECT_EQ(params[0]->tensor.numel() + params[1]->tensor.numel(), 800u);

  CrnnConfig six;
  six.num_classes = 6;
  auto m6 = build_crnn(six);
  std::size_t head = 0;
  for (auto* p : m6.head_parameters()) head += p->tensor.numel();
  EXPECT_EQ(head, 3078u);

  CrnnConfig base_cfg;
  auto cnn = build_cnn_baseline(base_cfg);
  EXPECT_EQ(cnn.head_parameters()[0]->tensor.shape(), (Shape{15360, 4}));
  EXPECT_EQ(cnn.conv_parameter_count(), crnn.conv_parameter_count());
  auto x = random_images(1, 129, 500, 2);
  EXPECT_EQ(cnn.fused_features(nullptr, x).shape(), (Shape{1, 15360}));
  EXPECT_EQ(cnn.forward(nullptr, x).shape(), (Shape{1, 4}));
}

TEST(CrnnParams, BaselineSharesConvInitialization) {
  auto crnn = build_crnn(desk_config());
  auto cnn = build_cnn_baseline(desk_config());
  auto a = crnn.conv_parameters();
  auto b = cnn.conv_parameters();
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i]->name, b[i]->name);
    EXPECT_EQ(snapshot(*a[i]), snapshot(*b[i]));
  }
}

TEST(CrnnParams, ConfigJsonRoundTripAndUnknownKeys) {
  CrnnConfig c = desk_config(250);
  c.labels = {"a", "b", "c", "d"};
  c.block_order = BlockOrder::kNormThenRelu;
  c.fusion = Fusion::kMean;
  nlohmann::json j = c;
  EXPECT_EQ(j.get<CrnnConfig>(), c);
  j["dropout"] = 0.5;
  EXPECT_THROW(j.get<CrnnConfig>(), ConfigError);
}

TEST(CrnnForward, ZeroInputPropagatesBeta) {
  CrnnConfig c = desk_config();
  c.conv_blocks = {{3, 4}};
  auto model = build_crnn(c);
  for (auto* p : model.parameters()) {
    if (p->name == "bn1.beta") std::fill(p->tensor.data().begin(), p->tensor.data().end(), 0.5f);
  }
  Tensor zero(Shape{1, 1, 129, 100});
  auto fm = model.conv_features(nullptr, zero);
  for (float v : fm.data()) EXPECT_NEAR(v, 0.5f, 1e-6f);

  auto full = build_crnn(desk_config());
  auto fm_full = full.conv_features(nullptr, zero);
  for (float v : fm_full.data()) EXPECT_EQ(v, 0.0f);
}

TEST(CrnnForward, SliceLocality) {
  Tensor fm(Shape{1, 256, 4, 15});
  fm.data()[7] = 1.0f;  // channel 0, height 0, width 7
  auto seq = feature_sequence<float>(nullptr, fm);
  for (std::size_t t = 0; t < 15; ++t) {
    float sum = 0;
    for (std::size_t k = 0; k < 1024; ++k) sum += std::abs(seq.data()[t * 1024 + k]);
    EXPECT_EQ(sum != 0.0f, t == 7) << t;
  }
}

TEST(CrnnForward, ShiftByThirtyTwoColumnsShiftsOneStep) {
  auto model = build_crnn(desk_config(500));
  Tensor a(Shape{1, 1, 129, 500});
  Tensor b(Shape{1, 1, 129, 500});
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (std::size_t r = 0; r < 129; ++r) {
    const float v = dist(rng);
    a.data()[r * 500 + 224] = v;
    b.data()[r * 500 + 256] = v;
  }
  auto fa = model.conv_features(nullptr, a);
  auto fb = model.conv_features(nullptr, b);
  const auto seq_a = feature_sequence<float>(nullptr, fa);
  const auto seq_b = feature_sequence<float>(nullptr, fb);
  const std::size_t dim = 1024;
  // Column 224 lands in step 7, column 256 in step 8.
  float max_diff = 0;
  for (std::size_t t = 2; t + 3 < 15; ++t) {
    for (std::size_t k = 0; k < dim; ++k) {
      max_diff = std::max(max_diff, std::abs(seq_a.data()[t * dim + k] - seq_b.data()[(t + 1) * dim + k]));
    }
  }
  EXPECT_LT(max_diff, 1e-5f);

  // The step that actually sees the column carries the strongest response.
  auto step_energy = [&](const Tensor& s, std::size_t t) {
    double e = 0;
    for (std::size_t k = 0; k < dim; ++k) e += std::abs(s.data()[t * dim + k]);
    return e;
  };
  std::size_t best_a = 0, best_b = 0;
  for (std::size_t t = 0; t < 15; ++t) {
    if (step_energy(seq_a, t) > step_energy(seq_a, best_a)) best_a = t;
    if (step_energy(seq_b, t) > step_energy(seq_b, best_b)) best_b = t;
  }
  EXPECT_EQ(best_b, best_a + 1);
}

TEST(CrnnForward, BatchEquivarianceInInferMode) {
  auto model = build_crnn(desk_config());
  auto x = random_images(3, 129, 100, 4);
  const std::size_t img = 129 * 100;
  Tensor permuted(x.shape());
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i) {
    std::copy_n(x.data().begin() + order[i] * img, img, permuted.data().begin() + i * img);
  }
  auto la = model.forward(nullptr, x);
  auto lb = model.forward(nullptr, permuted);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(lb.data()[i * 4 + k], la.data()[order[i] * 4 + k], 1e-5f);
  }
}

TEST(CrnnForward, DeterministicAndInferDoesNotTouchRunningStats) {
  auto model = build_crnn(desk_config());
  auto x = random_images(2, 129, 100, 5);
  auto before = model.buffers();
  std::vector<float> stats;
  for (auto& [name, t] : before) stats.insert(stats.end(), t->data().begin(), t->data().end());
  auto a = model.forward(nullptr, x);
  auto b = model.forward(nullptr, x);
  EXPECT_TRUE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
  std::vector<float> after;
  for (auto& [name, t] : model.buffers()) after.insert(after.end(), t->data().begin(), t->data().end());
  EXPECT_EQ(stats, after);
}

TEST(CrnnBackward, EveryParameterReceivesGradient) {
  for (bool head_only : {false, true}) {
    CrnnConfig c = desk_config();
    c.head_only = head_only;
    CrnnModel model(c);
    auto x = random_images(2, 129, 100, 6);
    Tape<float> tape;
    auto logits = model.forward(&tape, x, {Mode::kTrain, false});
    std::vector<int> labels = {0, 3};
    auto loss = softmax_cross_entropy(&tape, logits, labels);
    tape.backward(loss);
    for (auto* p : model.parameters()) {
      ASSERT_TRUE(p->tensor.has_grad()) << p->name;
      const auto g = std::as_const(p->tensor).grad();
      EXPECT_TRUE(std::any_of(g.begin(), g.end(), [](float v) { return v != 0.0f; })) << p->name;
    }
  }
}

TEST(CrnnBackward, FrozenConvLeavesConvUntouched) {
  auto model = build_crnn(desk_config());
  auto x = random_images(2, 129, 100, 6);
  Tape<float> tape;
  auto logits = model.forward(&tape, x, {Mode::kTrain, true});
  std::vector<int> labels = {1, 2};
  auto loss = softmax_cross_entropy(&tape, logits, labels);
  tape.backward(loss);
  for (auto* p : model.conv_parameters()) EXPECT_FALSE(p->tensor.has_grad()) << p->name;
  for (auto* p : model.head_parameters()) EXPECT_TRUE(p->tensor.has_grad()) << p->name;
}

TEST(CrnnModelCopy, CopiesAreIndependent) {
  CrnnModel a = build_crnn(desk_config());
  CrnnModel b = a;
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_FALSE(same_storage(pa[i]->tensor, pb[i]->tensor)) << pa[i]->name;
    EXPECT_TRUE(pb[i]->tensor.requires_grad());
    EXPECT_TRUE(std::equal(pa[i]->tensor.data().begin(), pa[i]->tensor.data().end(), pb[i]->tensor.data().begin()));
  }
  const auto ba = a.buffers();
  const auto bb = b.buffers();
  for (std::size_t i = 0; i < ba.size(); ++i) EXPECT_FALSE(same_storage(*ba[i].second, *bb[i].second));

  b.parameters()[0]->tensor.data()[0] += 1.0f;
  b.buffers()[0].second->data()[0] += 1.0f;
  EXPECT_NE(a.parameters()[0]->tensor.data()[0], b.parameters()[0]->tensor.data()[0]);
  EXPECT_NE(a.buffers()[0].second->data()[0], b.buffers()[0].second->data()[0]);

  CrnnModel c = build_crnn(desk_config());
  c = a;
  EXPECT_FALSE(same_storage(c.parameters()[0]->tensor, a.parameters()[0]->tensor));
}

TEST(ExtendHead, KeepsBodyAndWidensHead) {
  CrnnConfig c = desk_config(500);
  c.labels = {"a", "b", "c", "d"};
  auto model = build_crnn(c);
  std::vector<std::vector<float>> body;
  for (auto* p : model.parameters()) {
    if (p->name.rfind("head.", 0) != 0) body.push_back(snapshot(*p));
  }
  const auto conv1 = snapshot(*model.parameters()[0]);
  model.extend_head(6, 99, {"e", "f"});
  EXPECT_EQ(model.config().num_classes, 6);
  EXPECT_EQ(model.config().labels, (std::vector<std::string>{"a", "b", "c", "d", "e", "f"}));
  const auto conv1_after = snapshot(*model.parameters()[0]);
  EXPECT_EQ(std::memcmp(conv1.data(), conv1_after.data(), conv1.size() * sizeof(float)), 0);
  std::size_t i = 0;
  for (auto* p : model.parameters()) {
    if (p->name.rfind("head.", 0) != 0) EXPECT_EQ(snapshot(*p), body[i++]) << p->name;
  }
  EXPECT_EQ(model.head_parameters()[0]->tensor.shape(), (Shape{512, 6}));
  for (auto* p : model.head_parameters()) {
    for (float m : p->m) EXPECT_EQ(m, 0.0f);
  }
  auto logits = model.forward(nullptr, random_images(1, 129, 500, 8));
  EXPECT_EQ(logits.shape(), (Shape{1, 6}));
  EXPECT_THROW(model.extend_head(6, 1), ConfigError);
}

}  // namespace
}  // namespace lid
