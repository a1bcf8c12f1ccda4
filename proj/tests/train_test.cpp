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
#include <cstring>
#include <limits>

#include "lid/audio_io.hpp"
#include "lid/checkpoint.hpp"
#include "lid/error.hpp"
#include "lid/synth.hpp"
#include "lid/train.hpp"
#include "temp_dir.hpp"

namespace lid {
namespace {

CrnnConfig tiny_config(int height, int width, std::vector<std::string> labels) {
  CrnnConfig c;
  c.conv_blocks = {{3, 4}, {3, 4}, {3, 8}};
  c.lstm_units = 8;
  c.input_height = height;
  c.input_width = width;
  c.num_classes = static_cast<int>(labels.size());
  c.labels = std::move(labels);
  c.seed = 21;
  return c;
}

// Constant bright vs constant dark images with a little jitter.
ImageDataset toy_images(std::size_t per_class, std::uint64_t seed) {
  ImageDataset d;
  d.label_names = {"bright", "dark"};
  std::uint64_t s = seed;
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int label = static_cast<int>(i % 2);
    Spectrogram img(16, 16);
    for (auto& p : img.pixels) {
      s = s * 6364136223846793005ULL + 1442695040888963407ULL;
      const int jitter = static_cast<int>((s >> 33) % 21) - 10;
      p = static_cast<std::uint8_t>((label == 0 ? 200 : 50) + jitter);
    }
    d.images.push_back(img);
    d.labels.push_back(label);
    d.sources.emplace_back("toy" + std::to_string(i));
  }
  return d;
}

std::vector<std::vector<float>> snapshot(const std::vector<Parameter*>& params) {
  std::vector<std::vector<float>> out;
  for (const auto* p : params) out.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  return out;
}

TrainConfig quick_config(int epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 4;
  c.patience = -1;
  return c;
}

TEST(Train, ToyTaskReachesPerfectValidationWithinThreeEpochs) {
  const auto tr = toy_images(24, 1);
  const auto va = toy_images(8, 2);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  const auto h = train(model, tr, va, quick_config(3));
  ASSERT_EQ(h.epochs.size(), 3u);
  EXPECT_DOUBLE_EQ(h.best_val_accuracy, 1.0);
  EXPECT_DOUBLE_EQ(evaluate(model, va).accuracy, 1.0);
}

TEST(Train, FirstEpochLowersLossOnSyntheticSpeech) {
  SyntheticLanguageSpec a;
  a.name = "low";
  a.formant_centers_hz = {400, 1200};
  a.transition_matrix = {{0.5, 0.5}, {0.5, 0.5}};
  SyntheticLanguageSpec b = a;
  b.name = "high";
  b.formant_centers_hz = {900, 2600};
  ImageDataset data;
  data.label_names = {"high", "low"};
  for (const auto& c : synth_corpus({a, b}, 16, 2.0, 7)) {
    data.images.push_back(render_spectrogram(c.clip));
    data.labels.push_back(label_index(data.label_names, c.label));
    data.sources.emplace_back(c.name);
  }
  // The same epoch with a zero learning rate measures the loss at
  // initialization over identical batches.
  auto frozen = quick_config(1);
  frozen.learning_rate = 0.0;
  CrnnModel still(tiny_config(129, 100, data.label_names));
  const double before = train(still, data, data, frozen).epochs[0].train_loss;
  CrnnModel model(tiny_config(129, 100, data.label_names));
  const double after = train(model, data, data, quick_config(1)).epochs[0].train_loss;
  EXPECT_LT(after, before);
}

TEST(Train, SameSeedGivesBitIdenticalResults) {
  const auto tr = toy_images(12, 1);
  const auto va = toy_images(4, 2);
  testing::TempDir dir("train");
  std::vector<std::vector<std::uint8_t>> ckpts;
  std::vector<std::string> histories;
  for (int run = 0; run < 2; ++run) {
    CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
    auto cfg = quick_config(2);
    cfg.checkpoint_dir = dir / ("run" + std::to_string(run));
    const auto h = train(model, tr, va, cfg);
    ckpts.push_back(read_file_bytes(*cfg.checkpoint_dir / "last.ckpt"));
    histories.push_back(history_to_json(h).dump());
    EXPECT_EQ(read_file_bytes(*cfg.checkpoint_dir / "history.json").size(), history_to_json(h).dump(2).size() + 1);
  }
  ASSERT_EQ(ckpts[0].size(), ckpts[1].size());
  EXPECT_EQ(std::mismatch(ckpts[0].begin(), ckpts[0].end(), ckpts[1].begin()).first - ckpts[0].begin(), static_cast<long>(ckpts[0].size()));
  EXPECT_EQ(histories[0], histories[1]);
}

TEST(Train, ZeroLearningRateLeavesParametersUnchanged) {
  const auto tr = toy_images(8, 1);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  const auto before = snapshot(model.parameters());
  auto cfg = quick_config(1);
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.0;
  fine_tune(model, tr, tr, cfg);
  EXPECT_EQ(snapshot(model.parameters()), before);
}

TEST(Train, FrozenConvIsBitIdentical) {
  const auto tr = toy_images(8, 1);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  const auto conv_before = snapshot(model.conv_parameters());
  const auto head_before = snapshot(model.head_parameters());
  std::vector<std::vector<float>> buffers_before;
  for (auto& [name, t] : model.buffers()) buffers_before.emplace_back(t->data().begin(), t->data().end());

  auto cfg = quick_config(2);
  cfg.optimizer = OptimizerKind::kSgd;
  cfg.learning_rate = 0.05;
  cfg.freeze_conv = true;
  fine_tune(model, tr, tr, cfg);

  EXPECT_EQ(snapshot(model.conv_parameters()), conv_before);
  std::vector<std::vector<float>> buffers_after;
  for (auto& [name, t] : model.buffers()) buffers_after.emplace_back(t->data().begin(), t->data().end());
  EXPECT_EQ(buffers_after, buffers_before);
  EXPECT_NE(snapshot(model.head_parameters()), head_before);
}

TEST(Train, FineTuneRequiresSgd) {
  const auto tr = toy_images(4, 1);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  EXPECT_THROW(fine_tune(model, tr, tr, quick_config(1)), ConfigError);
}

TEST(Train, NonFiniteLossAbortsWithDiagnostics) {
  const auto tr = toy_images(4, 1);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  model.head_parameters().back()->tensor.data()[0] = std::numeric_limits<float>::quiet_NaN();
  try {
    train(model, tr, tr, quick_config(1));
    FAIL();
  } catch (const NumericError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("epoch 1"), std::string::npos) << msg;
    EXPECT_NE(msg.find("batch 1"), std::string::npos) << msg;
  }
}

TEST(Train, LabelsOutsideModelAreRejected) {
  auto tr = toy_images(4, 1);
  tr.label_names = {"bright", "other"};
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  EXPECT_THROW(train(model, tr, tr, quick_config(1)), DataError);
  auto three = toy_images(4, 1);
  three.label_names.push_back("third");
  EXPECT_THROW(evaluate(model, three), DataError);
  ImageDataset empty;
  empty.label_names = {"bright", "dark"};
  EXPECT_THROW(evaluate(model, empty), DataError);
}

TEST(Train, ConfigValidation) {
  auto c = quick_config(0);
  EXPECT_THROW(c.validate(), ConfigError);
  c = quick_config(1);
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_EQ(parse_optimizer("sgd"), OptimizerKind::kSgd);
  EXPECT_THROW(parse_optimizer("rmsprop"), ConfigError);
}

TEST(Train, EarlyStoppingRestoresBestWeights) {
  const auto tr = toy_images(12, 1);
  const auto va = toy_images(4, 2);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  auto cfg = quick_config(10);
  cfg.patience = 1;
  std::vector<std::vector<std::uint8_t>> snapshots;
  train(model, tr, va, cfg);
  CrnnModel replay(tiny_config(16, 16, {"bright", "dark"}));
  const auto h = train(replay, tr, va, cfg);
  EXPECT_TRUE(h.stopped_early);
  EXPECT_EQ(h.epochs.size(), static_cast<std::size_t>(h.best_epoch + 1));
  EXPECT_EQ(evaluate(replay, va).accuracy, h.best_val_accuracy);
}

TEST(CompareArchitectures, SharedInitAndFullTestCoverage) {
  const auto tr = toy_images(12, 1);
  const auto va = toy_images(4, 2);
  const auto te = toy_images(5, 3);
  TrainConfig config = quick_config(1);
  config.learning_rate = 0.0;
  auto result = compare_architectures(tiny_config(16, 16, {"bright", "dark"}), tr, va, te, config);
  EXPECT_EQ(result.cnn.total, 10);
  EXPECT_EQ(result.crnn.total, 10);
  EXPECT_DOUBLE_EQ(result.accuracy_delta, result.crnn.accuracy - result.cnn.accuracy);
  ASSERT_TRUE(result.cnn_model && result.crnn_model);
  EXPECT_TRUE(result.cnn_model->config().head_only);
  EXPECT_FALSE(result.crnn_model->config().head_only);
  // With a zero learning rate both conv stacks still hold their initial values.
  auto cnn_conv = result.cnn_model->conv_parameters();
  auto crnn_conv = result.crnn_model->conv_parameters();
  EXPECT_EQ(snapshot(cnn_conv), snapshot(crnn_conv));
}

TEST(Evaluate, IsStateless) {
  const auto va = toy_images(6, 3);
  CrnnModel model(tiny_config(16, 16, {"bright", "dark"}));
  train(model, toy_images(6, 1), va, quick_config(1));
  const auto first = evaluate(model, va);
  const auto second = evaluate(model, va);
  EXPECT_EQ(report_to_json(first).dump(), report_to_json(second).dump());
  EXPECT_EQ(first.total, 12);
}

TEST(NoiseSweep, CleanRowEqualsEvaluate) {
  testing::TempDir dir("sweep");
  SyntheticLanguageSpec a;
  a.name = "low";
  a.formant_centers_hz = {400, 1200};
  a.transition_matrix = {{1.0}};
  SyntheticLanguageSpec b = a;
  b.name = "high";
  b.formant_centers_hz = {900, 2600};
  Manifest wavs;
  for (const auto& c : synth_corpus({a, b}, 3, 4.0, 5)) {
    const auto path = dir / (c.name + ".wav");
    write_wav(c.clip, path);
    wavs.push_back({path, c.label});
  }
  RenderOptions render;
  render.segment_seconds = 2.0;
  PrepareOptions prep;
  prep.render = render;
  const auto report = prepare_spectrograms(wavs, dir / "png", prep);
  ASSERT_EQ(report.outputs.size(), 12u);
  const auto images = load_images(report.outputs, {"high", "low"}, {129, 100});

  CrnnModel model(tiny_config(129, 100, {"high", "low"}));
  const auto rows = noise_sweep(model, wavs, default_noise_conditions(), render);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_EQ(rows[0].name, "No Noise");
  EXPECT_EQ(rows[1].name, "White Noise");
  EXPECT_EQ(rows[2].name, "Crackling Noise");
  EXPECT_EQ(rows[3].name, "Background Music");
  EXPECT_EQ(report_to_json(rows[0].report).dump(), report_to_json(evaluate(model, images)).dump());
  for (const auto& r : rows) {
    EXPECT_EQ(r.report.total, 12);
    EXPECT_GE(r.report.accuracy, 0.0);
    EXPECT_LE(r.report.accuracy, 1.0);
  }
  const auto table = format_noise_table(rows);
  EXPECT_NE(table.find("Crackling Noise"), std::string::npos);
  EXPECT_EQ(noise_table_to_json(rows).size(), 4u);
}

}  // namespace
}  // namespace lid
