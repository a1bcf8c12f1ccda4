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
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lid/crnn.hpp"
#include "lid/dataset.hpp"
#include "lid/metrics.hpp"
#include "lid/optim.hpp"

namespace lid {

enum class OptimizerKind { kAdam, kSgd };

std::string_view to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(std::string_view name);

struct TrainConfig {
  int epochs = 20;
  std::size_t batch_size = 16;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  double momentum = 0.9;  // SGD only
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;
  // Stop after this many epochs without a new best validation accuracy.
  // Negative disables early stopping.
  int patience = 5;
  // Keep the conv stack (weights and BatchNorm statistics) fixed.
  bool freeze_conv = false;
  // Intra-op worker threads; results are bit-reproducible only with 1.
  int threads = 1;
  // When set, best.ckpt, last.ckpt and history.json are written here.
  std::optional<std::filesystem::path> checkpoint_dir;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool improved = false;
};

struct TrainHistory {
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool stopped_early = false;
  std::int64_t optimizer_steps = 0;
};

nlohmann::json history_to_json(const TrainHistory& history);

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch training with softmax cross-entropy. After each epoch the
// validation set is scored in inference mode; the model is left holding the
// parameters of the best validation epoch. The optimizer step counter starts
// at start_step (for resuming Adam bias correction).
TrainHistory train(CrnnModel& model, const ImageDataset& train_data, const ImageDataset& val_data,
                   const TrainConfig& config, const EpochCallback& on_epoch = {}, std::int64_t start_step = 0);

// train() with an SGD optimizer; throws ConfigError for any other optimizer.
TrainHistory fine_tune(CrnnModel& model, const ImageDataset& train_data, const ImageDataset& val_data,
                       const TrainConfig& config, const EpochCallback& on_epoch = {});

struct Predictions {
  std::vector<int> predicted;
  std::vector<std::vector<float>> probabilities;
  double mean_loss = 0.0;
};

// Inference-mode forward over a dataset in order.
Predictions predict(CrnnModel& model, const ImageDataset& data, std::size_t batch_size = 32);

EvalReport evaluate(CrnnModel& model, const ImageDataset& data, std::size_t batch_size = 32);

struct ArchitectureComparison {
  EvalReport cnn;
  EvalReport crnn;
  TrainHistory cnn_history;
  TrainHistory crnn_history;
  // CRNN accuracy minus CNN accuracy.
  double accuracy_delta = 0.0;
  // The trained models, restored to their best validation epochs.
  std::optional<CrnnModel> cnn_model;
  std::optional<CrnnModel> crnn_model;
};

// Trains the CNN baseline and the CRNN from the same config and seed on the
// same data order, then scores both on the test set.
ArchitectureComparison compare_architectures(const CrnnConfig& model_config, const ImageDataset& train_data,
                                             const ImageDataset& val_data, const ImageDataset& test_data,
                                             const TrainConfig& config);

struct NoiseCondition {
  std::string name;
  std::optional<NoiseSpec> noise;  // empty for the clean row
};

// The four conditions of the standard sweep: clean, white, crackle, music.
std::vector<NoiseCondition> default_noise_conditions(double white_snr_db = 10.0, double crackle_snr_db = 10.0,
                                                     double crackle_rate_hz = 2.0, double music_snr_db = 6.0,
                                                     std::uint64_t seed = 0);

struct NoiseRow {
  std::string name;
  EvalReport report;
};

// Renders every source under each condition and evaluates. Source i gets noise
// seed `seed + 1000 * i`; music conditions fall back to synth_music when
// render.music is null.
std::vector<NoiseRow> noise_sweep(CrnnModel& model, const Manifest& wav_manifest,
                                  const std::vector<NoiseCondition>& conditions, const RenderOptions& render,
                                  std::size_t batch_size = 32);

nlohmann::json noise_table_to_json(const std::vector<NoiseRow>& rows);
std::string format_noise_table(const std::vector<NoiseRow>& rows);

}  // namespace lid
