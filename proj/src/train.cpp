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

#include "lid/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lid/checkpoint.hpp"
#include "lid/error.hpp"

namespace lid {
namespace {

constexpr double kGeneratedMusicSeconds = 30.0;

std::vector<std::string> model_labels(const CrnnModel& model) {
  std::vector<std::string> labels;
  for (int i = 0; i < model.config().num_classes; ++i) labels.push_back(model.config().label(i));
  return labels;
}

void check_labels(const CrnnModel& model, const ImageDataset& data, const char* which) {
  if (data.label_names != model_labels(model)) {
    std::string have, want;
    for (const auto& l : data.label_names) have += (have.empty() ? "" : ", ") + l;
    for (const auto& l : model_labels(model)) want += (want.empty() ? "" : ", ") + l;
    throw DataError(std::string(which) + " classes {" + have + "} do not match the model's classes {" + want + "}");
  }
}

int argmax_row(std::span<const float> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

}  // namespace

std::string_view to_string(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "sgd") return OptimizerKind::kSgd;
  throw ConfigError("unknown optimizer '" + std::string(name) + "' (expected adam or sgd)");
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train: momentum must lie in [0, 1)");
  if (threads < 1) throw ConfigError("train: threads must be >= 1");
}

nlohmann::json history_to_json(const TrainHistory& h) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const auto& e : h.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"train_accuracy", e.train_accuracy},
                      {"val_loss", e.val_loss},
                      {"val_accuracy", e.val_accuracy},
                      {"improved", e.improved}});
  }
  return {{"epochs", epochs},
          {"best_epoch", h.best_epoch},
          {"best_val_accuracy", h.best_val_accuracy},
          {"stopped_early", h.stopped_early},
          {"optimizer_steps", h.optimizer_steps}};
}

TrainHistory train(CrnnModel& model, const ImageDataset& train_data, const ImageDataset& val_data,
                   const TrainConfig& config, const EpochCallback& on_epoch, std::int64_t start_step) {
  config.validate();
  if (train_data.size() == 0) throw DataError("train: training set is empty");
  if (val_data.size() == 0) throw DataError("train: validation set is empty");
  check_labels(model, train_data, "training");
  check_labels(model, val_data, "validation");
  set_intra_op_threads(config.threads);

  std::vector<Parameter*> params;
  if (config.freeze_conv) {
    const auto conv = model.conv_parameters();
    for (auto* p : model.parameters()) {
      if (std::find(conv.begin(), conv.end(), p) == conv.end()) params.push_back(p);
    }
  } else {
    params = model.parameters();
  }
  if (config.optimizer == OptimizerKind::kSgd || start_step == 0) {
    for (auto* p : params) p->reset_moments();
  }
  const AdamConfig adam{config.learning_rate, config.beta1, config.beta2, config.adam_eps};
  const SgdConfig sgd{config.learning_rate, config.momentum};
  const ForwardOptions train_mode{Mode::kTrain, config.freeze_conv};

  TrainHistory history;
  std::int64_t step = start_step;
  std::vector<std::uint8_t> best = serialize_checkpoint(model, step);
  double best_val = -1.0;

  BatchIterator batches(train_data, config.batch_size, config.seed);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    batches.start_epoch(static_cast<std::uint64_t>(epoch - 1));
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t seen = 0;
    std::size_t batch_no = 0;
    Batch batch;
    while (batches.next(batch)) {
      ++batch_no;
      zero_grad<float>(params);
      Tape<float> tape;
      Tensor logits = model.forward(&tape, batch.images, train_mode);
      Tensor loss = softmax_cross_entropy(&tape, logits, batch.labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        throw NumericError("train: non-finite loss " + std::to_string(value) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_no));
      }
      tape.backward(loss);
      ++step;
      if (config.optimizer == OptimizerKind::kAdam) {
        adam_step<float>(params, adam, step);
      } else {
        sgd_step<float>(params, sgd);
      }
      const std::size_t k = logits.dim(1);
      for (std::size_t i = 0; i < batch.labels.size(); ++i) {
        correct += argmax_row(std::span<const float>(logits.data().data() + i * k, k)) == batch.labels[i];
      }
      loss_sum += value * static_cast<double>(batch.labels.size());
      seen += batch.labels.size();
    }

    const Predictions val = predict(model, val_data, std::max<std::size_t>(config.batch_size, 32));
    std::size_t val_correct = 0;
    for (std::size_t i = 0; i < val.predicted.size(); ++i) val_correct += val.predicted[i] == val_data.labels[i];

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(seen);
    rec.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    rec.val_loss = val.mean_loss;
    rec.val_accuracy = static_cast<double>(val_correct) / static_cast<double>(val_data.size());
    rec.improved = rec.val_accuracy > best_val;
    if (rec.improved) {
      best_val = rec.val_accuracy;
      history.best_epoch = epoch;
      history.best_val_accuracy = best_val;
      best = serialize_checkpoint(model, step);
    }
    history.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (config.patience >= 0 && !rec.improved && epoch - history.best_epoch >= config.patience) {
      history.stopped_early = epoch < config.epochs;
      break;
    }
  }
  history.optimizer_steps = step;

  if (config.checkpoint_dir) {
    std::filesystem::create_directories(*config.checkpoint_dir);
    save_checkpoint(model, *config.checkpoint_dir / "last.ckpt", step);
    std::ofstream out(*config.checkpoint_dir / "best.ckpt", std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(best.data()), static_cast<std::streamsize>(best.size()));
    if (!out) throw IoError("cannot write " + (*config.checkpoint_dir / "best.ckpt").string());
    write_text(*config.checkpoint_dir / "history.json", history_to_json(history).dump(2) + "\n");
  }
  model = std::move(deserialize_checkpoint(best).model);
  return history;
}

TrainHistory fine_tune(CrnnModel& model, const ImageDataset& train_data, const ImageDataset& val_data,
                       const TrainConfig& config, const EpochCallback& on_epoch) {
  if (config.optimizer != OptimizerKind::kSgd) throw ConfigError("fine_tune: optimizer must be sgd");
  return train(model, train_data, val_data, config, on_epoch);
}

Predictions predict(CrnnModel& model, const ImageDataset& data, std::size_t batch_size) {
  Predictions out;
  if (data.size() == 0) return out;
  BatchIterator batches(data, batch_size, std::nullopt);
  Batch batch;
  double loss_sum = 0.0;
  while (batches.next(batch)) {
    Tensor logits = model.forward(nullptr, batch.images, {Mode::kInfer, false});
    const std::size_t k = logits.dim(1);
    Tensor probs = softmax(logits);
    for (std::size_t i = 0; i < batch.labels.size(); ++i) {
      std::span<const float> row(probs.data().data() + i * k, k);
      out.predicted.push_back(argmax_row(std::span<const float>(logits.data().data() + i * k, k)));
      out.probabilities.emplace_back(row.begin(), row.end());
    }
    bool labels_in_range = true;
    for (int l : batch.labels) labels_in_range = labels_in_range && l >= 0 && static_cast<std::size_t>(l) < k;
    if (labels_in_range) {
      loss_sum += softmax_cross_entropy<float>(nullptr, logits, batch.labels).item() *
                  static_cast<double>(batch.labels.size());
    }
  }
  out.mean_loss = loss_sum / static_cast<double>(data.size());
  return out;
}

EvalReport evaluate(CrnnModel& model, const ImageDataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw DataError("evaluate: dataset is empty");
  check_labels(model, data, "evaluation");
  const Predictions p = predict(model, data, batch_size);
  return report_from_predictions(data.label_names, data.labels, p.predicted);
}

ArchitectureComparison compare_architectures(const CrnnConfig& model_config, const ImageDataset& train_data,
                                             const ImageDataset& val_data, const ImageDataset& test_data,
                                             const TrainConfig& config) {
  ArchitectureComparison out;
  CrnnModel cnn = build_cnn_baseline(model_config);
  out.cnn_history = train(cnn, train_data, val_data, config);
  out.cnn = evaluate(cnn, test_data);
  CrnnModel crnn = build_crnn(model_config);
  out.crnn_history = train(crnn, train_data, val_data, config);
  out.crnn = evaluate(crnn, test_data);
  out.accuracy_delta = out.crnn.accuracy - out.cnn.accuracy;
  out.cnn_model = std::move(cnn);
  out.crnn_model = std::move(crnn);
  return out;
}

std::vector<NoiseCondition> default_noise_conditions(double white_snr_db, double crackle_snr_db,
                                                     double crackle_rate_hz, double music_snr_db,
                                                     std::uint64_t seed) {
  return {{"No Noise", std::nullopt},
          {"White Noise", NoiseSpec{NoiseKind::kWhite, white_snr_db, crackle_rate_hz, seed}},
          {"Crackling Noise", NoiseSpec{NoiseKind::kCrackle, crackle_snr_db, crackle_rate_hz, seed}},
          {"Background Music", NoiseSpec{NoiseKind::kMusic, music_snr_db, crackle_rate_hz, seed}}};
}

std::vector<NoiseRow> noise_sweep(CrnnModel& model, const Manifest& wav_manifest,
                                  const std::vector<NoiseCondition>& conditions, const RenderOptions& render,
                                  std::size_t batch_size) {
  if (wav_manifest.empty()) throw DataError("noise_sweep: manifest is empty");
  const auto labels = model_labels(model);
  std::vector<NoiseRow> rows;
  for (const auto& cond : conditions) {
    ImageDataset data;
    data.label_names = labels;
    AudioClip generated_music;
    RenderOptions base = render;
    if (cond.noise && cond.noise->kind == NoiseKind::kMusic && base.music == nullptr) {
      generated_music = synth_music(kGeneratedMusicSeconds, kWorkingSampleRate, cond.noise->seed);
      base.music = &generated_music;
    }
    for (std::size_t i = 0; i < wav_manifest.size(); ++i) {
      const int label = label_index(labels, wav_manifest[i].label);
      RenderOptions r = base;
      r.noise = cond.noise;
      if (r.noise) r.noise->seed += 1000 * i;
      for (auto& img : render_wav(wav_manifest[i].path, r)) {
        data.images.push_back(std::move(img));
        data.labels.push_back(label);
        data.sources.push_back(wav_manifest[i].path);
      }
    }
    if (data.size() == 0) throw DataError("noise_sweep: no source is long enough for one segment");
    rows.push_back({cond.name, evaluate(model, data, batch_size)});
  }
  return rows;
}

nlohmann::json noise_table_to_json(const std::vector<NoiseRow>& rows) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& row : rows) {
    out.push_back({{"noise", row.name},
                   {"accuracy", row.report.accuracy},
                   {"f1", row.report.macro_f1},
                   {"report", report_to_json(row.report)}});
  }
  return out;
}

std::string format_noise_table(const std::vector<NoiseRow>& rows) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-18s %9s %9s\n", "Noise", "Accuracy", "F1");
  out << line;
  for (const auto& row : rows) {
    std::snprintf(line, sizeof(line), "%-18s %9.4f %9.4f\n", row.name.c_str(), row.report.accuracy,
                  row.report.macro_f1);
    out << line;
  }
  return out.str();
}

}  // namespace lid
