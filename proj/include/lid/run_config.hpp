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

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lid/augment.hpp"
#include "lid/crnn.hpp"
#include "lid/dataset.hpp"
#include "lid/spectrogram.hpp"
#include "lid/train.hpp"

namespace lid {

struct NoiseEvalSettings {
  double white_snr_db = 10.0;
  double crackle_snr_db = 10.0;
  double crackle_rate_hz = 2.0;
  double music_snr_db = 6.0;
  std::uint64_t seed = 0;
  std::string music_file;  // empty: generated music
};

struct SynthSettings {
  std::string specs_file;  // empty: the packaged languages.json
  std::string group = "base";
  int clips = 50;
  double seconds = 10.0;
  std::uint64_t seed = 0;
};

struct FinetuneSettings {
  int epochs = 10;
  double learning_rate = 1e-2;
  double momentum = 0.9;
  int patience = 5;
  bool freeze_conv = false;
};

// Every knob of the pipeline in one place. Loaded as profile defaults, then a
// JSON file, then LID_* environment variables, then command-line overrides.
struct RunConfig {
  std::string profile = "full";
  int sample_rate_hz = kWorkingSampleRate;
  double segment_seconds = 10.0;
  int threads = 1;
  StftConfig stft;
  GrayscaleMapping mapping;
  // Augmentation applied by `prepare` and `augment`; kind "none" disables it.
  std::optional<NoiseSpec> augment;
  std::string augment_music_file;
  NoiseEvalSettings noise_eval;
  CrnnConfig model;
  TrainConfig train;
  FinetuneSettings finetune;
  std::uint64_t split_seed = 0;
  SynthSettings synth;

  void validate() const;

  // Image geometry implied by the spectrogram and segment settings.
  ImageShape image_shape() const;
  RenderOptions render_options() const;
  // Model config for the given class names, sized to image_shape().
  CrnnConfig model_config(const std::vector<std::string>& labels) const;
  TrainConfig finetune_config() const;
  std::vector<NoiseCondition> noise_conditions() const;
};

// "full" (10 s segments) or "desk" (2 s segments, shorter training).
RunConfig profile_defaults(const std::string& profile);

nlohmann::json run_config_to_json(const RunConfig& config);
// Strict: unknown sections or keys raise ConfigError naming the path. Missing
// keys keep the values of the profile named in the document (or `base`).
RunConfig run_config_from_json(const nlohmann::json& doc);

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::optional<std::string> profile;
  // "section.key=value" pairs; values are parsed as JSON, falling back to a
  // plain string.
  std::vector<std::string> overrides;
  // Environment lookup, replaceable for tests.
  std::map<std::string, std::string> environment;
  bool use_process_environment = true;
};

// Applies file, environment (LID_PROFILE, LID_<SECTION>_<KEY>) and overrides
// in that order.
RunConfig load_run_config(const ConfigSources& sources);

void write_run_config(const RunConfig& config, const std::filesystem::path& dir);

inline constexpr const char* kRunConfigFile = "run_config.json";

}  // namespace lid
