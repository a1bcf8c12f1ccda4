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

#include "lid/run_config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>

#include "lid/error.hpp"

extern char** environ;

namespace lid {
namespace {

using nlohmann::json;

std::string upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

// Copies `patch` onto `base`, refusing keys that `base` does not have.
void strict_merge(json& base, const json& patch, const std::string& where) {
  if (!patch.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (const auto& [key, value] : patch.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!base.contains(key)) throw ConfigError("config: unknown key '" + path + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      strict_merge(slot, value, path);
    } else {
      slot = value;
    }
  }
}

template <typename T>
T get(const json& section, const char* key, const std::string& where) {
  try {
    return section.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + where + "." + key + "' has the wrong type");
  }
}

json model_to_json(const CrnnConfig& c) {
  json j = c;
  for (const char* k : {"num_classes", "labels", "input_height", "input_width"}) j.erase(k);
  return j;
}

json parse_value(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error&) {
    return text;
  }
}

std::string resolve_profile(const ConfigSources& sources, const json& file_doc,
                            const std::map<std::string, std::string>& env) {
  if (sources.profile) return *sources.profile;
  for (const auto& o : sources.overrides) {
    if (o.rfind("profile=", 0) == 0) return parse_value(o.substr(8)).get<std::string>();
  }
  if (auto it = env.find("LID_PROFILE"); it != env.end()) return it->second;
  if (file_doc.contains("profile") && file_doc["profile"].is_string()) return file_doc["profile"].get<std::string>();
  return "full";
}

}  // namespace

void RunConfig::validate() const {
  if (profile != "full" && profile != "desk") throw ConfigError("config: profile must be full or desk");
  if (sample_rate_hz != kWorkingSampleRate) {
    throw ConfigError("config: audio.sample_rate_hz is fixed at " + std::to_string(kWorkingSampleRate));
  }
  if (!(segment_seconds > 0.0)) throw ConfigError("config: audio.segment_seconds must be positive");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (stft.window_size < 2 || stft.hop < 1) throw ConfigError("config: spectrogram window and hop must be positive");
  if (!(mapping.db_floor < mapping.db_ceil)) throw ConfigError("config: spectrogram.db_floor must be below db_ceil");
  if (synth.clips < 1 || !(synth.seconds > 0.0)) throw ConfigError("config: synth clips and seconds must be positive");
  if (finetune.epochs < 1 || !(finetune.learning_rate >= 0.0)) {
    throw ConfigError("config: finetune epochs and learning rate must be positive");
  }
  train.validate();
  model_config({"a", "b"}).validate();
}

ImageShape RunConfig::image_shape() const {
  const auto samples = static_cast<std::size_t>(std::llround(segment_seconds * sample_rate_hz));
  return {stft.window_size / 2 + 1, static_cast<int>(samples / static_cast<std::size_t>(stft.hop))};
}

RenderOptions RunConfig::render_options() const {
  RenderOptions r;
  r.segment_seconds = segment_seconds;
  r.stft = stft;
  r.mapping = mapping;
  r.noise = augment;
  return r;
}

CrnnConfig RunConfig::model_config(const std::vector<std::string>& labels) const {
  CrnnConfig c = model;
  const auto shape = image_shape();
  c.input_height = shape.rows;
  c.input_width = shape.cols;
  c.num_classes = static_cast<int>(labels.size());
  c.labels = labels;
  return c;
}

TrainConfig RunConfig::finetune_config() const {
  TrainConfig c = train;
  c.optimizer = OptimizerKind::kSgd;
  c.epochs = finetune.epochs;
  c.learning_rate = finetune.learning_rate;
  c.momentum = finetune.momentum;
  c.patience = finetune.patience;
  c.freeze_conv = finetune.freeze_conv;
  return c;
}

std::vector<NoiseCondition> RunConfig::noise_conditions() const {
  return default_noise_conditions(noise_eval.white_snr_db, noise_eval.crackle_snr_db, noise_eval.crackle_rate_hz,
                                  noise_eval.music_snr_db, noise_eval.seed);
}

RunConfig profile_defaults(const std::string& profile) {
  RunConfig c;
  c.profile = profile;
  if (profile == "full") return c;
  if (profile != "desk") throw ConfigError("config: unknown profile '" + profile + "' (expected full or desk)");
  c.segment_seconds = 2.0;
  c.synth.clips = 300;
  c.synth.seconds = 2.0;
  c.train.batch_size = 8;
  return c;
}

json run_config_to_json(const RunConfig& c) {
  const NoiseSpec aug = c.augment.value_or(NoiseSpec{});
  json train = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"optimizer", std::string(to_string(c.train.optimizer))},
                {"learning_rate", c.train.learning_rate},
                {"momentum", c.train.momentum},
                {"beta1", c.train.beta1},
                {"beta2", c.train.beta2},
                {"adam_eps", c.train.adam_eps},
                {"seed", c.train.seed},
                {"patience", c.train.patience}};
  return {{"profile", c.profile},
          {"threads", c.threads},
          {"audio", {{"sample_rate_hz", c.sample_rate_hz}, {"segment_seconds", c.segment_seconds}}},
          {"spectrogram",
           {{"window_size", c.stft.window_size},
            {"hop", c.stft.hop},
            {"db_floor", c.mapping.db_floor},
            {"db_ceil", c.mapping.db_ceil},
            {"epsilon", c.mapping.epsilon}}},
          {"augment",
           {{"kind", c.augment ? std::string(to_string(aug.kind)) : std::string("none")},
            {"snr_db", aug.snr_db},
            {"crackle_rate_hz", aug.crackle_rate_hz},
            {"seed", aug.seed},
            {"music_file", c.augment_music_file}}},
          {"noise_eval",
           {{"white_snr_db", c.noise_eval.white_snr_db},
            {"crackle_snr_db", c.noise_eval.crackle_snr_db},
            {"crackle_rate_hz", c.noise_eval.crackle_rate_hz},
            {"music_snr_db", c.noise_eval.music_snr_db},
            {"seed", c.noise_eval.seed},
            {"music_file", c.noise_eval.music_file}}},
          {"model", model_to_json(c.model)},
          {"train", train},
          {"finetune",
           {{"epochs", c.finetune.epochs},
            {"learning_rate", c.finetune.learning_rate},
            {"momentum", c.finetune.momentum},
            {"patience", c.finetune.patience},
            {"freeze_conv", c.finetune.freeze_conv}}},
          {"split", {{"seed", c.split_seed}}},
          {"synth",
           {{"specs_file", c.synth.specs_file},
            {"group", c.synth.group},
            {"clips", c.synth.clips},
            {"seconds", c.synth.seconds},
            {"seed", c.synth.seed}}}};
}

RunConfig run_config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  std::string profile = "full";
  if (doc.contains("profile")) {
    if (!doc["profile"].is_string()) throw ConfigError("config: 'profile' must be a string");
    profile = doc["profile"].get<std::string>();
  }
  json merged = run_config_to_json(profile_defaults(profile));
  strict_merge(merged, doc, "");

  RunConfig c;
  c.profile = get<std::string>(merged, "profile", "config");
  c.threads = get<int>(merged, "threads", "config");

  const json& audio = merged["audio"];
  c.sample_rate_hz = get<int>(audio, "sample_rate_hz", "audio");
  c.segment_seconds = get<double>(audio, "segment_seconds", "audio");

  const json& spec = merged["spectrogram"];
  c.stft.window_size = get<int>(spec, "window_size", "spectrogram");
  c.stft.hop = get<int>(spec, "hop", "spectrogram");
  c.mapping.db_floor = get<double>(spec, "db_floor", "spectrogram");
  c.mapping.db_ceil = get<double>(spec, "db_ceil", "spectrogram");
  c.mapping.epsilon = get<double>(spec, "epsilon", "spectrogram");

  const json& aug = merged["augment"];
  const auto kind = get<std::string>(aug, "kind", "augment");
  if (kind != "none") {
    NoiseSpec n;
    n.kind = parse_noise_kind(kind);
    n.snr_db = get<double>(aug, "snr_db", "augment");
    n.crackle_rate_hz = get<double>(aug, "crackle_rate_hz", "augment");
    n.seed = get<std::uint64_t>(aug, "seed", "augment");
    c.augment = n;
  }
  c.augment_music_file = get<std::string>(aug, "music_file", "augment");

  const json& ne = merged["noise_eval"];
  c.noise_eval.white_snr_db = get<double>(ne, "white_snr_db", "noise_eval");
  c.noise_eval.crackle_snr_db = get<double>(ne, "crackle_snr_db", "noise_eval");
  c.noise_eval.crackle_rate_hz = get<double>(ne, "crackle_rate_hz", "noise_eval");
  c.noise_eval.music_snr_db = get<double>(ne, "music_snr_db", "noise_eval");
  c.noise_eval.seed = get<std::uint64_t>(ne, "seed", "noise_eval");
  c.noise_eval.music_file = get<std::string>(ne, "music_file", "noise_eval");

  try {
    c.model = merged["model"].get<CrnnConfig>();
  } catch (const json::exception&) {
    throw ConfigError("config: 'model' has a field of the wrong type");
  }

  const json& tr = merged["train"];
  c.train.epochs = get<int>(tr, "epochs", "train");
  c.train.batch_size = get<std::size_t>(tr, "batch_size", "train");
  c.train.optimizer = parse_optimizer(get<std::string>(tr, "optimizer", "train"));
  c.train.learning_rate = get<double>(tr, "learning_rate", "train");
  c.train.momentum = get<double>(tr, "momentum", "train");
  c.train.beta1 = get<double>(tr, "beta1", "train");
  c.train.beta2 = get<double>(tr, "beta2", "train");
  c.train.adam_eps = get<double>(tr, "adam_eps", "train");
  c.train.seed = get<std::uint64_t>(tr, "seed", "train");
  c.train.patience = get<int>(tr, "patience", "train");
  c.train.threads = c.threads;

  const json& ft = merged["finetune"];
  c.finetune.epochs = get<int>(ft, "epochs", "finetune");
  c.finetune.learning_rate = get<double>(ft, "learning_rate", "finetune");
  c.finetune.momentum = get<double>(ft, "momentum", "finetune");
  c.finetune.patience = get<int>(ft, "patience", "finetune");
  c.finetune.freeze_conv = get<bool>(ft, "freeze_conv", "finetune");

  c.split_seed = get<std::uint64_t>(merged["split"], "seed", "split");

  const json& sy = merged["synth"];
  c.synth.specs_file = get<std::string>(sy, "specs_file", "synth");
  c.synth.group = get<std::string>(sy, "group", "synth");
  c.synth.clips = get<int>(sy, "clips", "synth");
  c.synth.seconds = get<double>(sy, "seconds", "synth");
  c.synth.seed = get<std::uint64_t>(sy, "seed", "synth");

  c.validate();
  return c;
}

RunConfig load_run_config(const ConfigSources& sources) {
  std::map<std::string, std::string> env = sources.environment;
  if (sources.use_process_environment) {
    for (char** e = environ; e != nullptr && *e != nullptr; ++e) {
      const std::string entry = *e;
      if (entry.rfind("LID_", 0) != 0) continue;
      const auto eq = entry.find('=');
      if (eq != std::string::npos) env.emplace(entry.substr(0, eq), entry.substr(eq + 1));
    }
  }

  json file_doc = json::object();
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) throw ConfigError("config: cannot read " + sources.file->string());
    try {
      file_doc = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ConfigError("config: " + sources.file->string() + " is not valid JSON: " + e.what());
    }
    if (!file_doc.is_object()) throw ConfigError("config: " + sources.file->string() + " must hold a JSON object");
  }

  const std::string profile = resolve_profile(sources, file_doc, env);
  json doc = run_config_to_json(profile_defaults(profile));
  strict_merge(doc, file_doc, "");
  doc["profile"] = profile;

  const json shape = doc;
  for (const auto& [section, body] : shape.items()) {
    if (body.is_object()) {
      for (const auto& [key, value] : body.items()) {
        const auto it = env.find("LID_" + upper(section) + "_" + upper(key));
        if (it != env.end()) doc[section][key] = parse_value(it->second);
      }
    } else if (section != "profile") {
      const auto it = env.find("LID_" + upper(section));
      if (it != env.end()) doc[section] = parse_value(it->second);
    }
  }

  for (const auto& o : sources.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("config: override '" + o + "' is not key=value");
    const std::string path = o.substr(0, eq);
    if (path == "profile") continue;
    json patch = parse_value(o.substr(eq + 1));
    const auto dot = path.find('.');
    if (dot == std::string::npos) {
      strict_merge(doc, json{{path, patch}}, "");
    } else {
      strict_merge(doc, json{{path.substr(0, dot), json{{path.substr(dot + 1), patch}}}}, "");
    }
  }
  return run_config_from_json(doc);
}

void write_run_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kRunConfigFile;
  std::ofstream out(path, std::ios::trunc);
  out << run_config_to_json(config).dump(2) << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

}  // namespace lid
