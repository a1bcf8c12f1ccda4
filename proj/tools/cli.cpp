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

#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "lid/audio_io.hpp"
#include "lid/augment.hpp"
#include "lid/checkpoint.hpp"
#include "lid/dataset.hpp"
#include "lid/error.hpp"
#include "lid/run_config.hpp"
#include "lid/synth.hpp"
#include "lid/train.hpp"

namespace lid::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

class UsageError : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config;
  std::string profile;
  std::vector<std::string> sets;
  int threads = 0;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON run configuration");
  cmd->add_option("--profile", c.profile, "full or desk");
  cmd->add_option("--set", c.sets, "Override one setting, e.g. train.epochs=5 (repeatable)");
  cmd->add_option("--threads", c.threads, "Worker threads");
}

RunConfig load_config(const Common& c, std::vector<std::string> extra) {
  ConfigSources s;
  if (!c.config.empty()) {
    if (!fs::exists(c.config)) throw UsageError("config file not found: " + c.config);
    s.file = c.config;
  }
  if (!c.profile.empty()) s.profile = c.profile;
  s.overrides = c.sets;
  if (c.threads > 0) s.overrides.push_back("threads=" + std::to_string(c.threads));
  s.overrides.insert(s.overrides.end(), extra.begin(), extra.end());
  return load_run_config(s);
}

void require_file(const fs::path& path, const std::string& what) {
  if (!fs::is_regular_file(path)) throw UsageError(what + " not found: " + path.string());
}

Manifest load_manifest(const fs::path& path) {
  require_file(path, "manifest");
  try {
    auto m = read_manifest(path);
    if (m.empty()) throw UsageError("manifest is empty: " + path.string());
    return m;
  } catch (const UsageError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

Checkpoint load_model(const fs::path& path) {
  require_file(path, "checkpoint");
  return load_checkpoint(path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw IoError("cannot write " + path.string());
}

std::optional<AudioClip> load_music(const std::string& path) {
  if (path.empty()) return std::nullopt;
  require_file(path, "music file");
  return resample(read_wav(path), kWorkingSampleRate);
}

ImageShape model_shape(const CrnnConfig& c) { return {c.input_height, c.input_width}; }

// Segment length matching the model's input width.
RenderOptions model_render(const RunConfig& cfg, const CrnnConfig& model) {
  RenderOptions r = cfg.render_options();
  r.noise.reset();
  r.segment_seconds = static_cast<double>(model.input_width) * cfg.stft.hop / cfg.sample_rate_hz;
  if (model.input_height != cfg.stft.window_size / 2 + 1) {
    throw ConfigError("checkpoint expects " + std::to_string(model.input_height) +
                      " frequency rows but spectrogram.window_size gives " +
                      std::to_string(cfg.stft.window_size / 2 + 1));
  }
  return r;
}

ImageDataset load_for_model(const Manifest& manifest, const CrnnConfig& model) {
  std::vector<std::string> labels;
  for (int i = 0; i < model.num_classes; ++i) labels.push_back(model.label(i));
  for (const auto& e : manifest) {
    if (std::find(labels.begin(), labels.end(), e.label) == labels.end()) {
      std::string known;
      for (const auto& l : labels) known += (known.empty() ? "" : ", ") + l;
      throw DataError("manifest label '" + e.label + "' (" + e.path.string() +
                      ") is not one of the checkpoint's classes: " + known);
    }
  }
  return load_images(manifest, labels, model_shape(model));
}

json history_summary(const TrainHistory& h) {
  return {{"best_epoch", h.best_epoch},
          {"best_val_accuracy", h.best_val_accuracy},
          {"epochs_run", h.epochs.size()},
          {"stopped_early", h.stopped_early}};
}

EpochCallback epoch_printer(std::ostream& out) {
  return [&out](const EpochRecord& r) {
    out << "epoch " << r.epoch << "  loss " << std::fixed << std::setprecision(4) << r.train_loss << "  train_acc "
        << r.train_accuracy << "  val_loss " << r.val_loss << "  val_acc " << r.val_accuracy
        << (r.improved ? "  *" : "") << "\n"
        << std::defaultfloat << std::flush;
  };
}

// ---- subcommands ----

int cmd_prepare(const RunConfig& cfg, const fs::path& manifest_path, const fs::path& out_dir, bool split,
                std::ostream& out) {
  const Manifest entries = load_manifest(manifest_path);
  auto music = load_music(cfg.augment_music_file);
  PrepareOptions opts;
  opts.render = cfg.render_options();
  opts.render.music = music ? &*music : nullptr;
  opts.threads = cfg.threads;
  const PrepareReport report = prepare_spectrograms(entries, out_dir, opts);

  write_manifest(report.outputs, out_dir / "manifest.tsv");
  json errors = json::array();
  for (const auto& [path, reason] : report.errors) errors.push_back({{"path", path.string()}, {"error", reason}});
  json too_short = json::array();
  for (const auto& p : report.too_short) too_short.push_back(p.string());
  write_text(out_dir / "errors.json",
             json{{"errors", errors}, {"too_short", too_short}, {"outputs", report.outputs.size()}}.dump(2) + "\n");
  write_run_config(cfg, out_dir);

  if (split) {
    const DatasetSplit parts = split_manifest(entries, cfg.split_seed);
    const std::pair<const char*, const Manifest*> named[] = {
        {"train", &parts.train}, {"validation", &parts.validation}, {"test", &parts.test}};
    std::map<fs::path, int> part_of;
    for (int k = 0; k < 3; ++k) {
      for (const auto& e : *named[k].second) part_of[e.path] = k;
      write_manifest(*named[k].second, out_dir / (std::string(named[k].first) + "_wav.tsv"));
    }
    Manifest images[3];
    for (std::size_t i = 0; i < report.outputs.size(); ++i) {
      images[part_of.at(entries[report.output_sources[i]].path)].push_back(report.outputs[i]);
    }
    for (int k = 0; k < 3; ++k) write_manifest(images[k], out_dir / (std::string(named[k].first) + ".tsv"));
  }

  out << "prepared " << report.outputs.size() << " spectrograms from " << entries.size() << " sources ("
      << report.errors.size() << " errors, " << report.too_short.size() << " too short)\n";
  return kExitOk;
}

int cmd_synth(const RunConfig& cfg, const std::string& specs_flag, const fs::path& out_dir, std::ostream& out) {
  fs::path specs_path = specs_flag.empty() ? fs::path(cfg.synth.specs_file) : fs::path(specs_flag);
  if (specs_path.empty()) specs_path = fs::path(LID_DATA_DIR) / "languages.json";
  require_file(specs_path, "language spec file");
  const auto specs = select_group(read_language_specs(specs_path), cfg.synth.group);
  const auto clips = synth_corpus(specs, cfg.synth.clips, cfg.synth.seconds, cfg.synth.seed, cfg.threads);
  Manifest manifest;
  for (const auto& c : clips) {
    const fs::path path = out_dir / c.label / (c.name + ".wav");
    fs::create_directories(path.parent_path());
    write_wav(c.clip, path);
    manifest.push_back({path, c.label});
  }
  write_manifest(manifest, out_dir / "manifest.tsv");
  write_run_config(cfg, out_dir);
  out << "wrote " << clips.size() << " clips for " << specs.size() << " languages to " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_augment(const RunConfig& cfg, const fs::path& manifest_path, const fs::path& out_dir, std::ostream& out) {
  if (!cfg.augment) throw UsageError("augment: set augment.kind (or --kind) to white, crackle or music");
  const Manifest entries = load_manifest(manifest_path);
  auto music = load_music(cfg.augment_music_file);
  if (cfg.augment->kind == NoiseKind::kMusic && !music) {
    music = synth_music(30.0, kWorkingSampleRate, cfg.augment->seed);
  }
  Manifest manifest;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    NoiseSpec spec = *cfg.augment;
    spec.seed += 1000 * i;
    const AudioClip clean = resample(read_wav(entries[i].path), kWorkingSampleRate);
    const AudioClip noisy = apply_noise(clean, spec, music ? &*music : nullptr);
    const fs::path path = out_dir / entries[i].label / (entries[i].path.stem().string() + ".wav");
    fs::create_directories(path.parent_path());
    write_wav(noisy, path);
    manifest.push_back({path, entries[i].label});
  }
  write_manifest(manifest, out_dir / "manifest.tsv");
  write_run_config(cfg, out_dir);
  out << "augmented " << manifest.size() << " clips with " << to_string(cfg.augment->kind) << " noise at "
      << cfg.augment->snr_db << " dB\n";
  return kExitOk;
}

int cmd_train(const RunConfig& cfg, const fs::path& train_path, const fs::path& val_path, const fs::path& out_dir,
              std::ostream& out) {
  const Manifest train_m = load_manifest(train_path);
  const Manifest val_m = load_manifest(val_path);
  const auto labels = manifest_labels(train_m);
  if (manifest_labels(val_m) != labels) {
    throw DataError("training and validation manifests have different label sets");
  }
  const CrnnConfig model_cfg = cfg.model_config(labels);
  const ImageShape shape = model_shape(model_cfg);
  const ImageDataset train_data = load_images(train_m, labels, shape);
  const ImageDataset val_data = load_images(val_m, labels, shape);
  CrnnModel model(model_cfg);
  TrainConfig tc = cfg.train;
  tc.checkpoint_dir = out_dir;
  write_run_config(cfg, out_dir);
  const TrainHistory h = train(model, train_data, val_data, tc, epoch_printer(out));
  out << history_summary(h).dump() << "\n";
  return kExitOk;
}

int cmd_finetune(const RunConfig& cfg, const fs::path& ckpt, const fs::path& train_path, const fs::path& val_path,
                 const fs::path& out_dir, std::ostream& out) {
  Checkpoint c = load_model(ckpt);
  const ImageDataset train_data = load_for_model(load_manifest(train_path), c.model.config());
  const ImageDataset val_data = load_for_model(load_manifest(val_path), c.model.config());
  TrainConfig tc = cfg.finetune_config();
  tc.checkpoint_dir = out_dir;
  write_run_config(cfg, out_dir);
  const TrainHistory h = fine_tune(c.model, train_data, val_data, tc, epoch_printer(out));
  out << history_summary(h).dump() << "\n";
  return kExitOk;
}

int cmd_evaluate(const RunConfig& cfg, const fs::path& ckpt, const fs::path& manifest_path,
                 const std::string& out_dir, bool as_json, std::ostream& out) {
  Checkpoint c = load_model(ckpt);
  const ImageDataset data = load_for_model(load_manifest(manifest_path), c.model.config());
  const EvalReport report = evaluate(c.model, data);
  if (!out_dir.empty()) {
    write_text(fs::path(out_dir) / "report.json", report_to_json(report).dump(2) + "\n");
    write_text(fs::path(out_dir) / "confusion.csv", confusion_csv(report));
    write_text(fs::path(out_dir) / "report.txt", format_report(report));
    write_run_config(cfg, out_dir);
  }
  out << (as_json ? report_to_json(report).dump() + "\n" : format_report(report));
  return kExitOk;
}

json prediction_line(const std::string& file, long segment, const CrnnConfig& mc,
                     const std::vector<float>& probs, int predicted) {
  json p = json::object();
  for (int k = 0; k < mc.num_classes; ++k) p[mc.label(k)] = probs[static_cast<std::size_t>(k)];
  json line = {{"file", file}};
  if (segment >= 0) line["segment"] = segment;
  line["label"] = mc.label(predicted);
  line["probabilities"] = p;
  return line;
}

int cmd_predict(const RunConfig& cfg, const fs::path& ckpt, const std::vector<std::string>& inputs,
                const std::string& out_dir, std::ostream& out) {
  Checkpoint c = load_model(ckpt);
  const CrnnConfig& mc = c.model.config();
  const RenderOptions render = model_render(cfg, mc);
  if (!out_dir.empty()) write_run_config(cfg, out_dir);
  std::string lines;
  for (const auto& input : inputs) {
    require_file(input, "input");
    ImageDataset data;
    for (int k = 0; k < mc.num_classes; ++k) data.label_names.push_back(mc.label(k));
    std::string ext = fs::path(input).extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char ch) { return std::tolower(ch); });
    const bool wav = ext == ".wav";
    if (wav) {
      data.images = render_wav(input, render);
      if (data.images.empty()) throw DataError(input + " is shorter than one segment");
    } else {
      data.images.push_back(read_png(input, model_shape(mc)));
    }
    data.labels.assign(data.images.size(), -1);
    data.sources.assign(data.images.size(), input);
    const Predictions p = predict(c.model, data);
    for (std::size_t i = 0; i < data.size(); ++i) {
      const long segment = wav ? static_cast<long>(i) : -1;
      const std::string line = prediction_line(input, segment, mc, p.probabilities[i], p.predicted[i]).dump();
      out << line << "\n" << std::flush;
      lines += line + "\n";
    }
  }
  if (!out_dir.empty()) write_text(fs::path(out_dir) / "predictions.jsonl", lines);
  return kExitOk;
}

int cmd_extend(const RunConfig& cfg, const fs::path& ckpt, int classes, const std::vector<std::string>& labels,
               std::uint64_t seed, const fs::path& out_path, std::ostream& out) {
  Checkpoint c = load_model(ckpt);
  const int old_classes = c.model.config().num_classes;
  if (classes <= old_classes) {
    throw UsageError("extend: --classes must exceed the checkpoint's " + std::to_string(old_classes));
  }
  if (!labels.empty() && static_cast<int>(labels.size()) != classes - old_classes) {
    throw UsageError("extend: expected " + std::to_string(classes - old_classes) + " new labels, got " +
                     std::to_string(labels.size()));
  }
  c.model.extend_head(classes, seed, labels);
  save_checkpoint(c.model, out_path, 0);
  write_run_config(cfg, out_path.has_parent_path() ? out_path.parent_path() : fs::path("."));
  out << "extended " << ckpt.string() << " from " << old_classes << " to " << classes << " classes -> "
      << out_path.string() << "\n";
  return kExitOk;
}

int cmd_noise_eval(const RunConfig& cfg, const fs::path& ckpt, const fs::path& manifest_path,
                   const std::string& out_dir, std::ostream& out) {
  Checkpoint c = load_model(ckpt);
  const Manifest wavs = load_manifest(manifest_path);
  auto music = load_music(cfg.noise_eval.music_file);
  RenderOptions render = model_render(cfg, c.model.config());
  render.music = music ? &*music : nullptr;
  const auto rows = noise_sweep(c.model, wavs, cfg.noise_conditions(), render);
  if (!out_dir.empty()) {
    const fs::path dir(out_dir);
    write_text(dir / "noise_table.json", noise_table_to_json(rows).dump(2) + "\n");
    json reports = json::object();
    for (const auto& r : rows) reports[r.name] = report_to_json(r.report);
    write_text(dir / "noise_reports.json", reports.dump(2) + "\n");
    write_text(dir / "noise_table.txt", format_noise_table(rows));
    write_run_config(cfg, dir);
  }
  out << format_noise_table(rows);
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Spoken language identification from spectrograms"};
  app.name(argv.empty() ? "lid" : fs::path(argv[0]).filename().string());
  app.require_subcommand(1);

  Common common;
  std::string manifest, out_dir, train_m, val_m, ckpt, specs, arch, kind, labels_csv;
  std::vector<std::string> inputs, labels;
  bool split = false, as_json = false, freeze = false;
  std::optional<int> epochs, clips;
  std::optional<double> seconds, snr, rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> group;
  int classes = 0;

  auto* prepare = app.add_subcommand("prepare", "WAV manifest -> spectrogram PNGs and a PNG manifest");
  prepare->add_option("--manifest", manifest, "WAV manifest (path<TAB>label)")->required();
  prepare->add_option("--out", out_dir, "Output directory")->required();
  prepare->add_flag("--split", split, "Also write 70/20/10 train/validation/test manifests, split by source");
  add_common(prepare, common);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic pseudo-language corpus");
  synth->add_option("--specs", specs, "Language spec JSON (default: the packaged languages.json)");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--clips", clips, "Clips per language");
  synth->add_option("--seconds", seconds, "Clip length");
  synth->add_option("--seed", seed, "Random seed");
  synth->add_option("--group", group, "base, extension or all");
  add_common(synth, common);

  auto* augment = app.add_subcommand("augment", "Add noise to every WAV of a manifest");
  augment->add_option("--manifest", manifest, "WAV manifest")->required();
  augment->add_option("--out", out_dir, "Output directory")->required();
  augment->add_option("--kind", kind, "white, crackle or music");
  augment->add_option("--snr", snr, "Signal-to-noise ratio in dB");
  augment->add_option("--rate", rate, "Crackle bursts per second");
  augment->add_option("--seed", seed, "Noise seed");
  add_common(augment, common);

  auto* train_cmd = app.add_subcommand("train", "Train a model from PNG manifests");
  train_cmd->add_option("--train", train_m, "Training manifest")->required();
  train_cmd->add_option("--val", val_m, "Validation manifest")->required();
  train_cmd->add_option("--out", out_dir, "Output directory for checkpoints and history")->required();
  train_cmd->add_option("--arch", arch, "crnn (default) or cnn");
  train_cmd->add_option("--epochs", epochs, "Epochs");
  train_cmd->add_option("--seed", seed, "Training seed");
  add_common(train_cmd, common);

  auto* finetune = app.add_subcommand("finetune", "Continue training a checkpoint with SGD");
  finetune->add_option("--checkpoint", ckpt, "Checkpoint to start from")->required();
  finetune->add_option("--train", train_m, "Training manifest")->required();
  finetune->add_option("--val", val_m, "Validation manifest")->required();
  finetune->add_option("--out", out_dir, "Output directory")->required();
  finetune->add_option("--epochs", epochs, "Epochs");
  finetune->add_flag("--freeze-conv", freeze, "Keep the convolutional blocks fixed");
  add_common(finetune, common);

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Accuracy, per-class metrics and confusion matrix");
  evaluate_cmd->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  evaluate_cmd->add_option("--manifest", manifest, "PNG manifest")->required();
  evaluate_cmd->add_option("--out", out_dir, "Write report.json, confusion.csv and report.txt here");
  evaluate_cmd->add_flag("--json", as_json, "Print the JSON report instead of the table");
  add_common(evaluate_cmd, common);

  auto* predict_cmd = app.add_subcommand("predict", "Classify PNG or WAV files, one JSON line per input");
  predict_cmd->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  predict_cmd->add_option("inputs", inputs, "PNG or WAV files")->required();
  predict_cmd->add_option("--out", out_dir, "Also write predictions.jsonl here");
  add_common(predict_cmd, common);

  auto* extend = app.add_subcommand("extend", "Widen a checkpoint's classifier to more classes");
  extend->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  extend->add_option("--classes", classes, "New number of classes")->required();
  extend->add_option("--labels", labels_csv, "Comma-separated names of the added classes");
  extend->add_option("--seed", seed, "Seed for the new classifier weights");
  extend->add_option("--out", out_dir, "Output checkpoint path")->required();
  add_common(extend, common);

  auto* noise = app.add_subcommand("noise-eval", "Accuracy and F1 under white, crackle and music noise");
  noise->add_option("--checkpoint", ckpt, "Checkpoint")->required();
  noise->add_option("--manifest", manifest, "WAV manifest of test sources")->required();
  noise->add_option("--out", out_dir, "Write noise_table.json and per-row reports here");
  add_common(noise, common);

  std::vector<const char*> cargv;
  for (const auto& a : argv) cargv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (app.get_subcommands().empty()) err << app.help();
    return kExitUsage;
  }

  try {
    std::vector<std::string> extra;
    auto num = [](auto v) {
      std::ostringstream s;
      s << std::setprecision(17) << v;
      return s.str();
    };
    if (synth->parsed()) {
      if (clips) extra.push_back("synth.clips=" + std::to_string(*clips));
      if (seconds) extra.push_back("synth.seconds=" + num(*seconds));
      if (seed) extra.push_back("synth.seed=" + std::to_string(*seed));
      if (group) extra.push_back("synth.group=" + json(*group).dump());
      return cmd_synth(load_config(common, extra), specs, out_dir, out);
    }
    if (prepare->parsed()) return cmd_prepare(load_config(common, extra), manifest, out_dir, split, out);
    if (augment->parsed()) {
      if (!kind.empty()) extra.push_back("augment.kind=" + json(kind).dump());
      if (snr) extra.push_back("augment.snr_db=" + num(*snr));
      if (rate) extra.push_back("augment.crackle_rate_hz=" + num(*rate));
      if (seed) extra.push_back("augment.seed=" + std::to_string(*seed));
      return cmd_augment(load_config(common, extra), manifest, out_dir, out);
    }
    if (train_cmd->parsed()) {
      if (!arch.empty()) {
        if (arch != "crnn" && arch != "cnn") throw UsageError("--arch must be crnn or cnn");
        extra.push_back(std::string("model.head_only=") + (arch == "cnn" ? "true" : "false"));
      }
      if (epochs) extra.push_back("train.epochs=" + std::to_string(*epochs));
      if (seed) extra.push_back("train.seed=" + std::to_string(*seed));
      return cmd_train(load_config(common, extra), train_m, val_m, out_dir, out);
    }
    if (finetune->parsed()) {
      if (epochs) extra.push_back("finetune.epochs=" + std::to_string(*epochs));
      if (freeze) extra.push_back("finetune.freeze_conv=true");
      return cmd_finetune(load_config(common, extra), ckpt, train_m, val_m, out_dir, out);
    }
    if (evaluate_cmd->parsed()) return cmd_evaluate(load_config(common, extra), ckpt, manifest, out_dir, as_json, out);
    if (predict_cmd->parsed()) return cmd_predict(load_config(common, extra), ckpt, inputs, out_dir, out);
    if (extend->parsed()) {
      std::stringstream ss(labels_csv);
      for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) labels.push_back(item);
      }
      return cmd_extend(load_config(common, extra), ckpt, classes, labels, seed.value_or(0), out_dir, out);
    }
    if (noise->parsed()) return cmd_noise_eval(load_config(common, extra), ckpt, manifest, out_dir, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace lid::cli
