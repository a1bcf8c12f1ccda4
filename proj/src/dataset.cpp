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

#include "lid/dataset.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <thread>

#include "lid/error.hpp"

namespace fs = std::filesystem;

namespace lid {

Manifest read_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  Manifest out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0 || tab + 1 == line.size() ||
        line.find('\t', tab + 1) != std::string::npos) {
      throw DataError(path.string() + ":" + std::to_string(line_no) + ": expected 'path<TAB>label'");
    }
    fs::path p = line.substr(0, tab);
    if (p.is_relative()) p = base / p;
    out.push_back({p.lexically_normal(), line.substr(tab + 1)});
  }
  return out;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest " + path.string());
  const fs::path base = fs::absolute(path).parent_path().lexically_normal();
  for (const auto& e : manifest) {
    if (e.label.find_first_of("\t\n") != std::string::npos) {
      throw DataError("label '" + e.label + "' contains a tab or newline");
    }
    fs::path p = fs::absolute(e.path).lexically_normal();
    const fs::path rel = p.lexically_relative(base);
    if (!rel.empty() && *rel.begin() != "..") p = rel;
    out << p.generic_string() << '\t' << e.label << '\n';
  }
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<std::string> manifest_labels(const Manifest& manifest) {
  std::set<std::string> labels;
  for (const auto& e : manifest) labels.insert(e.label);
  return {labels.begin(), labels.end()};
}

std::array<std::size_t, 3> split_sizes(std::size_t n) {
  constexpr std::array<std::size_t, 3> kParts = {70, 20, 10};
  std::array<std::size_t, 3> sizes{};
  std::array<std::size_t, 3> remainders{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    sizes[i] = n * kParts[i] / 100;
    remainders[i] = n * kParts[i] % 100;
    assigned += sizes[i];
  }
  std::array<std::size_t, 3> order = {0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
  for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++sizes[order[k]];
  return sizes;
}

DatasetSplit split_manifest(const Manifest& entries, std::uint64_t seed) {
  std::map<std::string, Manifest> by_label;
  for (const auto& e : entries) by_label[e.label].push_back(e);
  for (const auto& [label, items] : by_label) {
    if (items.size() < kMinEntriesPerLabel) {
      throw DataError("label '" + label + "' has " + std::to_string(items.size()) + " entries, at least " +
                      std::to_string(kMinEntriesPerLabel) + " are needed to split");
    }
  }
  DatasetSplit split;
  split.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& [label, items] : by_label) {
    std::shuffle(items.begin(), items.end(), rng);
    const auto sizes = split_sizes(items.size());
    auto it = items.begin();
    split.train.insert(split.train.end(), it, it + sizes[0]);
    it += sizes[0];
    split.validation.insert(split.validation.end(), it, it + sizes[1]);
    it += sizes[1];
    split.test.insert(split.test.end(), it, items.end());
  }
  return split;
}

std::vector<Spectrogram> render_wav(const fs::path& wav, const RenderOptions& options) {
  AudioClip clip = read_wav(wav);
  if (clip.sample_rate_hz != kWorkingSampleRate) clip = resample(clip, kWorkingSampleRate);
  std::vector<Spectrogram> out;
  const auto segments = segment(clip, options.segment_seconds);
  for (std::size_t k = 0; k < segments.size(); ++k) {
    if (options.noise && options.noise->snr_db != kNoNoise) {
      NoiseSpec spec = *options.noise;
      spec.seed += k;
      out.push_back(render_spectrogram(apply_noise(segments[k], spec, options.music), options.stft, options.mapping));
    } else {
      out.push_back(render_spectrogram(segments[k], options.stft, options.mapping));
    }
  }
  return out;
}

PrepareReport prepare_spectrograms(const Manifest& wav_entries, const fs::path& out_dir,
                                   const PrepareOptions& options) {
  struct Slot {
    Manifest outputs;
    std::optional<std::string> error;
    bool too_short = false;
  };
  std::vector<Slot> slots(wav_entries.size());

  // Two sources that would write to the same PNG names are a data error.
  std::set<std::pair<std::string, std::string>> seen;
  std::vector<bool> duplicate(wav_entries.size(), false);
  for (std::size_t i = 0; i < wav_entries.size(); ++i) {
    const auto key = std::make_pair(wav_entries[i].label, wav_entries[i].path.stem().string());
    if (!seen.insert(key).second) {
      duplicate[i] = true;
      slots[i].error = "another source with label '" + key.first + "' has the same stem '" + key.second + "'";
    }
  }

  auto work = [&](std::size_t i) {
    if (duplicate[i]) return;
    const auto& entry = wav_entries[i];
    Slot& slot = slots[i];
    try {
      const auto images = render_wav(entry.path, options.render);
      if (images.empty()) {
        slot.too_short = true;
        return;
      }
      const fs::path dir = out_dir / entry.label;
      fs::create_directories(dir);
      for (std::size_t k = 0; k < images.size(); ++k) {
        const fs::path png = dir / (entry.path.stem().string() + "_" + std::to_string(k) + ".png");
        write_png(images[k], png);
        slot.outputs.push_back({png, entry.label});
      }
    } catch (const std::exception& e) {
      slot.error = e.what();
    }
  };

  const std::size_t threads =
      std::clamp<std::size_t>(static_cast<std::size_t>(std::max(1, options.threads)), 1, wav_entries.size() + 1);
  if (threads <= 1) {
    for (std::size_t i = 0; i < wav_entries.size(); ++i) work(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < wav_entries.size(); i = next++) work(i);
      });
    }
  }

  PrepareReport report;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    auto& slot = slots[i];
    if (slot.error) report.errors.emplace_back(wav_entries[i].path, *slot.error);
    if (slot.too_short) report.too_short.push_back(wav_entries[i].path);
    report.outputs.insert(report.outputs.end(), slot.outputs.begin(), slot.outputs.end());
    report.output_sources.insert(report.output_sources.end(), slot.outputs.size(), i);
  }
  if (report.outputs.empty()) {
    throw DataError("prepare: no spectrograms produced from " + std::to_string(wav_entries.size()) + " sources (" +
                    std::to_string(report.errors.size()) + " failed, " + std::to_string(report.too_short.size()) +
                    " shorter than one segment)");
  }
  return report;
}

int label_index(const std::vector<std::string>& label_names, const std::string& label) {
  const auto it = std::find(label_names.begin(), label_names.end(), label);
  if (it == label_names.end()) {
    std::string known;
    for (const auto& l : label_names) known += (known.empty() ? "" : ", ") + l;
    throw DataError("label '" + label + "' is not one of the model's classes {" + known + "}");
  }
  return static_cast<int>(it - label_names.begin());
}

ImageDataset load_images(const Manifest& manifest, const std::vector<std::string>& label_names,
                         const ImageShape& expected) {
  ImageDataset data;
  data.label_names = label_names;
  data.images.reserve(manifest.size());
  for (const auto& e : manifest) {
    data.labels.push_back(label_index(label_names, e.label));
    try {
      data.images.push_back(read_png(e.path, expected));
    } catch (const Error& err) {
      throw FormatError(std::string("cannot load image: ") + err.what());
    }
    data.sources.push_back(e.path);
  }
  return data;
}

Batch make_batch(const ImageDataset& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw DataError("make_batch: empty batch");
  const auto& first = data.images.at(indices[0]);
  const auto rows = static_cast<std::size_t>(first.rows);
  const auto cols = static_cast<std::size_t>(first.cols);
  Batch batch;
  batch.images = Tensor(Shape{indices.size(), 1, rows, cols});
  auto out = batch.images.data();
  for (std::size_t b = 0; b < indices.size(); ++b) {
    const auto& img = data.images.at(indices[b]);
    if (static_cast<std::size_t>(img.rows) != rows || static_cast<std::size_t>(img.cols) != cols) {
      throw ShapeError("make_batch: image " + data.sources.at(indices[b]).string() + " has a different size");
    }
    float* dst = out.data() + b * rows * cols;
    for (std::size_t i = 0; i < rows * cols; ++i) dst[i] = static_cast<float>(img.pixels[i]) / 255.0f;
    batch.labels.push_back(data.labels.at(indices[b]));
    batch.indices.push_back(indices[b]);
  }
  return batch;
}

BatchIterator::BatchIterator(const ImageDataset& data, std::size_t batch_size,
                             std::optional<std::uint64_t> shuffle_seed)
    : data_(data), batch_size_(batch_size), seed_(shuffle_seed) {
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  start_epoch(0);
}

void BatchIterator::start_epoch(std::uint64_t epoch) {
  order_.resize(data_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (seed_) {
    std::mt19937_64 rng(*seed_ + epoch);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
  cursor_ = 0;
}

bool BatchIterator::next(Batch& batch) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t n = std::min(batch_size_, order_.size() - cursor_);
  batch = make_batch(data_, std::span<const std::size_t>(order_.data() + cursor_, n));
  cursor_ += n;
  return true;
}

std::size_t BatchIterator::batches_per_epoch() const { return (data_.size() + batch_size_ - 1) / batch_size_; }

}  // namespace lid
