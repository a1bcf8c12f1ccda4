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

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lid/augment.hpp"
#include "lid/spectrogram.hpp"
#include "lid/tensor.hpp"

namespace lid {

struct ManifestEntry {
  std::filesystem::path path;
  std::string label;
  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

using Manifest = std::vector<ManifestEntry>;

// One `path<TAB>label` line per entry. Relative paths are resolved against
// the manifest's directory on read; on write, paths below that directory are
// stored relative to it.
Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);

// Sorted, unique labels.
std::vector<std::string> manifest_labels(const Manifest& manifest);

struct DatasetSplit {
  Manifest train;
  Manifest validation;
  Manifest test;
  std::uint64_t seed = 0;
};

inline constexpr std::size_t kMinEntriesPerLabel = 10;

// Train/validation/test sizes for n items: 70/20/10 by largest remainder,
// ties going to the earlier set.
std::array<std::size_t, 3> split_sizes(std::size_t n);

// Stratified by label: each label's entries are shuffled with the seed and
// cut by split_sizes. Throws DataError for labels with fewer than 10 entries.
DatasetSplit split_manifest(const Manifest& entries, std::uint64_t seed);

// Audio -> image rendering knobs shared by prepare and the noise sweep.
struct RenderOptions {
  double segment_seconds = 10.0;
  StftConfig stft;
  GrayscaleMapping mapping;
  // Applied to each segment before rendering; kNoNoise SNR disables it.
  std::optional<NoiseSpec> noise;
  const AudioClip* music = nullptr;
};

// decode -> resample to the working rate -> segment -> (noise) -> image.
// Segment k of the source receives noise seed `noise.seed + k`.
std::vector<Spectrogram> render_wav(const std::filesystem::path& wav, const RenderOptions& options);

struct PrepareOptions {
  RenderOptions render;
  int threads = 1;
};

struct PrepareReport {
  Manifest outputs;
  // For each output, the index of the source entry it was rendered from.
  std::vector<std::size_t> output_sources;
  // Sources that could not be read or decoded, with the reason.
  std::vector<std::pair<std::filesystem::path, std::string>> errors;
  // Sources shorter than one segment.
  std::vector<std::filesystem::path> too_short;
};

// Renders every WAV entry to `out_dir/<label>/<stem>_<idx>.png`. Failures are
// collected in the report; throws DataError only when nothing was produced.
// Output order follows the input order.
PrepareReport prepare_spectrograms(const Manifest& wav_entries, const std::filesystem::path& out_dir,
                                   const PrepareOptions& options = {});

// Decoded images with integer labels, held in memory.
struct ImageDataset {
  std::vector<std::string> label_names;
  std::vector<Spectrogram> images;
  std::vector<int> labels;
  std::vector<std::filesystem::path> sources;
  std::size_t size() const { return images.size(); }
};

// Index of `label` in `label_names`; throws DataError naming the label when
// absent.
int label_index(const std::vector<std::string>& label_names, const std::string& label);

// Reads every PNG of the manifest. Unreadable files raise FormatError naming
// the path.
ImageDataset load_images(const Manifest& manifest, const std::vector<std::string>& label_names,
                         const ImageShape& expected = {});

struct Batch {
  Tensor images;  // [B, 1, H, W], pixels / 255
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

Batch make_batch(const ImageDataset& data, std::span<const std::size_t> indices);

// Yields batches over a dataset. With shuffling, epoch e visits the items in
// an order drawn from seed + e; the final partial batch is kept.
class BatchIterator {
 public:
  BatchIterator(const ImageDataset& data, std::size_t batch_size, std::optional<std::uint64_t> shuffle_seed);

  void start_epoch(std::uint64_t epoch);
  bool next(Batch& batch);
  std::size_t batches_per_epoch() const;
  const std::vector<std::size_t>& order() const { return order_; }

 private:
  const ImageDataset& data_;
  std::size_t batch_size_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

}  // namespace lid
