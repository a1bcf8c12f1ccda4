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

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "lid/audio_io.hpp"

namespace lid {

// 256-point window gives 129 bins; hop = 10000 / 50 gives 50 frames per
// second at the working rate.
inline constexpr int kWindowSize = 256;
inline constexpr int kHopSize = 200;
inline constexpr int kNumBins = kWindowSize / 2 + 1;
inline constexpr int kFramesPerSecond = kWorkingSampleRate / kHopSize;
inline constexpr int kSegmentWidth = 500;

struct StftConfig {
  int window_size = kWindowSize;
  int hop = kHopSize;
};

struct GrayscaleMapping {
  double db_floor = -80.0;
  double db_ceil = 0.0;
  double epsilon = 1e-10;
};

// Frame-major T x (window/2 + 1) grid of complex bins.
struct StftFrames {
  int window_size = kWindowSize;
  int hop = kHopSize;
  std::size_t num_frames = 0;
  std::vector<std::complex<double>> bins;

  int num_bins() const { return window_size / 2 + 1; }
  const std::complex<double>& at(std::size_t frame, int bin) const {
    return bins[frame * static_cast<std::size_t>(num_bins()) + static_cast<std::size_t>(bin)];
  }
};

// Row r is frequency bin r (low frequencies first), column c is frame c.
struct Spectrogram {
  int rows = kNumBins;
  int cols = 0;
  std::vector<std::uint8_t> pixels;

  Spectrogram() = default;
  Spectrogram(int r, int c) : rows(r), cols(c), pixels(static_cast<std::size_t>(r) * c, 0) {}

  std::uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * cols + c]; }
  std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * cols + c]; }
  friend bool operator==(const Spectrogram&, const Spectrogram&) = default;
};

// Periodic Hann: w[k] = 0.5 * (1 - cos(2 pi k / n)).
std::vector<double> hann_window(int n);

// Real-input DFT of arbitrary length; returns bins 0..n/2.
std::vector<std::complex<double>> real_fft(std::span<const double> input);

// Centered STFT: the signal is reflect-padded by window/2 on each side and
// frame t is centred on sample t * hop, for floor(n / hop) frames. A 10 s
// segment at 10 kHz therefore yields exactly 500 frames.
StftFrames stft(const AudioClip& clip, const StftConfig& config = {});

// Magnitudes are normalized by the window's coherent gain (sum(w) / 2) so a
// full-scale sinusoid sits at 0 dB.
std::uint8_t magnitude_to_intensity(double normalized_magnitude, const GrayscaleMapping& mapping = {});
Spectrogram magnitude_to_grayscale(const StftFrames& frames, const GrayscaleMapping& mapping = {});

// stft followed by magnitude_to_grayscale. The clip must already be at the
// working rate.
Spectrogram render_spectrogram(const AudioClip& clip, const StftConfig& config = {},
                               const GrayscaleMapping& mapping = {});

struct ImageShape {
  int rows = kNumBins;
  int cols = kSegmentWidth;
};

// 8-bit grayscale PNG, width = cols, height = rows, image row r holding
// spectrogram row r.
std::vector<std::uint8_t> encode_png(const Spectrogram& spec);
Spectrogram decode_png(std::span<const std::uint8_t> bytes, const ImageShape& expected = {});
void write_png(const Spectrogram& spec, const std::filesystem::path& path);
Spectrogram read_png(const std::filesystem::path& path, const ImageShape& expected = {});

}  // namespace lid
