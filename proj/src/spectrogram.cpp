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

#include "lid/spectrogram.hpp"

#include <fftw3.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <string>

#include "lid/error.hpp"

namespace lid {
namespace {

// FFTW plans are created once per size. Planning is not thread-safe, execution
// with the new-array interface is.
class RealFftPlans {
 public:
  ~RealFftPlans() {
    for (auto& [n, plan] : plans_) fftw_destroy_plan(plan);
  }

  fftw_plan get(int n) {
    std::lock_guard lock(mutex_);
    auto it = plans_.find(n);
    if (it != plans_.end()) return it->second;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<fftw_complex> out(static_cast<std::size_t>(n / 2 + 1));
    fftw_plan plan = fftw_plan_dft_r2c_1d(n, in.data(), out.data(), FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (plan == nullptr) throw Error("FFTW failed to plan a transform of size " + std::to_string(n));
    plans_.emplace(n, plan);
    return plan;
  }

 private:
  std::mutex mutex_;
  std::map<int, fftw_plan> plans_;
};

RealFftPlans& fft_plans() {
  static RealFftPlans plans;
  return plans;
}

constexpr std::uint8_t kPngSignature[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1A, '\n'};

std::uint32_t read_be32(const std::uint8_t* p) {
  return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
         (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

}  // namespace

std::vector<double> hann_window(int n) {
  if (n < 2) throw Error("hann_window: n must be >= 2");
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) w[k] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * k / n));
  return w;
}

std::vector<std::complex<double>> real_fft(std::span<const double> input) {
  const int n = static_cast<int>(input.size());
  if (n < 1) throw Error("real_fft: empty input");
  fftw_plan plan = fft_plans().get(n);
  std::vector<double> in(input.begin(), input.end());
  std::vector<std::complex<double>> out(static_cast<std::size_t>(n / 2 + 1));
  fftw_execute_dft_r2c(plan, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
  return out;
}

StftFrames stft(const AudioClip& clip, const StftConfig& config) {
  const int window = config.window_size;
  const int hop = config.hop;
  if (window < 2 || hop < 1) throw Error("stft: window must be >= 2 and hop >= 1");
  const std::size_t n = clip.samples.size();
  const std::size_t pad = static_cast<std::size_t>(window / 2);
  const std::size_t frames = n / static_cast<std::size_t>(hop);
  if (n <= pad || frames == 0) {
    throw Error("stft: clip of " + std::to_string(n) + " samples is shorter than one " + std::to_string(window) +
                "-sample window");
  }

  // Reflect padding without edge repetition: x[-k] = x[k].
  std::vector<double> padded(n + 2 * pad);
  for (std::size_t i = 0; i < n; ++i) padded[pad + i] = clip.samples[i];
  for (std::size_t k = 1; k <= pad; ++k) {
    padded[pad - k] = clip.samples[k];
    padded[pad + n - 1 + k] = clip.samples[n - 1 - k];
  }

  const auto w = hann_window(window);
  StftFrames out;
  out.window_size = window;
  out.hop = hop;
  out.num_frames = frames;
  const auto bins = static_cast<std::size_t>(out.num_bins());
  out.bins.resize(frames * bins);

  fftw_plan plan = fft_plans().get(window);
  std::vector<double> frame(static_cast<std::size_t>(window));
  for (std::size_t t = 0; t < frames; ++t) {
    const double* src = padded.data() + t * static_cast<std::size_t>(hop);
    for (int k = 0; k < window; ++k) frame[k] = src[k] * w[k];
    fftw_execute_dft_r2c(plan, frame.data(), reinterpret_cast<fftw_complex*>(out.bins.data() + t * bins));
  }
  return out;
}

std::uint8_t magnitude_to_intensity(double normalized_magnitude, const GrayscaleMapping& mapping) {
  const double db = 20.0 * std::log10(std::abs(normalized_magnitude) + mapping.epsilon);
  const double scaled = 255.0 * (db - mapping.db_floor) / (mapping.db_ceil - mapping.db_floor);
  return static_cast<std::uint8_t>(std::clamp(std::round(scaled), 0.0, 255.0));
}

Spectrogram magnitude_to_grayscale(const StftFrames& frames, const GrayscaleMapping& mapping) {
  if (!(mapping.db_ceil > mapping.db_floor)) throw ConfigError("grayscale mapping: db_ceil must exceed db_floor");
  const auto w = hann_window(frames.window_size);
  double coherent_gain = 0.0;
  for (double v : w) coherent_gain += v;
  coherent_gain *= 0.5;

  Spectrogram spec(frames.num_bins(), static_cast<int>(frames.num_frames));
  for (std::size_t t = 0; t < frames.num_frames; ++t) {
    for (int k = 0; k < frames.num_bins(); ++k) {
      spec.at(k, static_cast<int>(t)) = magnitude_to_intensity(std::abs(frames.at(t, k)) / coherent_gain, mapping);
    }
  }
  return spec;
}

Spectrogram render_spectrogram(const AudioClip& clip, const StftConfig& config, const GrayscaleMapping& mapping) {
  return magnitude_to_grayscale(stft(clip, config), mapping);
}

std::vector<std::uint8_t> encode_png(const Spectrogram& spec) {
  if (spec.rows <= 0 || spec.cols <= 0 ||
      spec.pixels.size() != static_cast<std::size_t>(spec.rows) * static_cast<std::size_t>(spec.cols)) {
    throw ShapeError("encode_png: pixel buffer does not match " + std::to_string(spec.rows) + "x" +
                     std::to_string(spec.cols));
  }
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(spec.cols);
  image.height = static_cast<png_uint_32>(spec.rows);
  image.format = PNG_FORMAT_GRAY;

  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, spec.pixels.data(), spec.cols, nullptr)) {
    throw IoError(std::string("encode_png: ") + image.message);
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, spec.pixels.data(), spec.cols, nullptr)) {
    throw IoError(std::string("encode_png: ") + image.message);
  }
  out.resize(size);
  return out;
}

Spectrogram decode_png(std::span<const std::uint8_t> bytes, const ImageShape& expected) {
  // Check the IHDR chunk directly; the simplified libpng reader would
  // silently expand or narrow other bit depths.
  if (bytes.size() < 33 || !std::equal(std::begin(kPngSignature), std::end(kPngSignature), bytes.begin())) {
    throw FormatError("decode_png: not a PNG file");
  }
  if (std::string_view(reinterpret_cast<const char*>(bytes.data() + 12), 4) != "IHDR") {
    throw FormatError("decode_png: IHDR chunk missing");
  }
  const auto width = read_be32(bytes.data() + 16);
  const auto height = read_be32(bytes.data() + 20);
  const int bit_depth = bytes[24];
  const int color_type = bytes[25];
  if (bit_depth != 8 || color_type != PNG_COLOR_TYPE_GRAY) {
    throw FormatError("decode_png: expected 8-bit grayscale, got bit depth " + std::to_string(bit_depth) +
                      " color type " + std::to_string(color_type));
  }
  if (static_cast<int>(height) != expected.rows || static_cast<int>(width) != expected.cols) {
    throw FormatError("decode_png: expected " + std::to_string(expected.cols) + "x" + std::to_string(expected.rows) +
                      " image, got " + std::to_string(width) + "x" + std::to_string(height));
  }

  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    throw FormatError(std::string("decode_png: ") + image.message);
  }
  image.format = PNG_FORMAT_GRAY;
  Spectrogram spec(static_cast<int>(height), static_cast<int>(width));
  if (!png_image_finish_read(&image, nullptr, spec.pixels.data(), static_cast<png_int_32>(width), nullptr)) {
    const std::string message = image.message;
    png_image_free(&image);
    throw FormatError("decode_png: " + message);
  }
  return spec;
}

void write_png(const Spectrogram& spec, const std::filesystem::path& path) {
  const auto bytes = encode_png(spec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

Spectrogram read_png(const std::filesystem::path& path, const ImageShape& expected) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_png(bytes, expected);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lid
