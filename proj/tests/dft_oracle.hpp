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

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numbers>
#include <span>
#include <vector>

namespace lid::testing {

// Textbook O(n^2) DFT, bins 0..n/2.
inline std::vector<std::complex<double>> naive_dft(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n / 2 + 1);
  for (std::size_t k = 0; k < out.size(); ++k) {
    std::complex<double> acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>((k * j) % n) / static_cast<double>(n);
      acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
    }
    out[k] = acc;
  }
  return out;
}

// Independent framing: reflect without edge repetition, frame t centred on
// t * hop, periodic Hann window, naive DFT per frame.
inline std::vector<std::vector<std::complex<double>>> naive_stft(std::span<const double> x, int window = 256,
                                                                 int hop = 200) {
  const long n = static_cast<long>(x.size());
  auto reflect = [&](long j) {
    if (j < 0) j = -j;
    if (j >= n) j = 2 * (n - 1) - j;
    return x[static_cast<std::size_t>(j)];
  };
  std::vector<std::vector<std::complex<double>>> frames;
  for (long t = 0; t < n / hop; ++t) {
    std::vector<double> frame(static_cast<std::size_t>(window));
    for (int k = 0; k < window; ++k) {
      const double w = 0.5 * (1 - std::cos(2 * std::numbers::pi * k / static_cast<double>(window)));
      frame[static_cast<std::size_t>(k)] = w * reflect(t * hop - window / 2 + k);
    }
    frames.push_back(naive_dft(frame));
  }
  return frames;
}

// Magnitude of the DFT at an arbitrary frequency, evaluated directly.
inline double dft_magnitude_at(std::span<const double> x, double freq_hz, double rate_hz) {
  std::complex<double> acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    const double angle = -2.0 * std::numbers::pi * freq_hz * static_cast<double>(j) / rate_hz;
    acc += x[j] * std::complex<double>(std::cos(angle), std::sin(angle));
  }
  return std::abs(acc);
}

inline std::vector<char> read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace lid::testing
