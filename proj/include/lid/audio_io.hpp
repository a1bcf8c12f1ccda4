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
#include <span>
#include <vector>

namespace lid {

// Every clip is resampled to this rate right after decoding. Nyquist is then
// exactly 5 kHz, so all 129 STFT bins of a 256-point window are in band.
inline constexpr int kWorkingSampleRate = 10000;

// Mono sample buffer. Samples are kept in [-1, 1]; decoders and resamplers
// clamp to maintain that.
struct AudioClip {
  std::vector<double> samples;
  int sample_rate_hz = kWorkingSampleRate;

  double duration_seconds() const {
    return sample_rate_hz > 0 ? static_cast<double>(samples.size()) / sample_rate_hz : 0.0;
  }
  std::size_t size() const { return samples.size(); }
};

// Throws lid::Error if the clip violates its invariants.
void validate(const AudioClip& clip);

// Decodes a RIFF/WAVE container holding 16-bit PCM or 32-bit IEEE float
// samples. Multi-channel audio is averaged per frame. PCM values are scaled by
// 1/32768.
AudioClip decode_wav(std::span<const std::uint8_t> bytes);
AudioClip read_wav(const std::filesystem::path& path);

// 16-bit PCM, mono. Samples are quantized with round(x * 32768) clamped to the
// int16 range, so decode_wav(encode_wav(c)) is exact for already-quantized c.
std::vector<std::uint8_t> encode_wav(const AudioClip& clip);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

// Band-limited resampling with a Kaiser-windowed sinc kernel. The cutoff sits
// just below the lower of the two Nyquist frequencies. Output length is
// round(n * target / source).
AudioClip resample(const AudioClip& clip, int target_rate_hz);

// Non-overlapping segments of exactly segment_seconds * rate samples. The
// trailing remainder is dropped; nothing is ever padded.
std::vector<AudioClip> segment(const AudioClip& clip, double segment_seconds = 10.0);

// Mean squared sample value.
double signal_power(std::span<const double> samples);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

}  // namespace lid
