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
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "lid/audio_io.hpp"

namespace lid {

// Passing this SNR to any augmentation returns the clip unchanged.
inline constexpr double kNoNoise = std::numeric_limits<double>::infinity();

enum class NoiseKind { kWhite, kCrackle, kMusic };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kWhite;
  double snr_db = 10.0;
  double crackle_rate_hz = 2.0;
  std::uint64_t seed = 0;
};

// Gain g such that 10 log10(signal_power / (g^2 noise_power)) == snr_db.
double mixing_gain(double signal_power, double noise_power, double snr_db);

// 10 log10(P(clean) / P(noisy - clean)).
double measured_snr_db(const AudioClip& clean, const AudioClip& noisy);

// Zero-mean, unit-variance Gaussian samples.
std::vector<double> white_noise_track(std::size_t length, std::uint64_t seed);

// Unscaled crackle: impulsive bursts of 5-20 ms of Student-t noise under a
// decaying envelope, one per period 1 / rate_hz, each displaced by up to
// +-10% of the period.
std::vector<double> crackle_track(std::size_t length, int sample_rate_hz, double rate_hz, std::uint64_t seed);

AudioClip add_white_noise(const AudioClip& clip, double snr_db, std::uint64_t seed);
AudioClip add_crackle(const AudioClip& clip, double rate_hz, double snr_db, std::uint64_t seed);

// The music clip is looped when shorter than the speech clip.
AudioClip mix_background(const AudioClip& clip, const AudioClip& music, double snr_db);

// A few seconds of procedurally generated "music" (chord pads over a
// percussive pulse). Used when no music file is supplied.
AudioClip synth_music(double seconds, int sample_rate_hz, std::uint64_t seed);

// Dispatch on spec.kind. kMusic requires music; for the other kinds it is
// ignored.
AudioClip apply_noise(const AudioClip& clip, const NoiseSpec& spec, const AudioClip* music = nullptr);

}  // namespace lid
