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

#include "lid/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "lid/error.hpp"

namespace lid {
namespace {

void require_finite_or_none(double snr_db, std::string_view who) {
  if (std::isnan(snr_db) || snr_db == -kNoNoise) {
    throw Error(std::string(who) + ": snr_db must be finite or +inf");
  }
}

AudioClip add_scaled(const AudioClip& clip, const std::vector<double>& noise, double gain) {
  AudioClip out;
  out.sample_rate_hz = clip.sample_rate_hz;
  out.samples.resize(clip.samples.size());
  for (std::size_t i = 0; i < clip.samples.size(); ++i) {
    out.samples[i] = std::clamp(clip.samples[i] + gain * noise[i], -1.0, 1.0);
  }
  return out;
}

AudioClip add_at_snr(const AudioClip& clip, const std::vector<double>& noise, double snr_db, std::string_view who) {
  const double ps = signal_power(clip.samples);
  if (ps <= 0.0) throw Error(std::string(who) + ": input is silent, SNR is undefined");
  const double pn = signal_power(noise);
  if (pn <= 0.0) throw Error(std::string(who) + ": noise track is silent");
  return add_scaled(clip, noise, mixing_gain(ps, pn, snr_db));
}

}  // namespace

std::string_view to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kWhite:
      return "white";
    case NoiseKind::kCrackle:
      return "crackle";
    case NoiseKind::kMusic:
      return "music";
  }
  return "unknown";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "white") return NoiseKind::kWhite;
  if (name == "crackle") return NoiseKind::kCrackle;
  if (name == "music") return NoiseKind::kMusic;
  throw ConfigError("unknown noise kind '" + std::string(name) + "' (expected white, crackle or music)");
}

double mixing_gain(double signal_power, double noise_power, double snr_db) {
  if (snr_db == kNoNoise) return 0.0;
  return std::sqrt(signal_power / (noise_power * std::pow(10.0, snr_db / 10.0)));
}

double measured_snr_db(const AudioClip& clean, const AudioClip& noisy) {
  if (clean.samples.size() != noisy.samples.size()) throw Error("measured_snr_db: length mismatch");
  double ps = 0.0;
  double pn = 0.0;
  for (std::size_t i = 0; i < clean.samples.size(); ++i) {
    const double d = noisy.samples[i] - clean.samples[i];
    ps += clean.samples[i] * clean.samples[i];
    pn += d * d;
  }
  if (pn == 0.0) return kNoNoise;
  return 10.0 * std::log10(ps / pn);
}

std::vector<double> white_noise_track(std::size_t length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> noise(length);
  for (auto& v : noise) v = gauss(rng);
  return noise;
}

std::vector<double> crackle_track(std::size_t length, int sample_rate_hz, double rate_hz, std::uint64_t seed) {
  if (!(rate_hz > 0.0)) throw Error("crackle: rate_hz must be positive");
  if (sample_rate_hz <= 0) throw Error("crackle: sample rate must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-0.1, 0.1);
  std::uniform_real_distribution<double> burst_ms(5.0, 20.0);
  std::student_t_distribution<double> heavy(2.0);

  std::vector<double> noise(length, 0.0);
  const double period = 1.0 / rate_hz;
  const double duration = static_cast<double>(length) / sample_rate_hz;
  for (std::size_t k = 0;; ++k) {
    const double start_s = (static_cast<double>(k) + 0.5 + jitter(rng)) * period;
    if (start_s >= duration) break;
    const auto start = static_cast<std::size_t>(start_s * sample_rate_hz);
    const auto len = static_cast<std::size_t>(std::max(1.0, burst_ms(rng) * 1e-3 * sample_rate_hz));
    for (std::size_t i = 0; i < len && start + i < length; ++i) {
      const double envelope = std::exp(-4.0 * static_cast<double>(i) / static_cast<double>(len));
      noise[start + i] = envelope * std::clamp(heavy(rng), -20.0, 20.0);
    }
  }
  return noise;
}

AudioClip add_white_noise(const AudioClip& clip, double snr_db, std::uint64_t seed) {
  require_finite_or_none(snr_db, "add_white_noise");
  if (snr_db == kNoNoise) return clip;
  return add_at_snr(clip, white_noise_track(clip.samples.size(), seed), snr_db, "add_white_noise");
}

AudioClip add_crackle(const AudioClip& clip, double rate_hz, double snr_db, std::uint64_t seed) {
  require_finite_or_none(snr_db, "add_crackle");
  if (!(rate_hz > 0.0)) throw Error("add_crackle: rate_hz must be positive");
  if (snr_db == kNoNoise) return clip;
  return add_at_snr(clip, crackle_track(clip.samples.size(), clip.sample_rate_hz, rate_hz, seed), snr_db,
                    "add_crackle");
}

AudioClip mix_background(const AudioClip& clip, const AudioClip& music, double snr_db) {
  require_finite_or_none(snr_db, "mix_background");
  if (snr_db == kNoNoise) return clip;
  if (music.sample_rate_hz != clip.sample_rate_hz) {
    throw Error("mix_background: music at " + std::to_string(music.sample_rate_hz) + " Hz, speech at " +
                std::to_string(clip.sample_rate_hz) + " Hz");
  }
  if (music.samples.empty() || signal_power(music.samples) <= 0.0) {
    throw Error("mix_background: music is silent, SNR is undefined");
  }
  std::vector<double> looped(clip.samples.size());
  for (std::size_t i = 0; i < looped.size(); ++i) looped[i] = music.samples[i % music.samples.size()];
  const double pm = signal_power(looped);
  if (pm <= 0.0) throw Error("mix_background: music is silent over the clip span");
  return add_scaled(clip, looped, mixing_gain(signal_power(clip.samples), pm, snr_db));
}

AudioClip synth_music(double seconds, int sample_rate_hz, std::uint64_t seed) {
  if (!(seconds > 0.0) || sample_rate_hz <= 0) throw Error("synth_music: duration and rate must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> root_dist(45, 57);  // MIDI A2..A3
  std::uniform_int_distribution<int> progression(0, 3);
  std::uniform_real_distribution<double> tempo_dist(90.0, 150.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  constexpr int kChordOffsets[4][3] = {{0, 4, 7}, {5, 9, 12}, {7, 11, 14}, {-3, 0, 4}};
  const int root = root_dist(rng);
  const double beat = 60.0 / tempo_dist(rng);
  const auto n = static_cast<std::size_t>(seconds * sample_rate_hz);
  const double nyquist = 0.5 * sample_rate_hz;

  AudioClip out;
  out.sample_rate_hz = sample_rate_hz;
  out.samples.assign(n, 0.0);
  const auto beat_len = static_cast<std::size_t>(beat * sample_rate_hz);
  std::size_t bar_start = 0;
  while (bar_start < n) {
    const int chord = progression(rng);
    const std::size_t bar_len = 4 * beat_len;
    for (int voice = 0; voice < 3; ++voice) {
      const double f0 = 440.0 * std::pow(2.0, (root + kChordOffsets[chord][voice] - 69) / 12.0);
      for (int h = 1; h <= 4; ++h) {
        const double f = f0 * h;
        if (f >= nyquist) break;
        const double amp = 0.08 / h;
        for (std::size_t i = bar_start; i < std::min(n, bar_start + bar_len); ++i) {
          out.samples[i] += amp * std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / sample_rate_hz);
        }
      }
    }
    for (std::size_t b = 0; b < 4; ++b) {
      const std::size_t hit = bar_start + b * beat_len;
      const std::size_t hit_len = std::min<std::size_t>(beat_len / 2, static_cast<std::size_t>(0.08 * sample_rate_hz));
      for (std::size_t i = 0; i < hit_len && hit + i < n; ++i) {
        out.samples[hit + i] += 0.2 * std::exp(-30.0 * i / static_cast<double>(sample_rate_hz)) * gauss(rng);
      }
    }
    bar_start += bar_len;
  }
  for (auto& s : out.samples) s = std::clamp(s, -1.0, 1.0);
  return out;
}

AudioClip apply_noise(const AudioClip& clip, const NoiseSpec& spec, const AudioClip* music) {
  switch (spec.kind) {
    case NoiseKind::kWhite:
      return add_white_noise(clip, spec.snr_db, spec.seed);
    case NoiseKind::kCrackle:
      return add_crackle(clip, spec.crackle_rate_hz, spec.snr_db, spec.seed);
    case NoiseKind::kMusic: {
      if (music == nullptr) throw Error("apply_noise: music noise requires a music clip");
      return mix_background(clip, *music, spec.snr_db);
    }
  }
  throw Error("apply_noise: unknown noise kind");
}

}  // namespace lid
