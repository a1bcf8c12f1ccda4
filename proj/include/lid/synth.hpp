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
#include <string>
#include <vector>

#include <json.hpp>

#include "lid/audio_io.hpp"

namespace lid {

// A pseudo-language: syllables of band-passed noise whose formants are
// shifted per tone state, with the state sequence drawn from a Markov chain.
struct SyntheticLanguageSpec {
  std::string name;
  // "base" or "extension"; lets one spec file describe both class sets.
  std::string group = "base";
  std::vector<double> formant_centers_hz;
  double syllable_rate_hz = 4.0;
  // Row-stochastic, one row per tone state.
  std::vector<std::vector<double>> transition_matrix;
  // Formant multiplier per tone state. Empty means an even spread on a log
  // scale over [0.75, 1.3].
  std::vector<double> state_pitch_factors;
  // Per-clip speaker variation: formants scaled by 1 + U[-j, j].
  double speaker_jitter = 0.04;

  std::size_t num_states() const { return transition_matrix.size(); }
  std::vector<double> pitch_factors() const;
  // Throws ConfigError naming the offending field.
  void validate() const;
  friend bool operator==(const SyntheticLanguageSpec&, const SyntheticLanguageSpec&) = default;
};

void to_json(nlohmann::json& j, const SyntheticLanguageSpec& s);
void from_json(const nlohmann::json& j, SyntheticLanguageSpec& s);

// A JSON array of spec objects. Throws ConfigError on schema problems.
std::vector<SyntheticLanguageSpec> parse_language_specs(const std::string& json_text);
std::vector<SyntheticLanguageSpec> read_language_specs(const std::filesystem::path& path);
std::vector<SyntheticLanguageSpec> select_group(const std::vector<SyntheticLanguageSpec>& specs,
                                                const std::string& group);

// The tone-state sequence used for one clip, exposed for tests.
struct SyllableEvent {
  std::size_t start = 0;
  std::size_t length = 0;
  std::size_t state = 0;
};

struct SynthClip {
  AudioClip clip;
  std::vector<SyllableEvent> syllables;
};

// One clip at the working rate. Deterministic in (spec, seconds, seed).
SynthClip synth_clip(const SyntheticLanguageSpec& spec, double seconds, std::uint64_t seed);

struct LabeledClip {
  AudioClip clip;
  std::string label;
  std::string name;  // "<label>_<index>"
};

// clips_per_language clips per spec, in spec order. Clip i of language l uses
// a seed derived from (seed, l, i) only, so any subset can be regenerated.
std::vector<LabeledClip> synth_corpus(const std::vector<SyntheticLanguageSpec>& specs, int clips_per_language,
                                      double clip_seconds, std::uint64_t seed, int threads = 1);

}  // namespace lid
