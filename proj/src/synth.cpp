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

#include "lid/synth.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "lid/error.hpp"

namespace lid {
namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// RBJ constant-peak band-pass biquad.
struct BandPass {
  double b0, b2, a1, a2;
  double x1 = 0, x2 = 0, y1 = 0, y2 = 0;

  BandPass(double center_hz, double q, double rate_hz) {
    const double w0 = 2.0 * std::numbers::pi * center_hz / rate_hz;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    b0 = alpha / a0;
    b2 = -alpha / a0;
    a1 = -2.0 * std::cos(w0) / a0;
    a2 = (1.0 - alpha) / a0;
  }
  double operator()(double x) {
    const double y = b0 * x + b2 * x2 - a1 * y1 - a2 * y2;
    x2 = x1;
    x1 = x;
    y2 = y1;
    y1 = y;
    return y;
  }
};

constexpr double kFormantQ = 12.0;
constexpr double kFormantWeights[3] = {1.0, 0.6, 0.4};
constexpr double kBackgroundLevel = 0.003;

}  // namespace

std::vector<double> SyntheticLanguageSpec::pitch_factors() const {
  if (!state_pitch_factors.empty()) return state_pitch_factors;
  const std::size_t s = num_states();
  std::vector<double> f(s, 1.0);
  if (s < 2) return f;
  const double lo = std::log(0.75);
  const double hi = std::log(1.3);
  for (std::size_t i = 0; i < s; ++i) f[i] = std::exp(lo + (hi - lo) * static_cast<double>(i) / (s - 1));
  return f;
}

void SyntheticLanguageSpec::validate() const {
  const std::string who = "language '" + name + "': ";
  if (name.empty()) throw ConfigError("language spec: field 'name' must be non-empty");
  if (formant_centers_hz.size() < 2 || formant_centers_hz.size() > 3) {
    throw ConfigError(who + "field 'formant_centers_hz' needs 2 or 3 values");
  }
  if (!(syllable_rate_hz > 0.0)) throw ConfigError(who + "field 'syllable_rate_hz' must be positive");
  const std::size_t s = num_states();
  if (s == 0) throw ConfigError(who + "field 'transition_matrix' is empty");
  for (std::size_t r = 0; r < s; ++r) {
    const auto& row = transition_matrix[r];
    if (row.size() != s) throw ConfigError(who + "field 'transition_matrix' is not square");
    double sum = 0.0;
    for (double p : row) {
      if (!(p >= 0.0)) throw ConfigError(who + "field 'transition_matrix' has a negative entry");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) {
      throw ConfigError(who + "field 'transition_matrix' row " + std::to_string(r) + " sums to " +
                        std::to_string(sum));
    }
  }
  if (!state_pitch_factors.empty() && state_pitch_factors.size() != s) {
    throw ConfigError(who + "field 'state_pitch_factors' needs one value per state");
  }
  for (double p : pitch_factors()) {
    if (!(p > 0.0)) throw ConfigError(who + "field 'state_pitch_factors' must be positive");
  }
  if (!(speaker_jitter >= 0.0 && speaker_jitter < 0.5)) {
    throw ConfigError(who + "field 'speaker_jitter' must lie in [0, 0.5)");
  }
  const double top = *std::max_element(formant_centers_hz.begin(), formant_centers_hz.end());
  const double bottom = *std::min_element(formant_centers_hz.begin(), formant_centers_hz.end());
  const auto factors = pitch_factors();
  const double fmax = *std::max_element(factors.begin(), factors.end());
  const double fmin = *std::min_element(factors.begin(), factors.end());
  if (!(bottom > 0.0) || top * fmax * (1.0 + speaker_jitter) >= 0.5 * kWorkingSampleRate) {
    throw ConfigError(who + "field 'formant_centers_hz' must stay within (0, 5000) Hz after pitch and speaker shifts");
  }
  if (bottom * fmin * (1.0 - speaker_jitter) <= 0.0) {
    throw ConfigError(who + "field 'formant_centers_hz' must be positive");
  }
}

void to_json(nlohmann::json& j, const SyntheticLanguageSpec& s) {
  j = nlohmann::json{{"name", s.name},
                     {"group", s.group},
                     {"formant_centers_hz", s.formant_centers_hz},
                     {"syllable_rate_hz", s.syllable_rate_hz},
                     {"transition_matrix", s.transition_matrix},
                     {"speaker_jitter", s.speaker_jitter}};
  if (!s.state_pitch_factors.empty()) j["state_pitch_factors"] = s.state_pitch_factors;
}

void from_json(const nlohmann::json& j, SyntheticLanguageSpec& s) {
  static const std::set<std::string> kKeys = {"name",          "group", "formant_centers_hz", "syllable_rate_hz",
                                              "transition_matrix", "state_pitch_factors", "speaker_jitter"};
  if (!j.is_object()) throw ConfigError("language spec: expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.count(key)) throw ConfigError("language spec: unknown field '" + key + "'");
  }
  for (const char* required : {"name", "formant_centers_hz", "syllable_rate_hz", "transition_matrix"}) {
    if (!j.contains(required)) throw ConfigError(std::string("language spec: missing field '") + required + "'");
  }
  auto field = [&](const char* key, auto& out) {
    try {
      j.at(key).get_to(out);
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("language spec: field '") + key + "' has the wrong type");
    }
  };
  s = SyntheticLanguageSpec{};
  field("name", s.name);
  if (j.contains("group")) field("group", s.group);
  field("formant_centers_hz", s.formant_centers_hz);
  field("syllable_rate_hz", s.syllable_rate_hz);
  field("transition_matrix", s.transition_matrix);
  if (j.contains("state_pitch_factors")) field("state_pitch_factors", s.state_pitch_factors);
  if (j.contains("speaker_jitter")) field("speaker_jitter", s.speaker_jitter);
}

std::vector<SyntheticLanguageSpec> parse_language_specs(const std::string& json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("language specs: invalid JSON: ") + e.what());
  }
  if (!doc.is_array()) throw ConfigError("language specs: expected a JSON array of spec objects");
  std::vector<SyntheticLanguageSpec> specs;
  std::set<std::string> names;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    SyntheticLanguageSpec s;
    try {
      s = doc[i].get<SyntheticLanguageSpec>();
      s.validate();
    } catch (const ConfigError& e) {
      throw ConfigError("language specs[" + std::to_string(i) + "]: " + e.what());
    }
    if (!names.insert(s.name).second) throw ConfigError("language specs: duplicate name '" + s.name + "'");
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<SyntheticLanguageSpec> read_language_specs(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_language_specs(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::vector<SyntheticLanguageSpec> select_group(const std::vector<SyntheticLanguageSpec>& specs,
                                                const std::string& group) {
  if (group.empty() || group == "all") return specs;
  std::vector<SyntheticLanguageSpec> out;
  for (const auto& s : specs) {
    if (s.group == group) out.push_back(s);
  }
  if (out.empty()) throw ConfigError("no language specs in group '" + group + "'");
  return out;
}

SynthClip synth_clip(const SyntheticLanguageSpec& spec, double seconds, std::uint64_t seed) {
  spec.validate();
  if (!(seconds > 0.0)) throw ConfigError("synth_clip: duration must be positive");
  const double rate = kWorkingSampleRate;
  const auto n = static_cast<std::size_t>(std::llround(seconds * rate));
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  const double speaker = 1.0 + spec.speaker_jitter * (2.0 * unit(rng) - 1.0);
  const double tempo = 0.9 + 0.2 * unit(rng);
  const double level = 0.25 + 0.35 * unit(rng);
  const double period = 1.0 / (spec.syllable_rate_hz * tempo);
  const auto factors = spec.pitch_factors();
  const std::size_t states = spec.num_states();

  SynthClip out;
  out.clip.sample_rate_hz = kWorkingSampleRate;
  out.clip.samples.assign(n, 0.0);
  auto& x = out.clip.samples;

  std::size_t state = std::uniform_int_distribution<std::size_t>(0, states - 1)(rng);
  double t = period * unit(rng) * 0.5;
  while (t * rate < static_cast<double>(n)) {
    const double slot = period * (0.9 + 0.2 * unit(rng));
    const double voiced = slot * (0.55 + 0.2 * unit(rng));
    const auto start = static_cast<std::size_t>(t * rate);
    const auto len = std::min(static_cast<std::size_t>(voiced * rate), n - start);
    out.syllables.push_back({start, len, state});

    const auto attack = static_cast<std::size_t>(0.01 * rate);
    const auto release = static_cast<std::size_t>(0.02 * rate);
    for (std::size_t f = 0; f < spec.formant_centers_hz.size(); ++f) {
      const double center = spec.formant_centers_hz[f] * factors[state] * speaker;
      BandPass first(center, kFormantQ, rate);
      BandPass second(center, kFormantQ, rate);
      for (std::size_t i = 0; i < len; ++i) {
        double env = 1.0;
        if (i < attack) env = 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / attack);
        if (len - i <= release) {
          env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - i) / release);
        }
        x[start + i] += kFormantWeights[f] * env * second(first(gauss(rng)));
      }
    }
    std::discrete_distribution<std::size_t> step(spec.transition_matrix[state].begin(),
                                                 spec.transition_matrix[state].end());
    state = step(rng);
    t += slot;
  }

  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  const double gain = peak > 0.0 ? level / peak : 0.0;
  for (auto& v : x) v = std::clamp(v * gain + kBackgroundLevel * gauss(rng), -1.0, 1.0);
  return out;
}

std::vector<LabeledClip> synth_corpus(const std::vector<SyntheticLanguageSpec>& specs, int clips_per_language,
                                      double clip_seconds, std::uint64_t seed, int threads) {
  if (specs.size() < 2) throw ConfigError("synth_corpus: at least 2 language specs are required");
  if (clips_per_language < 1) throw ConfigError("synth_corpus: clips per language must be >= 1");
  std::set<std::string> names;
  for (const auto& s : specs) {
    s.validate();
    if (!names.insert(s.name).second) throw ConfigError("synth_corpus: duplicate language name '" + s.name + "'");
  }
  for (std::size_t a = 0; a < specs.size(); ++a) {
    for (std::size_t b = a + 1; b < specs.size(); ++b) {
      auto pa = specs[a], pb = specs[b];
      pa.name = pb.name = "";
      pa.group = pb.group = "";
      if (pa == pb) throw ConfigError("synth_corpus: languages '" + specs[a].name + "' and '" + specs[b].name +
                                      "' have identical parameters");
    }
  }

  const std::size_t per = static_cast<std::size_t>(clips_per_language);
  std::vector<LabeledClip> out(specs.size() * per);
  auto work = [&](std::size_t k) {
    const std::size_t lang = k / per;
    const std::size_t idx = k % per;
    const std::uint64_t clip_seed = splitmix64(splitmix64(seed ^ splitmix64(lang + 1)) + idx);
    out[k].clip = synth_clip(specs[lang], clip_seconds, clip_seed).clip;
    out[k].label = specs[lang].name;
    out[k].name = specs[lang].name + "_" + std::to_string(idx);
  };
  const std::size_t workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1) {
    for (std::size_t k = 0; k < out.size(); ++k) work(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < out.size(); k = next++) work(k);
      });
    }
  }
  return out;
}

}  // namespace lid
