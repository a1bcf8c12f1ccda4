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

#include "lid/audio_io.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>
#include <string_view>

#include "lid/error.hpp"

namespace lid {
namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  bool has(std::size_t n) const { return pos_ + n <= bytes_.size(); }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  void seek(std::size_t p) { pos_ = p; }

  std::string_view tag() {
    auto v = std::string_view(reinterpret_cast<const char*>(bytes_.data() + pos_), 4);
    pos_ += 4;
    return v;
  }
  std::uint16_t u16() {
    std::uint16_t v = static_cast<std::uint16_t>(bytes_[pos_] | (bytes_[pos_ + 1] << 8));
    pos_ += 2;
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | bytes_[pos_ + i];
    pos_ += 4;
    return v;
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

struct FormatChunk {
  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t block_align = 0;
  std::uint16_t bits_per_sample = 0;
};

FormatChunk parse_format(ByteReader& r, std::uint32_t size) {
  if (size < 16) throw DecodeError("fmt chunk: size " + std::to_string(size) + " < 16");
  const std::size_t start = r.pos();
  FormatChunk f;
  f.format = r.u16();
  f.channels = r.u16();
  f.sample_rate = r.u32();
  r.u32();  // byte rate
  f.block_align = r.u16();
  f.bits_per_sample = r.u16();
  if (f.format == kFormatExtensible) {
    if (size < 40) throw DecodeError("fmt chunk: extensible format with size " + std::to_string(size));
    r.u16();  // cbSize
    r.u16();  // valid bits
    r.u32();  // channel mask
    f.format = r.u16();  // first two bytes of the subformat GUID
  }
  r.seek(start + size);
  if (f.channels == 0) throw DecodeError("fmt chunk: zero channels");
  if (f.sample_rate == 0) throw DecodeError("fmt chunk: zero sample rate");
  return f;
}

double kaiser_bessel(double x, double beta) {
  // x in [-1, 1]
  const double arg = beta * std::sqrt(std::max(0.0, 1.0 - x * x));
  return std::cyl_bessel_i(0.0, arg) / std::cyl_bessel_i(0.0, beta);
}

// Tabulated sinc * Kaiser kernel over |u| < kZeroCrossings, sampled at
// kOversample points per zero crossing and read back with linear
// interpolation.
class SincKernel {
 public:
  static constexpr int kZeroCrossings = 16;
  static constexpr int kOversample = 512;
  static constexpr double kBeta = 8.6;

  SincKernel() : table_(kZeroCrossings * kOversample + 2) {
    for (std::size_t i = 0; i < table_.size(); ++i) {
      const double u = static_cast<double>(i) / kOversample;
      if (u >= kZeroCrossings) {
        table_[i] = 0.0;
        continue;
      }
      const double sinc = i == 0 ? 1.0 : std::sin(std::numbers::pi * u) / (std::numbers::pi * u);
      table_[i] = sinc * kaiser_bessel(u / kZeroCrossings, kBeta);
    }
  }

  double operator()(double u) const {
    u = std::abs(u);
    if (u >= kZeroCrossings) return 0.0;
    const double pos = u * kOversample;
    const auto idx = static_cast<std::size_t>(pos);
    const double frac = pos - static_cast<double>(idx);
    return table_[idx] + frac * (table_[idx + 1] - table_[idx]);
  }

 private:
  std::vector<double> table_;
};

const SincKernel& sinc_kernel() {
  static const SincKernel kernel;
  return kernel;
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) {
  out.insert(out.end(), tag.begin(), tag.end());
}

}  // namespace

void validate(const AudioClip& clip) {
  if (clip.sample_rate_hz <= 0) {
    throw Error("audio clip: sample rate must be positive, got " + std::to_string(clip.sample_rate_hz));
  }
  for (double s : clip.samples) {
    if (!(s >= -1.0 && s <= 1.0)) throw Error("audio clip: sample outside [-1, 1]");
  }
}

AudioClip decode_wav(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  if (!r.has(12)) throw DecodeError("RIFF header: file shorter than 12 bytes");
  if (r.tag() != "RIFF") throw DecodeError("RIFF header: missing 'RIFF' tag");
  r.u32();
  if (r.tag() != "WAVE") throw DecodeError("RIFF header: form type is not 'WAVE'");

  FormatChunk fmt;
  bool have_fmt = false;
  std::span<const std::uint8_t> data;
  bool have_data = false;
  while (r.has(8) && !have_data) {
    const std::string tag(r.tag());
    const std::uint32_t size = r.u32();
    if (r.remaining() < size) {
      throw DecodeError("'" + tag + "' chunk: declares " + std::to_string(size) + " bytes but only " +
                        std::to_string(r.remaining()) + " remain");
    }
    if (tag == "fmt ") {
      fmt = parse_format(r, size);
      have_fmt = true;
    } else if (tag == "data") {
      if (!have_fmt) throw DecodeError("data chunk: appears before fmt chunk");
      data = bytes.subspan(r.pos(), size);
      have_data = true;
    } else {
      r.seek(r.pos() + size);
    }
    if (!have_data && (size & 1U) && r.has(1)) r.seek(r.pos() + 1);
  }
  if (!have_fmt) throw DecodeError("fmt chunk: missing");
  if (!have_data) throw DecodeError("data chunk: missing");

  const bool pcm16 = fmt.format == kFormatPcm && fmt.bits_per_sample == 16;
  const bool float32 = fmt.format == kFormatFloat && fmt.bits_per_sample == 32;
  if (!pcm16 && !float32) {
    throw UnsupportedFormatError("unsupported WAVE encoding: format tag " + std::to_string(fmt.format) + ", " +
                                 std::to_string(fmt.bits_per_sample) + " bits per sample");
  }
  const std::size_t bytes_per_sample = fmt.bits_per_sample / 8;
  const std::size_t frame_bytes = bytes_per_sample * fmt.channels;
  if (fmt.block_align != frame_bytes) {
    throw DecodeError("fmt chunk: block align " + std::to_string(fmt.block_align) + " does not match " +
                      std::to_string(frame_bytes));
  }

  const std::size_t frames = data.size() / frame_bytes;
  AudioClip clip;
  clip.sample_rate_hz = static_cast<int>(fmt.sample_rate);
  clip.samples.resize(frames);
  const double inv_channels = 1.0 / fmt.channels;
  for (std::size_t f = 0; f < frames; ++f) {
    double acc = 0.0;
    for (std::size_t c = 0; c < fmt.channels; ++c) {
      const std::uint8_t* p = data.data() + f * frame_bytes + c * bytes_per_sample;
      if (pcm16) {
        const auto v = static_cast<std::int16_t>(static_cast<std::uint16_t>(p[0] | (p[1] << 8)));
        acc += static_cast<double>(v) / 32768.0;
      } else {
        std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                             (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
        float v;
        std::memcpy(&v, &bits, sizeof v);
        acc += std::isfinite(v) ? static_cast<double>(v) : 0.0;
      }
    }
    clip.samples[f] = std::clamp(fmt.channels == 1 ? acc : acc * inv_channels, -1.0, 1.0);
  }
  return clip;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  try {
    return decode_wav(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(path.string() + ": " + e.what());
  } catch (const UnsupportedFormatError& e) {
    throw UnsupportedFormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_wav(const AudioClip& clip) {
  if (clip.sample_rate_hz <= 0) throw Error("encode_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate_hz) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (double s : clip.samples) {
    const double q = std::clamp(std::round(s * 32768.0), -32768.0, 32767.0);
    put_u16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  return out;
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate_hz) {
  if (target_rate_hz <= 0) throw Error("resample: target rate must be positive");
  if (clip.sample_rate_hz <= 0) throw Error("resample: source rate must be positive");
  if (clip.sample_rate_hz == target_rate_hz) return clip;

  const std::int64_t src = clip.sample_rate_hz;
  const std::int64_t dst = target_rate_hz;
  const auto n_in = static_cast<std::int64_t>(clip.samples.size());
  const std::int64_t n_out = (n_in * dst + src / 2) / src;

  // Cutoff relative to the input Nyquist, with a little rolloff room.
  const double cutoff = 0.97 * std::min(1.0, static_cast<double>(dst) / static_cast<double>(src));
  const double half_width = SincKernel::kZeroCrossings / cutoff;
  const auto& kernel = sinc_kernel();

  AudioClip out;
  out.sample_rate_hz = target_rate_hz;
  out.samples.resize(static_cast<std::size_t>(n_out));
  for (std::int64_t n = 0; n < n_out; ++n) {
    // Input position n * src / dst, split into integer and fractional parts.
    const std::int64_t num = n * src;
    const std::int64_t base = num / dst;
    const double frac = static_cast<double>(num % dst) / static_cast<double>(dst);
    const double centre = static_cast<double>(base) + frac;
    const auto lo = std::max<std::int64_t>(0, static_cast<std::int64_t>(std::ceil(centre - half_width)));
    const auto hi = std::min<std::int64_t>(n_in - 1, static_cast<std::int64_t>(std::floor(centre + half_width)));
    double acc = 0.0;
    for (std::int64_t k = lo; k <= hi; ++k) {
      acc += clip.samples[static_cast<std::size_t>(k)] * kernel(cutoff * (static_cast<double>(k) - centre));
    }
    out.samples[static_cast<std::size_t>(n)] = std::clamp(cutoff * acc, -1.0, 1.0);
  }
  return out;
}

std::vector<AudioClip> segment(const AudioClip& clip, double segment_seconds) {
  if (!(segment_seconds > 0.0)) throw Error("segment: segment length must be positive");
  const auto seg_len = static_cast<std::size_t>(std::llround(segment_seconds * clip.sample_rate_hz));
  std::vector<AudioClip> out;
  if (seg_len == 0) return out;
  const std::size_t count = clip.samples.size() / seg_len;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    AudioClip piece;
    piece.sample_rate_hz = clip.sample_rate_hz;
    const auto first = clip.samples.begin() + static_cast<std::ptrdiff_t>(i * seg_len);
    piece.samples.assign(first, first + static_cast<std::ptrdiff_t>(seg_len));
    out.push_back(std::move(piece));
  }
  return out;
}

double signal_power(std::span<const double> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double s : samples) acc += s * s;
  return acc / static_cast<double>(samples.size());
}

}  // namespace lid
