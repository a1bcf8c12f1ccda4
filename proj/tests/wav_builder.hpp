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
#include <cstring>
#include <string>
#include <vector>

namespace lid::testing {

inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

inline void put_tag(std::vector<std::uint8_t>& out, const char* tag) { out.insert(out.end(), tag, tag + 4); }

// Builds a canonical RIFF/WAVE file from raw interleaved sample bytes.
inline std::vector<std::uint8_t> make_wav(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                          std::uint16_t bits, const std::vector<std::uint8_t>& data) {
  std::vector<std::uint8_t> out;
  put_tag(out, "RIFF");
  put_u32(out, static_cast<std::uint32_t>(4 + 8 + 16 + 8 + data.size()));
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, format);
  put_u16(out, channels);
  put_u32(out, rate);
  const std::uint16_t align = static_cast<std::uint16_t>(channels * bits / 8);
  put_u32(out, rate * align);
  put_u16(out, align);
  put_u16(out, bits);
  put_tag(out, "data");
  put_u32(out, static_cast<std::uint32_t>(data.size()));
  out.insert(out.end(), data.begin(), data.end());
  return out;
}

inline std::vector<std::uint8_t> pcm16_bytes(const std::vector<std::int16_t>& samples) {
  std::vector<std::uint8_t> out;
  for (auto s : samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

inline std::vector<std::uint8_t> float32_bytes(const std::vector<float>& samples) {
  std::vector<std::uint8_t> out;
  for (float f : samples) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(out, bits);
  }
  return out;
}

}  // namespace lid::testing
