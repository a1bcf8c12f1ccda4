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

#include "lid/crnn.hpp"

namespace lid {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// A model together with the optimizer step count it was saved at. Adam
// moments travel inside the model's parameters.
struct Checkpoint {
  CrnnModel model;
  std::int64_t optimizer_step = 0;
};

// Little-endian binary container, see docs/checkpoint_format.md. The output
// is a pure function of the model, so equal models give equal bytes.
std::vector<std::uint8_t> serialize_checkpoint(const CrnnModel& model, std::int64_t optimizer_step = 0);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const CrnnModel& model, const std::filesystem::path& path, std::int64_t optimizer_step = 0);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace lid
