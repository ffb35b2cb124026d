// Copyright 2026 The lgmnet Authors.
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

// Binary checkpoint of a TrainingState.
//
// Layout (all integers little-endian):
//   "LGMN"  u32 version  u64 tensor count
//   per tensor: u32 name length, UTF-8 name, u32 rank, rank x u64 extents,
//               f32 payload in row-major order
//   u64 FNV-1a checksum of every preceding byte
//
// Tensors: "param/<name>", "adam/m/<name>", "adam/v/<name>",
// "itn<i>/running_mean", "itn<i>/running_var" and a few "meta/..." records
// holding the configuration. 64-bit counters are stored as four 16-bit
// limbs so every value is exact in f32.

#include "lgmnet/training.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

namespace lgmnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::vector<std::uint8_t> serialize_checkpoint(const TrainingState& state);

/// Parses and validates the whole buffer before building any state.
TrainingState deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const TrainingState& state, const std::filesystem::path& path);
TrainingState load_checkpoint(const std::filesystem::path& path);

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size);

}  // namespace lgmnet
