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

#include "lgmnet/autodiff.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace lgmnet {

inline constexpr int kNumClasses = 100;
inline constexpr int kSamplesPerClass = 20;

enum class DatasetKind { kBlobs, kLines, kSpirals, kCircles };

std::string to_string(DatasetKind kind);
/// Throws std::invalid_argument for unknown names.
DatasetKind parse_dataset_kind(std::string_view name);

struct ClassSamples {
  int class_id = 0;
  Matrix<float> points;  // kSamplesPerClass x 2
};

/// 100 classes x 20 points in the plane. Class geometry per kind:
///
///   blobs    isotropic Gaussian (std 0.03) around a center uniform in
///            [-1, 1]^2; centers at least 0.12 apart.
///   lines    line through the origin at angle a in [0, pi); points at
///            signed distance |t| in [0.2, 1.0] along it, perpendicular
///            noise std 0.002.
///   spirals  arm r = 0.15 + 0.85 t, angle = phase + pi t, t in [0, 1];
///            radial noise std 0.002.
///   circles  circle at the origin, radius in [0.15, 1.0]; radial noise
///            std 0.002, angle uniform.
///
/// Angles, phases and radii are stratified: class parameter i is drawn
/// from the middle half of the i-th of 100 equal strata, so neighbouring
/// classes never coincide. Class ids are then shuffled.
struct SyntheticDataset {
  DatasetKind kind = DatasetKind::kBlobs;
  std::uint64_t seed = 0;
  std::vector<ClassSamples> classes;
};

/// Every generated coordinate lies in [-bound, bound].
float coordinate_bound(DatasetKind kind);

SyntheticDataset generate_dataset(DatasetKind kind, std::uint64_t seed);

/// CSV with header `class_id,x,y`; reals printed with enough digits to
/// round-trip 32-bit floats exactly.
void write_dataset_csv(const SyntheticDataset& dataset, std::ostream& out);
/// Parses the CSV written above. `kind` and `seed` are caller metadata
/// (the file does not carry them). Throws std::runtime_error on bad input.
SyntheticDataset read_dataset_csv(std::istream& in, DatasetKind kind, std::uint64_t seed = 0);

}  // namespace lgmnet
