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

#include "lgmnet/synthetic.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

namespace lgmnet {
namespace {

constexpr double kPi = std::numbers::pi;

constexpr double kBlobStd = 0.03;
constexpr double kBlobMinCenterDistance = 0.12;
constexpr double kLineNoise = 0.002;
constexpr double kLineInner = 0.2;
constexpr double kLineOuter = 1.0;
constexpr double kSpiralInner = 0.15;
constexpr double kSpiralGrowth = 0.85;
constexpr double kSpiralTurn = kPi;
constexpr double kSpiralNoise = 0.002;
constexpr double kCircleMinRadius = 0.15;
constexpr double kCircleMaxRadius = 1.0;
constexpr double kCircleNoise = 0.002;

using Rng = std::mt19937_64;

/// One value per class from the middle half of each of kNumClasses strata
/// over [lo, hi).
std::vector<double> stratified(double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> jitter(0.25, 0.75);
  const double width = (hi - lo) / kNumClasses;
  std::vector<double> values(kNumClasses);
  for (int i = 0; i < kNumClasses; ++i) values[i] = lo + (i + jitter(rng)) * width;
  std::shuffle(values.begin(), values.end(), rng);
  return values;
}

Matrix<float> blob(double cx, double cy, Rng& rng) {
  std::normal_distribution<double> noise(0.0, kBlobStd);
  Matrix<float> pts(kSamplesPerClass, 2);
  for (int i = 0; i < kSamplesPerClass; ++i) {
    pts(i, 0) = static_cast<float>(cx + noise(rng));
    pts(i, 1) = static_cast<float>(cy + noise(rng));
  }
  return pts;
}

Matrix<float> line(double angle, Rng& rng) {
  std::uniform_real_distribution<double> along(kLineInner, kLineOuter);
  std::bernoulli_distribution side(0.5);
  std::normal_distribution<double> noise(0.0, kLineNoise);
  const double dx = std::cos(angle), dy = std::sin(angle);
  Matrix<float> pts(kSamplesPerClass, 2);
  for (int i = 0; i < kSamplesPerClass; ++i) {
    double t = along(rng);
    if (side(rng)) t = -t;
    const double n = noise(rng);
    pts(i, 0) = static_cast<float>(t * dx - n * dy);
    pts(i, 1) = static_cast<float>(t * dy + n * dx);
  }
  return pts;
}

Matrix<float> spiral(double phase, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, kSpiralNoise);
  Matrix<float> pts(kSamplesPerClass, 2);
  for (int i = 0; i < kSamplesPerClass; ++i) {
    const double t = unit(rng);
    const double r = kSpiralInner + kSpiralGrowth * t + noise(rng);
    const double a = phase + kSpiralTurn * t;
    pts(i, 0) = static_cast<float>(r * std::cos(a));
    pts(i, 1) = static_cast<float>(r * std::sin(a));
  }
  return pts;
}

Matrix<float> circle(double radius, Rng& rng) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * kPi);
  std::normal_distribution<double> noise(0.0, kCircleNoise);
  Matrix<float> pts(kSamplesPerClass, 2);
  for (int i = 0; i < kSamplesPerClass; ++i) {
    const double a = angle(rng);
    const double r = radius + noise(rng);
    pts(i, 0) = static_cast<float>(r * std::cos(a));
    pts(i, 1) = static_cast<float>(r * std::sin(a));
  }
  return pts;
}

std::vector<std::pair<double, double>> blob_centers(Rng& rng) {
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::vector<std::pair<double, double>> centers;
  while (static_cast<int>(centers.size()) < kNumClasses) {
    const double x = coord(rng), y = coord(rng);
    const bool clear = std::none_of(centers.begin(), centers.end(), [&](const auto& c) {
      return std::hypot(c.first - x, c.second - y) < kBlobMinCenterDistance;
    });
    if (clear) centers.emplace_back(x, y);
  }
  return centers;
}

}  // namespace

std::string to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs: return "blobs";
    case DatasetKind::kLines: return "lines";
    case DatasetKind::kSpirals: return "spirals";
    case DatasetKind::kCircles: return "circles";
  }
  return "unknown";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "blobs") return DatasetKind::kBlobs;
  if (name == "lines") return DatasetKind::kLines;
  if (name == "spirals") return DatasetKind::kSpirals;
  if (name == "circles") return DatasetKind::kCircles;
  throw std::invalid_argument("unknown dataset '" + std::string(name) + "'");
}

float coordinate_bound(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::kBlobs: return 1.0f + 8.0f * static_cast<float>(kBlobStd);
    case DatasetKind::kLines: return static_cast<float>(kLineOuter + 10 * kLineNoise);
    case DatasetKind::kSpirals: return static_cast<float>(kSpiralInner + kSpiralGrowth + 10 * kSpiralNoise);
    case DatasetKind::kCircles: return static_cast<float>(kCircleMaxRadius + 10 * kCircleNoise);
  }
  return 0.0f;
}

SyntheticDataset generate_dataset(DatasetKind kind, std::uint64_t seed) {
  Rng rng(seed);
  SyntheticDataset ds;
  ds.kind = kind;
  ds.seed = seed;
  ds.classes.reserve(kNumClasses);

  switch (kind) {
    case DatasetKind::kBlobs:
      for (const auto& [x, y] : blob_centers(rng)) ds.classes.push_back({0, blob(x, y, rng)});
      break;
    case DatasetKind::kLines:
      for (double a : stratified(0.0, kPi, rng)) ds.classes.push_back({0, line(a, rng)});
      break;
    case DatasetKind::kSpirals:
      for (double p : stratified(0.0, 2.0 * kPi, rng)) ds.classes.push_back({0, spiral(p, rng)});
      break;
    case DatasetKind::kCircles:
      for (double r : stratified(kCircleMinRadius, kCircleMaxRadius, rng)) ds.classes.push_back({0, circle(r, rng)});
      break;
  }
  for (int i = 0; i < kNumClasses; ++i) ds.classes[i].class_id = i;
  return ds;
}

void write_dataset_csv(const SyntheticDataset& dataset, std::ostream& out) {
  out << "class_id,x,y\n";
  char buf[64];
  auto put = [&](float v) {
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
  };
  for (const auto& cls : dataset.classes) {
    for (Eigen::Index i = 0; i < cls.points.rows(); ++i) {
      out << cls.class_id << ',';
      put(cls.points(i, 0));
      out << ',';
      put(cls.points(i, 1));
      out << '\n';
    }
  }
}

namespace {

float parse_float(const std::string& field, std::size_t line_no) {
  float v = 0.0f;
  auto res = std::from_chars(field.data(), field.data() + field.size(), v);
  if (res.ec != std::errc{} || res.ptr != field.data() + field.size()) {
    throw std::runtime_error("dataset csv line " + std::to_string(line_no) + ": bad real '" + field + "'");
  }
  return v;
}

}  // namespace

SyntheticDataset read_dataset_csv(std::istream& in, DatasetKind kind, std::uint64_t seed) {
  std::string line_text;
  if (!std::getline(in, line_text) || line_text != "class_id,x,y") {
    throw std::runtime_error("dataset csv: missing header 'class_id,x,y'");
  }
  std::map<int, std::vector<std::pair<float, float>>> by_class;
  std::size_t line_no = 1;
  while (std::getline(in, line_text)) {
    ++line_no;
    if (line_text.empty()) continue;
    std::stringstream ss(line_text);
    std::string id, x, y;
    if (!std::getline(ss, id, ',') || !std::getline(ss, x, ',') || !std::getline(ss, y)) {
      throw std::runtime_error("dataset csv line " + std::to_string(line_no) + ": expected 3 fields");
    }
    int class_id = 0;
    auto res = std::from_chars(id.data(), id.data() + id.size(), class_id);
    if (res.ec != std::errc{}) throw std::runtime_error("dataset csv line " + std::to_string(line_no) + ": bad id");
    by_class[class_id].emplace_back(parse_float(x, line_no), parse_float(y, line_no));
  }
  SyntheticDataset ds;
  ds.kind = kind;
  ds.seed = seed;
  for (const auto& [id, pts] : by_class) {
    ClassSamples cls{id, Matrix<float>(static_cast<Eigen::Index>(pts.size()), 2)};
    for (std::size_t i = 0; i < pts.size(); ++i) {
      cls.points(static_cast<Eigen::Index>(i), 0) = pts[i].first;
      cls.points(static_cast<Eigen::Index>(i), 1) = pts[i].second;
    }
    ds.classes.push_back(std::move(cls));
  }
  return ds;
}

}  // namespace lgmnet
