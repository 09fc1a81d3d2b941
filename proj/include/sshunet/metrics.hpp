// Copyright (c) 2026 SSH-UNet Authors. All Rights Reserved.
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

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace sshunet {

/// Integer class ids on an (X, Y, Z) grid, x-major (z fastest).
struct LabelVolume {
  std::array<std::int64_t, 3> shape{0, 0, 0};
  std::vector<std::int32_t> labels;
  /// Voxel size in mm along (X, Y, Z).
  std::array<double, 3> spacing{1.0, 1.0, 1.0};

  static LabelVolume zeros(std::array<std::int64_t, 3> shape, std::array<double, 3> spacing = {1.0, 1.0, 1.0});
  std::int64_t numel() const { return shape[0] * shape[1] * shape[2]; }
  std::int64_t index(std::int64_t x, std::int64_t y, std::int64_t z) const { return (x * shape[1] + y) * shape[2] + z; }
  std::int32_t& at(std::int64_t x, std::int64_t y, std::int64_t z) { return labels[static_cast<std::size_t>(index(x, y, z))]; }
  std::int32_t at(std::int64_t x, std::int64_t y, std::int64_t z) const {
    return labels[static_cast<std::size_t>(index(x, y, z))];
  }
};

inline constexpr double kDefaultNsdTolerance = 1.0;

/// 2|Y n Yhat| / (|Y| + |Yhat|) on the indicator volumes of class k.
/// Both empty gives 1, exactly one empty gives 0.
double dice(const LabelVolume& y, const LabelVolume& yhat, int k);

/// Normalized surface Dice at tolerance tau (mm). Boundary voxels are class-k
/// voxels with a 6-neighbour outside the class (the grid edge counts as
/// outside); the score is the fraction of both boundaries lying within tau of
/// the other one. Both empty gives 1, exactly one empty gives 0.
double nsd(const LabelVolume& y, const LabelVolume& yhat, int k, double tau_mm = kDefaultNsdTolerance);

struct ClassMetrics {
  int cls = 0;
  double dice = 0.0;
  double nsd = 0.0;
  std::int64_t gt_voxels = 0;
  std::int64_t pred_voxels = 0;
  /// In ground truth or prediction. Absent classes are left out of means.
  bool present = false;
};

struct MetricReport {
  std::vector<ClassMetrics> classes;
  /// Means over present classes; nullopt when none is present.
  std::optional<double> mean_dice;
  std::optional<double> mean_nsd;
};

/// Foreground classes 1..num_classes-1 of one case.
MetricReport evaluate_case(const LabelVolume& y, const LabelVolume& yhat, int num_classes,
                           double tau_mm = kDefaultNsdTolerance);

/// Per-class mean over the cases where the class is present, then the macro
/// mean over classes present in at least one case.
MetricReport aggregate(const std::vector<MetricReport>& cases);

}  // namespace sshunet
