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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sshunet/network.hpp"
#include "sshunet/ops.hpp"
#include "sshunet/tensor.hpp"

namespace sshunet {

/// FLOP convention: 1 MAC = 2 FLOPs for convolutions; instance norm and
/// LeakyReLU cost 2 FLOPs per element, residual adds and the view sum 1 per
/// element; shifts, permutations and concatenations are free.
inline constexpr const char* kFlopConvention =
    "FLOPs: conv = 2 x MACs; norm, activation = 2 per element; add = 1 per element; shift, permute, concat = 0";

struct CostRow {
  std::string layer;
  std::int64_t params = 0;
  std::int64_t flops = 0;
};

struct CostReport {
  std::vector<CostRow> rows;
  std::int64_t total_params = 0;
  std::int64_t total_flops = 0;
  /// [B, C, X, Y, Z]; empty for a params-only report.
  Shape input;

  /// Header "layer,params,flops", one row per layer, totals row last.
  std::string to_csv() const;
};

std::int64_t conv_params(const ConvSpec& spec);
/// 2 * out_voxels * C_out * C_in * k_s * k_h * k_w for a batch of `batch`.
std::int64_t conv_flops(const ConvSpec& spec, const Extent3& out_extent, std::int64_t batch);
/// Transposed conv: every input voxel scatters a C_out x k block.
std::int64_t conv_transpose_flops(const ConvSpec& spec, const Extent3& in_extent, std::int64_t batch);

/// Per-layer parameter counts derived from the config alone.
CostReport count_params(const UNetConfig& cfg);
/// Per-layer parameters and FLOPs for `input`, either [C, X, Y, Z] (batch 1)
/// or [B, C, X, Y, Z]. Multi-view variants charge the backbone at batch 3B.
CostReport count_flops(const UNetConfig& cfg, const Shape& input);

struct EfficiencyRow {
  std::string name;
  std::string variant;
  std::int64_t params = 0;
  std::int64_t flops = 0;
  std::optional<double> dsc;
};

struct NamedConfig {
  std::string name;
  UNetConfig cfg;
  std::optional<double> dsc;
};

/// One row per config, in input order.
std::vector<EfficiencyRow> efficiency_table(const std::vector<NamedConfig>& cfgs, const Shape& input);
/// Header "config,variant,params,flops,dsc"; blank dsc when unknown.
std::string efficiency_csv(const std::vector<EfficiencyRow>& rows);

}  // namespace sshunet
