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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sshunet/fraction.hpp"
#include "sshunet/ops.hpp"
#include "sshunet/params.hpp"
#include "sshunet/tensor.hpp"

namespace sshunet {

/// Three orientations of a volume stacked along the batch axis in the fixed
/// order (xy, yz, xz). Batch extent is 3 * base_batch.
///
///   xy: (C, X, Y, Z) -> (C, Z, X, Y)
///   yz: (C, X, Y, Z) -> (C, X, Y, Z)
///   xz: (C, X, Y, Z) -> (C, Y, X, Z)
struct ViewBatch {
  Tensor tensor;
  std::int64_t base_batch = 0;

  enum View : int { kXY = 0, kYZ = 1, kXZ = 2 };
  Tensor view(View v) const;
};

ViewBatch create_multi_view(const Tensor& volume);
/// Returns the three views in canonical (C, X, Y, Z) orientation, ordered
/// (xy, yz, xz).
std::array<Tensor, 3> reverse_multi_view(const ViewBatch& views);
/// Wraps a raw [3B, C, S, H, W] tensor; throws when the batch is not a multiple of 3.
ViewBatch as_view_batch(const Tensor& stacked);

/// Per-direction proportion of channels displaced along the slice axis.
/// n = floor(C * fraction) channels move forward, the next n move backward.
struct ShiftSpec {
  Fraction fraction{1, 4};

  int shifted_count(int channels) const { return fraction.of(channels); }
};

/// Channels [0, n): out[s] = in[s - 1]; channels [n, 2n): out[s] = in[s + 1];
/// the rest pass through. Out-of-range slices read as zero.
Tensor slice_shift(const Tensor& t, const ShiftSpec& spec);

/// One tap-3 convolution along a sequence, evaluated directly and as
/// shift + multiply-accumulate.
struct ShiftMacResult {
  std::vector<double> direct;
  std::vector<double> decomposed;
  double max_abs_diff = 0.0;
};
ShiftMacResult shift_mac_equivalence(std::span<const float> x, const std::array<float, 3>& w);

enum class ShiftPlacement { kPreConv, kBetweenConvs };

struct ResidualBlockConfig {
  int in_channels = 1;
  int out_channels = 1;
  std::optional<ShiftSpec> shift;
  ShiftPlacement placement = ShiftPlacement::kPreConv;
  Extent3 kernel{1, 3, 3};
  Extent3 stride{1, 1, 1};

  bool needs_projection() const {
    return in_channels != out_channels || stride != Extent3{1, 1, 1};
  }
  ConvSpec conv1() const { return {in_channels, out_channels, kernel, stride, false}; }
  ConvSpec conv2() const { return {out_channels, out_channels, kernel, {1, 1, 1}, false}; }
  ConvSpec projection() const { return {in_channels, out_channels, {1, 1, 1}, stride, false}; }
};

struct ResidualBlockParams {
  Tensor conv1_weight, norm1_gamma, norm1_beta;
  Tensor conv2_weight, norm2_gamma, norm2_beta;
  // Present only when the block changes channels or stride.
  Tensor proj_weight, proj_gamma, proj_beta;
};

/// Registers the block's parameters under `prefix` in `store`.
ResidualBlockParams init_residual_block(const ResidualBlockConfig& cfg, ParamStore& store, const std::string& prefix,
                                        Rng& rng);

/// [shift] -> conv -> IN -> LeakyReLU -> [shift] -> conv -> IN -> (+ skip) -> LeakyReLU.
/// The skip carries the unshifted input, projected by 1x1x1 conv + IN when
/// the block changes channels or stride.
Tensor residual_block(const Tensor& x, const ResidualBlockConfig& cfg, const ResidualBlockParams& params);

/// Two 1x1x1 convolutions with a LeakyReLU between them.
struct HeadParams {
  Tensor conv1_weight, conv1_bias;
  Tensor conv2_weight, conv2_bias;
};
HeadParams init_head(int channels, int classes, ParamStore& store, const std::string& prefix, Rng& rng);
Tensor head_forward(const Tensor& x, const HeadParams& params);

/// Reverse the three views, sum them, and project to class logits.
Tensor multi_view_fusion(const ViewBatch& decoded, const HeadParams& head);

}  // namespace sshunet
