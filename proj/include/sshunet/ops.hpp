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
#include <span>
#include <vector>

#include "sshunet/tensor.hpp"

namespace sshunet {

inline constexpr float kNormEps = 1e-5f;
inline constexpr float kLeakySlope = 0.01f;

using Extent3 = std::array<int, 3>;

/// Convolution geometry over the (S, H, W) axes of a [B, C, S, H, W] tensor.
///
/// Kernel (1,3,3) is the planar conv, (3,3,3) the volumetric baseline and
/// (1,1,1) the fusion/projection conv. Padding is k/2 per axis, which is
/// "same" padding at stride 1 and halves even extents at stride 2.
struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  Extent3 kernel{1, 3, 3};
  Extent3 stride{1, 1, 1};
  bool bias = false;

  Extent3 padding() const { return {kernel[0] / 2, kernel[1] / 2, kernel[2] / 2}; }
  Shape weight_shape() const;
  /// Output (S, H, W) for an input of extents `in`.
  Extent3 output_extent(const Extent3& in) const;
};

/// Axis permutation; out.shape[i] == t.shape[order[i]].
Tensor permute(const Tensor& t, const std::vector<int>& order);

/// Cross-correlation with zero padding. `bias` may be undefined.
Tensor conv3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias = {});

/// Transposed convolution with zero padding; weights are (C_in, C_out, k...)
/// and each axis grows to (n - 1) * stride + k, i.e. n * stride when k == stride.
Tensor conv_transpose3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias = {});
Shape conv_transpose_weight_shape(const ConvSpec& spec);

/// Per-(batch, channel) normalization over all trailing axes. `gamma` and
/// `beta` are optional per-channel affine parameters.
Tensor instance_norm(const Tensor& x, const Tensor& gamma = {}, const Tensor& beta = {}, float eps = kNormEps);

Tensor leaky_relu(const Tensor& x, float slope = kLeakySlope);

/// While alive, folds the sign pattern of every leaky_relu input evaluated
/// on this thread into a running hash. Two evaluations with equal
/// signatures took the same linear piece of every activation.
class KinkMonitor {
 public:
  KinkMonitor();
  ~KinkMonitor();
  KinkMonitor(const KinkMonitor&) = delete;
  KinkMonitor& operator=(const KinkMonitor&) = delete;

  std::uint64_t signature() const { return hash_; }
  void reset() { hash_ = kSeed; }
  void fold(std::span<const float> values);

 private:
  static constexpr std::uint64_t kSeed = 1469598103934665603ull;
  std::uint64_t hash_ = kSeed;
  KinkMonitor* previous_;
};

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
Tensor square(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

/// Concatenation along axis 1.
Tensor concat_channels(const Tensor& a, const Tensor& b);

/// Concatenation / split along axis 0.
Tensor concat_batch(const std::vector<Tensor>& parts);
Tensor slice_batch(const Tensor& t, std::int64_t begin, std::int64_t count);

/// Softmax over axis 1.
Tensor softmax_channels(const Tensor& x);

}  // namespace sshunet
