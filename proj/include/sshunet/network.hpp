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
#include <filesystem>
#include <string>
#include <vector>

#include "sshunet/fraction.hpp"
#include "sshunet/ops.hpp"
#include "sshunet/params.hpp"
#include "sshunet/ssh_layers.hpp"
#include "sshunet/tensor.hpp"

namespace sshunet {

enum class Variant { kPlain2d, kShift2d, kShift2dMultiview, kFull3d };

std::string variant_name(Variant v);
/// Throws ConfigError naming the valid variants.
Variant parse_variant(const std::string& name);
std::vector<std::string> variant_names();

struct UNetConfig {
  Variant variant = Variant::kShift2dMultiview;
  std::vector<int> stage_widths{8, 16, 32};
  /// Per-direction proportion; ignored by variants without shift.
  Fraction shift_fraction{1, 4};
  ShiftPlacement placement = ShiftPlacement::kPreConv;
  int in_channels = 1;
  int num_classes = 3;
  int patch_extent = 32;

  bool has_shift() const { return variant == Variant::kShift2d || variant == Variant::kShift2dMultiview; }
  bool multi_view() const { return variant == Variant::kShift2dMultiview; }
  int stages() const { return static_cast<int>(stage_widths.size()); }

  /// (1,3,3) for the planar variants, (3,3,3) for full3d.
  Extent3 kernel() const;
  /// Stride of the first conv in stages after the first: the slice axis is
  /// never downsampled by planar variants.
  Extent3 down_stride() const;
  /// Kernel (== stride) of the decoder upsampling.
  Extent3 up_kernel() const;

  /// Every violated invariant, empty when valid.
  std::vector<std::string> violations() const;
  /// Throws ConfigError listing all violations.
  void validate() const;

  /// Architecture fields only; patch extent does not change the weights.
  std::string describe() const;
  std::uint64_t digest() const;
};

/// Encoder stages (the last is the bottleneck), decoder stages from deep to
/// shallow, and a two-conv 1x1x1 head. Multi-view variants run the three
/// orientations as one 3B batch through the same weights and fuse before
/// the head.
class SSHUNet {
 public:
  struct EncoderStage {
    ResidualBlockConfig block;
    ResidualBlockParams params;
  };
  struct DecoderStage {
    ConvSpec up;
    Tensor up_weight;
    ResidualBlockConfig block;
    ResidualBlockParams params;
  };

  static SSHUNet build(const UNetConfig& cfg, std::uint64_t seed);

  /// v: [B, in_channels, D, D, D] with D == patch_extent. Returns logits
  /// [B, num_classes, D, D, D].
  Tensor forward(const Tensor& v) const;
  /// Decoded features before the head. For multi-view variants these are the
  /// three views stacked on the batch axis, not yet reversed.
  ViewBatch features(const Tensor& v) const;

  const UNetConfig& config() const { return cfg_; }
  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const std::vector<EncoderStage>& encoder() const { return encoder_; }
  const std::vector<DecoderStage>& decoder() const { return decoder_; }
  const HeadParams& head() const { return head_; }

 private:
  Tensor backbone(const Tensor& x) const;

  UNetConfig cfg_;
  ParamStore store_;
  std::vector<EncoderStage> encoder_;
  std::vector<DecoderStage> decoder_;
  HeadParams head_;
};

/// Checkpoint layout (little-endian): "SSHU", u32 version = 1, u64 config
/// digest, u32 tensor count, then per tensor: u32 name length, name bytes,
/// u32 rank, i64 extents, f32 payload.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_params(const SSHUNet& net, const std::filesystem::path& path);
/// Throws CheckpointError on bad magic or version, on a shape or name
/// mismatch (naming the first mismatched tensor) or a config digest mismatch;
/// IoError when the file cannot be opened.
void load_params(SSHUNet& net, const std::filesystem::path& path);

}  // namespace sshunet
