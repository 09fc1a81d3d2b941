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

#include "sshunet/ssh_layers.hpp"

#include <algorithm>
#include <cmath>

#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

const std::vector<int> kToXY{0, 1, 4, 2, 3};    // (X,Y,Z) -> (Z,X,Y)
const std::vector<int> kFromXY{0, 1, 3, 4, 2};  // (Z,X,Y) -> (X,Y,Z)
const std::vector<int> kSwapXZ{0, 1, 3, 2, 4};  // (X,Y,Z) <-> (Y,X,Z)

Shape conv_bias_shape(int channels) { return {channels}; }

}  // namespace

Tensor ViewBatch::view(View v) const { return slice_batch(tensor, v * base_batch, base_batch); }

ViewBatch create_multi_view(const Tensor& volume) {
  if (volume.rank() != 5) throw ArgumentError("create_multi_view expects [B, C, X, Y, Z]");
  if (volume.dim(2) != volume.dim(3) || volume.dim(3) != volume.dim(4)) {
    throw ArgumentError("multi-view creation requires an isotropic volume, got " + shape_str(volume.shape()));
  }
  ViewBatch out;
  out.base_batch = volume.dim(0);
  out.tensor = concat_batch({permute(volume, kToXY), volume, permute(volume, kSwapXZ)});
  return out;
}

ViewBatch as_view_batch(const Tensor& stacked) {
  if (stacked.rank() != 5 || stacked.dim(0) % 3 != 0) {
    throw ArgumentError("view batch extent must be a multiple of 3, got " + shape_str(stacked.shape()));
  }
  return ViewBatch{stacked, stacked.dim(0) / 3};
}

std::array<Tensor, 3> reverse_multi_view(const ViewBatch& views) {
  if (!views.tensor.defined() || views.tensor.rank() != 5 || views.base_batch <= 0 ||
      views.tensor.dim(0) != 3 * views.base_batch) {
    throw ArgumentError("malformed view batch: batch extent must be 3 * base_batch");
  }
  return {permute(views.view(ViewBatch::kXY), kFromXY), views.view(ViewBatch::kYZ),
          permute(views.view(ViewBatch::kXZ), kSwapXZ)};
}

Tensor slice_shift(const Tensor& t, const ShiftSpec& spec) {
  if (t.rank() != 5) throw ArgumentError("slice_shift expects [B, C, S, H, W]");
  const i64 batch = t.dim(0);
  const i64 channels = t.dim(1);
  const i64 slices = t.dim(2);
  const i64 plane = t.dim(3) * t.dim(4);
  const i64 n = spec.shifted_count(static_cast<int>(channels));
  if (spec.fraction.num < 0 || 2 * n > channels) {
    throw ArgumentError("shift fraction " + spec.fraction.str() + " moves more than all channels");
  }
  if (n == 0) return t;

  // src_slice(c, s): slice of the input read by output slice s, or -1 for zero fill.
  auto src_slice = [n](i64 c, i64 s) -> i64 {
    if (c < n) return s - 1;
    if (c < 2 * n) return s + 1;
    return s;
  };

  auto in = t.data();
  std::vector<float> out(in.size(), 0.0f);
  for (i64 b = 0; b < batch; ++b) {
    for (i64 c = 0; c < channels; ++c) {
      const i64 base = (b * channels + c) * slices * plane;
      for (i64 s = 0; s < slices; ++s) {
        const i64 src = src_slice(c, s);
        if (src < 0 || src >= slices) continue;
        std::copy_n(in.begin() + base + src * plane, plane, out.begin() + base + s * plane);
      }
    }
  }

  return make_op_result(
      t.shape(), std::move(out), {t},
      [t, batch, channels, slices, plane, src_slice](std::span<const float> gout) {
        auto gin = grad_sink(t);
        if (gin.empty()) return;
        for (i64 b = 0; b < batch; ++b) {
          for (i64 c = 0; c < channels; ++c) {
            const i64 base = (b * channels + c) * slices * plane;
            for (i64 s = 0; s < slices; ++s) {
              const i64 src = src_slice(c, s);
              if (src < 0 || src >= slices) continue;
              for (i64 i = 0; i < plane; ++i) gin[base + src * plane + i] += gout[base + s * plane + i];
            }
          }
        }
      },
      "slice_shift");
}

ShiftMacResult shift_mac_equivalence(std::span<const float> x, const std::array<float, 3>& w) {
  const i64 len = static_cast<i64>(x.size());
  if (len < 3) throw ArgumentError("shift_mac_equivalence needs a sequence of length >= 3");

  ShiftMacResult r;
  r.direct.resize(x.size());
  for (i64 i = 0; i < len; ++i) {
    const double prev = i > 0 ? x[i - 1] : 0.0;
    const double next = i + 1 < len ? x[i + 1] : 0.0;
    r.direct[i] = w[0] * prev + w[1] * static_cast<double>(x[i]) + w[2] * next;
  }

  // Two copies of x as channels of a [1, 2, len, 1, 1] tensor; fraction 1/2
  // shifts channel 0 forward (reads i - 1) and channel 1 backward (reads i + 1).
  std::vector<float> packed(x.begin(), x.end());
  packed.insert(packed.end(), x.begin(), x.end());
  const Tensor shifted = slice_shift(Tensor::from_data({1, 2, len, 1, 1}, std::move(packed)), ShiftSpec{{1, 2}});
  auto s = shifted.data();
  r.decomposed.resize(x.size());
  for (i64 i = 0; i < len; ++i) {
    r.decomposed[i] = w[0] * static_cast<double>(s[i]) + w[1] * static_cast<double>(x[i]) +
                      w[2] * static_cast<double>(s[len + i]);
    r.max_abs_diff = std::max(r.max_abs_diff, std::fabs(r.decomposed[i] - r.direct[i]));
  }
  return r;
}

ResidualBlockParams init_residual_block(const ResidualBlockConfig& cfg, ParamStore& store, const std::string& prefix,
                                        Rng& rng) {
  const auto k_vol = i64{cfg.kernel[0]} * cfg.kernel[1] * cfg.kernel[2];
  ResidualBlockParams p;
  p.conv1_weight =
      store.add(prefix + ".conv1.weight", kaiming_uniform(cfg.conv1().weight_shape(), cfg.in_channels * k_vol, rng));
  p.norm1_gamma = store.add(prefix + ".norm1.gamma", Tensor::full({cfg.out_channels}, 1.0f));
  p.norm1_beta = store.add(prefix + ".norm1.beta", Tensor::zeros({cfg.out_channels}));
  p.conv2_weight =
      store.add(prefix + ".conv2.weight", kaiming_uniform(cfg.conv2().weight_shape(), cfg.out_channels * k_vol, rng));
  p.norm2_gamma = store.add(prefix + ".norm2.gamma", Tensor::full({cfg.out_channels}, 1.0f));
  p.norm2_beta = store.add(prefix + ".norm2.beta", Tensor::zeros({cfg.out_channels}));
  if (cfg.needs_projection()) {
    p.proj_weight =
        store.add(prefix + ".proj.weight", kaiming_uniform(cfg.projection().weight_shape(), cfg.in_channels, rng));
    p.proj_gamma = store.add(prefix + ".proj_norm.gamma", Tensor::full({cfg.out_channels}, 1.0f));
    p.proj_beta = store.add(prefix + ".proj_norm.beta", Tensor::zeros({cfg.out_channels}));
  }
  return p;
}

Tensor residual_block(const Tensor& x, const ResidualBlockConfig& cfg, const ResidualBlockParams& params) {
  if (x.rank() != 5 || x.dim(1) != cfg.in_channels) {
    throw ArgumentError("residual block expects " + std::to_string(cfg.in_channels) + " input channels, got " +
                        shape_str(x.shape()));
  }
  Tensor h = x;
  if (cfg.shift && cfg.placement == ShiftPlacement::kPreConv) h = slice_shift(h, *cfg.shift);
  h = conv3d(h, cfg.conv1(), params.conv1_weight);
  h = leaky_relu(instance_norm(h, params.norm1_gamma, params.norm1_beta));
  if (cfg.shift && cfg.placement == ShiftPlacement::kBetweenConvs) h = slice_shift(h, *cfg.shift);
  h = conv3d(h, cfg.conv2(), params.conv2_weight);
  h = instance_norm(h, params.norm2_gamma, params.norm2_beta);

  Tensor skip = x;
  if (cfg.needs_projection()) {
    if (!params.proj_weight.defined()) throw ArgumentError("residual block is missing its skip projection");
    skip = instance_norm(conv3d(x, cfg.projection(), params.proj_weight), params.proj_gamma, params.proj_beta);
  }
  return leaky_relu(add(h, skip));
}

HeadParams init_head(int channels, int classes, ParamStore& store, const std::string& prefix, Rng& rng) {
  HeadParams p;
  const ConvSpec c1{channels, channels, {1, 1, 1}, {1, 1, 1}, true};
  const ConvSpec c2{channels, classes, {1, 1, 1}, {1, 1, 1}, true};
  p.conv1_weight = store.add(prefix + ".conv1.weight", kaiming_uniform(c1.weight_shape(), channels, rng));
  p.conv1_bias = store.add(prefix + ".conv1.bias", Tensor::zeros(conv_bias_shape(channels)));
  p.conv2_weight = store.add(prefix + ".conv2.weight", kaiming_uniform(c2.weight_shape(), channels, rng));
  p.conv2_bias = store.add(prefix + ".conv2.bias", Tensor::zeros(conv_bias_shape(classes)));
  return p;
}

Tensor head_forward(const Tensor& x, const HeadParams& params) {
  const int channels = static_cast<int>(params.conv1_weight.dim(1));
  const int hidden = static_cast<int>(params.conv1_weight.dim(0));
  const int classes = static_cast<int>(params.conv2_weight.dim(0));
  const ConvSpec c1{channels, hidden, {1, 1, 1}, {1, 1, 1}, true};
  const ConvSpec c2{hidden, classes, {1, 1, 1}, {1, 1, 1}, true};
  Tensor h = leaky_relu(conv3d(x, c1, params.conv1_weight, params.conv1_bias));
  return conv3d(h, c2, params.conv2_weight, params.conv2_bias);
}

Tensor multi_view_fusion(const ViewBatch& decoded, const HeadParams& head) {
  auto views = reverse_multi_view(decoded);
  Tensor fused = add(add(views[0], views[1]), views[2]);
  return head_forward(fused, head);
}

}  // namespace sshunet
