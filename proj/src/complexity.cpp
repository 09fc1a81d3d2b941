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
#include "sshunet/complexity.hpp"

#include <iomanip>
#include <sstream>

#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

i64 volume(const Extent3& e) { return i64{e[0]} * e[1] * e[2]; }
i64 kernel_volume(const ConvSpec& s) { return volume(s.kernel); }

// Walks the network's layers in execution order, tracking activation
// extents, and emits one row per layer.
class Planner {
 public:
  Planner(const UNetConfig& cfg, i64 batch, Extent3 extent, bool with_flops)
      : cfg_(cfg), batch_(batch), extent_(extent), with_flops_(with_flops) {}

  CostReport run() {
    const auto& w = cfg_.stage_widths;
    const i64 views = cfg_.multi_view() ? 3 : 1;
    const i64 b = batch_ * views;
    const Extent3 input_extent = extent_;
    if (cfg_.multi_view()) row("views.create", 0, 0);

    std::vector<Extent3> skips;
    Extent3 e = extent_;
    for (int i = 0; i < cfg_.stages(); ++i) {
      const int in = i == 0 ? cfg_.in_channels : w[i - 1];
      const Extent3 stride = i == 0 ? Extent3{1, 1, 1} : cfg_.down_stride();
      e = block("enc" + std::to_string(i), in, w[i], stride, e, b);
      skips.push_back(e);
    }
    for (int i = cfg_.stages() - 2; i >= 0; --i) {
      const auto prefix = "dec" + std::to_string(i);
      const ConvSpec up{w[i + 1], w[i], cfg_.up_kernel(), cfg_.up_kernel(), false};
      row(prefix + ".up", i64{up.in_channels} * up.out_channels * kernel_volume(up), conv_transpose_flops(up, e, b));
      e = skips[static_cast<std::size_t>(i)];
      row(prefix + ".concat", 0, 0);
      e = block(prefix, 2 * w[i], w[i], {1, 1, 1}, e, b);
    }
    if (cfg_.multi_view()) {
      row("views.reverse", 0, 0);
      // two adds per fused element
      row("views.sum", 0, 2 * batch_ * w[0] * volume(input_extent));
    }
    const ConvSpec h1{w[0], w[0], {1, 1, 1}, {1, 1, 1}, true};
    const ConvSpec h2{w[0], cfg_.num_classes, {1, 1, 1}, {1, 1, 1}, true};
    row("head.conv1", conv_params(h1), conv_flops(h1, input_extent, batch_));
    row("head.act", 0, 2 * batch_ * w[0] * volume(input_extent));
    row("head.conv2", conv_params(h2), conv_flops(h2, input_extent, batch_));

    report_.input = with_flops_ ? Shape{batch_, cfg_.in_channels, extent_[0], extent_[1], extent_[2]} : Shape{};
    return std::move(report_);
  }

 private:
  Extent3 block(const std::string& prefix, int in, int out, Extent3 stride, Extent3 e, i64 b) {
    const ConvSpec c1{in, out, cfg_.kernel(), stride, false};
    const ConvSpec c2{out, out, cfg_.kernel(), {1, 1, 1}, false};
    const Extent3 o = c1.output_extent(e);
    const i64 elems = b * out * volume(o);
    const bool pre = cfg_.has_shift() && cfg_.placement == ShiftPlacement::kPreConv;
    const bool mid = cfg_.has_shift() && cfg_.placement == ShiftPlacement::kBetweenConvs;
    if (pre) row(prefix + ".shift", 0, 0);
    row(prefix + ".conv1", conv_params(c1), conv_flops(c1, o, b));
    row(prefix + ".norm1", 2 * i64{out}, 2 * elems);
    row(prefix + ".act1", 0, 2 * elems);
    if (mid) row(prefix + ".shift", 0, 0);
    row(prefix + ".conv2", conv_params(c2), conv_flops(c2, o, b));
    row(prefix + ".norm2", 2 * i64{out}, 2 * elems);
    if (in != out || stride != Extent3{1, 1, 1}) {
      const ConvSpec p{in, out, {1, 1, 1}, stride, false};
      row(prefix + ".proj", conv_params(p), conv_flops(p, o, b));
      row(prefix + ".proj_norm", 2 * i64{out}, 2 * elems);
    }
    row(prefix + ".add", 0, elems);
    row(prefix + ".act2", 0, 2 * elems);
    return o;
  }

  void row(const std::string& name, i64 params, i64 flops) {
    if (!with_flops_) flops = 0;
    report_.rows.push_back({name, params, flops});
    report_.total_params += params;
    report_.total_flops += flops;
  }

  const UNetConfig& cfg_;
  i64 batch_;
  Extent3 extent_;
  bool with_flops_;
  CostReport report_;
};

}  // namespace

std::int64_t conv_params(const ConvSpec& spec) {
  return i64{spec.in_channels} * spec.out_channels * kernel_volume(spec) + (spec.bias ? spec.out_channels : 0);
}

std::int64_t conv_flops(const ConvSpec& spec, const Extent3& out_extent, std::int64_t batch) {
  return 2 * batch * volume(out_extent) * spec.out_channels * spec.in_channels * kernel_volume(spec);
}

std::int64_t conv_transpose_flops(const ConvSpec& spec, const Extent3& in_extent, std::int64_t batch) {
  return 2 * batch * volume(in_extent) * spec.in_channels * spec.out_channels * kernel_volume(spec);
}

std::string CostReport::to_csv() const {
  std::ostringstream os;
  os << "layer,params,flops\n";
  for (const auto& r : rows) os << r.layer << ',' << r.params << ',' << r.flops << '\n';
  os << "total," << total_params << ',' << total_flops << '\n';
  return os.str();
}

CostReport count_params(const UNetConfig& cfg) {
  cfg.validate();
  const int d = cfg.patch_extent;
  return Planner(cfg, 1, {d, d, d}, false).run();
}

CostReport count_flops(const UNetConfig& cfg, const Shape& input) {
  cfg.validate();
  Shape s = input;
  if (s.size() == 4) s.insert(s.begin(), 1);
  if (s.size() != 5) throw ArgumentError("input shape must be [C, X, Y, Z] or [B, C, X, Y, Z], got " + shape_str(input));
  for (auto e : s) {
    if (e <= 0) throw ArgumentError("input extents must be positive, got " + shape_str(input));
  }
  if (s[1] != cfg.in_channels) {
    throw ArgumentError("input has " + std::to_string(s[1]) + " channels, config expects " +
                        std::to_string(cfg.in_channels));
  }
  if (cfg.multi_view() && (s[2] != s[3] || s[3] != s[4])) {
    throw ArgumentError("multi-view variants need an isotropic input, got " + shape_str(input));
  }
  const Extent3 e{static_cast<int>(s[2]), static_cast<int>(s[3]), static_cast<int>(s[4])};
  return Planner(cfg, s[0], e, true).run();
}

std::vector<EfficiencyRow> efficiency_table(const std::vector<NamedConfig>& cfgs, const Shape& input) {
  std::vector<EfficiencyRow> out;
  for (const auto& c : cfgs) {
    const auto r = count_flops(c.cfg, input);
    out.push_back({c.name, variant_name(c.cfg.variant), r.total_params, r.total_flops, c.dsc});
  }
  return out;
}

std::string efficiency_csv(const std::vector<EfficiencyRow>& rows) {
  std::ostringstream os;
  os << "config,variant,params,flops,dsc\n";
  for (const auto& r : rows) {
    os << r.name << ',' << r.variant << ',' << r.params << ',' << r.flops << ',';
    if (r.dsc) os << std::fixed << std::setprecision(4) << *r.dsc << std::defaultfloat;
    os << '\n';
  }
  return os.str();
}

}  // namespace sshunet
