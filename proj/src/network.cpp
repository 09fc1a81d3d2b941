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
#include "sshunet/network.hpp"

#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

constexpr char kMagic[4] = {'S', 'S', 'H', 'U'};

struct VariantEntry {
  Variant variant;
  const char* name;
};
constexpr VariantEntry kVariants[] = {
    {Variant::kPlain2d, "plain2d"},
    {Variant::kShift2d, "shift2d"},
    {Variant::kShift2dMultiview, "shift2d_multiview"},
    {Variant::kFull3d, "full3d"},
};

std::string join(const std::vector<std::string>& items, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i) out += sep;
    out += items[i];
  }
  return out;
}

}  // namespace

std::string variant_name(Variant v) {
  for (const auto& e : kVariants) {
    if (e.variant == v) return e.name;
  }
  return "unknown";
}

std::vector<std::string> variant_names() {
  std::vector<std::string> out;
  for (const auto& e : kVariants) out.emplace_back(e.name);
  return out;
}

Variant parse_variant(const std::string& name) {
  for (const auto& e : kVariants) {
    if (name == e.name) return e.variant;
  }
  throw ConfigError("unknown variant '" + name + "'; valid variants: " + join(variant_names(), ", "));
}

Extent3 UNetConfig::kernel() const {
  return variant == Variant::kFull3d ? Extent3{3, 3, 3} : Extent3{1, 3, 3};
}

Extent3 UNetConfig::down_stride() const {
  return variant == Variant::kFull3d ? Extent3{2, 2, 2} : Extent3{1, 2, 2};
}

Extent3 UNetConfig::up_kernel() const { return down_stride(); }

std::vector<std::string> UNetConfig::violations() const {
  std::vector<std::string> out;
  if (stage_widths.empty()) out.emplace_back("stage_widths must list at least one stage");
  for (std::size_t i = 0; i < stage_widths.size(); ++i) {
    if (stage_widths[i] <= 0) out.push_back("stage_widths[" + std::to_string(i) + "] must be positive");
  }
  if (in_channels <= 0) out.emplace_back("in_channels must be positive");
  if (num_classes < 2) out.emplace_back("num_classes must be at least 2");
  if (patch_extent <= 0) {
    out.emplace_back("patch_extent must be positive");
  } else if (!stage_widths.empty()) {
    const long long factor = 1LL << (stage_widths.size() - 1);
    if (patch_extent % factor != 0) {
      out.push_back("patch_extent " + std::to_string(patch_extent) + " must be divisible by 2^(stages-1) = " +
                    std::to_string(factor));
    }
  }
  if (has_shift()) {
    if (shift_fraction.den <= 0 || shift_fraction.num < 0) {
      out.emplace_back("shift_fraction must be a non-negative fraction");
    } else if (2 * shift_fraction.num > shift_fraction.den) {
      out.push_back("shift_fraction " + shift_fraction.str() + " exceeds 1/2 (both directions must fit)");
    }
  }
  return out;
}

void UNetConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw ConfigError("invalid network config: " + join(v, "; "));
}

std::string UNetConfig::describe() const {
  std::ostringstream os;
  os << "variant=" << variant_name(variant) << ";widths=";
  for (std::size_t i = 0; i < stage_widths.size(); ++i) os << (i ? "," : "") << stage_widths[i];
  os << ";in=" << in_channels << ";classes=" << num_classes;
  if (has_shift()) {
    os << ";shift=" << shift_fraction.str()
       << ";placement=" << (placement == ShiftPlacement::kPreConv ? "pre_conv" : "between_convs");
  }
  return os.str();
}

std::uint64_t UNetConfig::digest() const { return detail::fnv1a(describe()); }

SSHUNet SSHUNet::build(const UNetConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  SSHUNet net;
  net.cfg_ = cfg;
  Rng rng(seed);
  std::optional<ShiftSpec> shift;
  if (cfg.has_shift()) shift = ShiftSpec{cfg.shift_fraction};

  auto block_cfg = [&](int in, int out, Extent3 stride) {
    ResidualBlockConfig b;
    b.in_channels = in;
    b.out_channels = out;
    b.shift = shift;
    b.placement = cfg.placement;
    b.kernel = cfg.kernel();
    b.stride = stride;
    return b;
  };

  const auto& w = cfg.stage_widths;
  for (int i = 0; i < cfg.stages(); ++i) {
    EncoderStage st;
    st.block = i == 0 ? block_cfg(cfg.in_channels, w[0], {1, 1, 1}) : block_cfg(w[i - 1], w[i], cfg.down_stride());
    st.params = init_residual_block(st.block, net.store_, "enc" + std::to_string(i), rng);
    net.encoder_.push_back(std::move(st));
  }
  for (int i = cfg.stages() - 2; i >= 0; --i) {
    DecoderStage st;
    const auto prefix = "dec" + std::to_string(i);
    st.up = ConvSpec{w[i + 1], w[i], cfg.up_kernel(), cfg.up_kernel(), false};
    const auto k = cfg.up_kernel();
    st.up_weight = net.store_.add(prefix + ".up.weight", kaiming_uniform(conv_transpose_weight_shape(st.up),
                                                                         std::int64_t{w[i + 1]} * k[0] * k[1] * k[2], rng));
    st.block = block_cfg(2 * w[i], w[i], {1, 1, 1});
    st.params = init_residual_block(st.block, net.store_, prefix, rng);
    net.decoder_.push_back(std::move(st));
  }
  net.head_ = init_head(w[0], cfg.num_classes, net.store_, "head", rng);
  return net;
}

Tensor SSHUNet::backbone(const Tensor& x) const {
  std::vector<Tensor> skips;
  Tensor h = x;
  for (const auto& st : encoder_) {
    h = residual_block(h, st.block, st.params);
    skips.push_back(h);
  }
  for (std::size_t d = 0; d < decoder_.size(); ++d) {
    const auto& st = decoder_[d];
    const Tensor& skip = skips[skips.size() - 2 - d];
    h = conv_transpose3d(h, st.up, st.up_weight);
    h = residual_block(concat_channels(h, skip), st.block, st.params);
  }
  return h;
}

ViewBatch SSHUNet::features(const Tensor& v) const {
  const int d = cfg_.patch_extent;
  if (v.rank() != 5 || v.dim(1) != cfg_.in_channels || v.dim(2) != d || v.dim(3) != d || v.dim(4) != d) {
    throw ArgumentError("network expects [B, " + std::to_string(cfg_.in_channels) + ", " + std::to_string(d) + ", " +
                        std::to_string(d) + ", " + std::to_string(d) + "], got " + shape_str(v.shape()));
  }
  if (cfg_.multi_view()) {
    ViewBatch views = create_multi_view(v);
    views.tensor = backbone(views.tensor);
    return views;
  }
  return ViewBatch{backbone(v), v.dim(0)};
}

Tensor SSHUNet::forward(const Tensor& v) const {
  ViewBatch f = features(v);
  if (cfg_.multi_view()) return multi_view_fusion(f, head_);
  return head_forward(f.tensor, head_);
}

void save_params(const SSHUNet& net, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  detail::write_le<std::uint32_t>(out, kCheckpointVersion);
  detail::write_le<std::uint64_t>(out, net.config().digest());
  const auto& entries = net.params().entries();
  detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto e : t.shape()) detail::write_le<std::int64_t>(out, e);
    for (float v : t.data()) detail::write_le<float>(out, v);
  }
  if (!out) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

void load_params(SSHUNet& net, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  const auto where = " in '" + path.string() + "'";
  char magic[4] = {};
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != std::string(kMagic, 4)) {
    throw CheckpointError("not a checkpoint (bad magic)" + where);
  }
  std::uint32_t version = 0, count = 0;
  std::uint64_t digest = 0;
  if (!detail::read_le(in, version)) throw CheckpointError("truncated header" + where);
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + where);
  }
  if (!detail::read_le(in, digest) || !detail::read_le(in, count)) throw CheckpointError("truncated header" + where);

  auto& entries = net.params().entries();
  std::vector<std::vector<float>> payloads;
  payloads.reserve(entries.size());
  for (std::uint32_t i = 0; i < count; ++i) {
    std::uint32_t len = 0, rank = 0;
    if (!detail::read_le(in, len) || len > 4096) throw CheckpointError("corrupt tensor record" + where);
    std::string name(len, '\0');
    in.read(name.data(), len);
    if (!detail::read_le(in, rank) || rank > 8) throw CheckpointError("corrupt tensor record '" + name + "'" + where);
    Shape shape(rank);
    for (auto& e : shape) {
      if (!detail::read_le(in, e) || e <= 0) throw CheckpointError("corrupt shape for '" + name + "'" + where);
    }
    if (i >= entries.size()) {
      throw CheckpointError("tensor '" + name + "' has no counterpart in the network (checkpoint holds " +
                            std::to_string(count) + " tensors, network " + std::to_string(entries.size()) + ")");
    }
    const auto& [want_name, want] = entries[i];
    if (name != want_name || shape != want.shape()) {
      throw CheckpointError("mismatched tensor '" + want_name + "': network expects " + shape_str(want.shape()) +
                            ", checkpoint has '" + name + "' " + shape_str(shape));
    }
    std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
    for (auto& v : data) {
      if (!detail::read_le(in, v)) throw CheckpointError("truncated payload for '" + name + "'" + where);
    }
    payloads.push_back(std::move(data));
  }
  if (count < entries.size()) {
    throw CheckpointError("mismatched tensor '" + entries[count].first + "': missing from checkpoint" + where);
  }
  if (digest != net.config().digest()) {
    throw CheckpointError("config digest mismatch" + where + ": checkpoint was written for a different architecture");
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto dst = entries[i].second.mutable_data();
    std::copy(payloads[i].begin(), payloads[i].end(), dst.begin());
  }
}

}  // namespace sshunet
