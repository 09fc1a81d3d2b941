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
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sshunet/metrics.hpp"
#include "sshunet/params.hpp"
#include "sshunet/tensor.hpp"

namespace sshunet {

/// A labelled scan. `intensity` is [1, X, Y, Z] in raw units; labels share
/// the grid and carry the voxel spacing.
struct VolumeRecord {
  Tensor intensity;
  LabelVolume labels;
  std::string id;

  std::array<std::int64_t, 3> shape() const { return labels.shape; }
};

enum class PrimitiveKind { kSphere, kEllipsoid, kCylinder };

struct Primitive {
  PrimitiveKind kind = PrimitiveKind::kSphere;
  int cls = 1;
  std::array<double, 3> center{0, 0, 0};
  /// Sphere: radii[0]. Ellipsoid: all three. Cylinder: radii[0] is the
  /// cross-section radius.
  std::array<double, 3> radii{1, 1, 1};
  /// Cylinder axis (0 = X) and half length along it.
  int axis = 0;
  double half_length = 1.0;

  bool contains(double x, double y, double z) const;
  /// Axis-aligned bounding box as {lo, hi} per axis.
  std::array<std::array<double, 2>, 3> bounds() const;
};

struct PhantomSpec {
  std::array<std::int64_t, 3> extent{32, 32, 32};
  int num_classes = 3;
  std::vector<Primitive> primitives;
  /// One mean per class, background first.
  std::vector<double> class_means{-100.0, 150.0, 150.0};
  double noise_sigma = 20.0;
  std::array<double, 3> spacing{1.0, 1.0, 1.0};
  std::uint64_t seed = 0;
  std::string id = "phantom";

  std::vector<std::string> violations() const;

  /// Sphere (class 1) and a capped cylinder along X (class 2) sharing one
  /// random radius and equal intensities, on disjoint X ranges. Any single
  /// X slice shows at most one disc, so its class is only recoverable from
  /// neighbouring slices.
  /// Needs an extent of at least 16.
  static PhantomSpec slice_ambiguous(std::int64_t extent, std::uint64_t seed);

  /// Line-based "key = value" text; see to_text() for the layout.
  static PhantomSpec parse(const std::string& text);
  std::string to_text() const;
};

/// Labels by primitive membership (later primitives overwrite earlier ones);
/// intensity is the class mean plus Gaussian noise. Throws ConfigError when
/// the spec is invalid, e.g. a primitive leaves the extent.
VolumeRecord generate_phantom(const PhantomSpec& spec);

/// Header fields as stored, plus the decoded voxels in (X, Y, Z) x-major order
/// with scl_slope / scl_inter applied.
struct NiftiImage {
  std::array<std::int16_t, 8> dim{};
  std::array<float, 8> pixdim{};
  std::int16_t datatype = 0;
  std::int16_t bitpix = 0;
  float vox_offset = 0.0f;
  float scl_slope = 0.0f;
  float scl_inter = 0.0f;
  std::string magic;
  bool big_endian = false;
  std::vector<float> voxels;

  std::array<std::int64_t, 3> shape() const { return {dim[1], dim[2], dim[3]}; }
  std::array<double, 3> spacing() const { return {pixdim[1], pixdim[2], pixdim[3]}; }
};

inline constexpr std::int16_t kNiftiUint8 = 2;
inline constexpr std::int16_t kNiftiInt16 = 4;
inline constexpr std::int16_t kNiftiFloat32 = 16;

/// Reads an uncompressed single-file ("n+1") or header/image pair ("ni1")
/// NIfTI-1 volume. FormatError on a short file, bad sizeof_hdr or magic;
/// UnsupportedError on other datatypes or non-3D data; IoError when
/// unreadable.
NiftiImage read_nifti1(const std::filesystem::path& path);
/// Intensity from `image`, labels from `labels` (rounded) or all zero.
VolumeRecord parse_nifti1(const std::filesystem::path& image, const std::optional<std::filesystem::path>& labels = {});

struct NiftiWriteOptions {
  std::int16_t datatype = kNiftiFloat32;
  bool big_endian = false;
  float scl_slope = 1.0f;
  float scl_inter = 0.0f;
};
/// Single-file "n+1" writer; stored = (value - scl_inter) / scl_slope.
void write_nifti1(const std::filesystem::path& path, std::array<std::int64_t, 3> shape, std::array<double, 3> spacing,
                  const std::vector<float>& values, const NiftiWriteOptions& opts = {});

/// Native fixture format, little-endian: "SSHV", u32 version, i64 dims[3],
/// f64 spacing[3], u32 intensity dtype (16 = float32), u32 has_labels,
/// f32 intensity payload, i32 label payload, u32 id length + id bytes.
void write_sshv(const std::filesystem::path& path, const VolumeRecord& rec);
VolumeRecord read_sshv(const std::filesystem::path& path);

/// clamp(v, lo, hi) mapped linearly onto [0, 1].
Tensor hu_window(const Tensor& v, float lo, float hi);

struct PatchPair {
  Tensor intensity;  // [C, E, E, E]
  LabelVolume labels;
};

/// Cubic patch of side `extent`. With probability fg_bias the patch is
/// centred on a uniformly chosen foreground voxel (clipped to the volume),
/// otherwise its corner is uniform.
PatchPair sample_patch(const VolumeRecord& rec, std::int64_t extent, Rng& rng, double fg_bias);
/// Corner-form crop used by sample_patch and tiling.
PatchPair crop(const Tensor& intensity, const LabelVolume& labels, std::array<std::int64_t, 3> corner,
               std::int64_t extent);

struct AugmentConfig {
  double p_flip = 0.2;
  double p_rotate = 0.2;
  double p_intensity_scale = 0.5;
  double p_intensity_shift = 0.5;
  std::array<double, 2> scale_range{0.9, 1.1};
  std::array<double, 2> shift_range{-0.1, 0.1};

  static AugmentConfig none() { return {0.0, 0.0, 0.0, 0.0, {1.0, 1.0}, {0.0, 0.0}}; }
  std::vector<std::string> violations() const;
};

/// Mirror along axis 0..2 (spatial, after the channel axis).
PatchPair flip(const PatchPair& p, int axis);
/// Rotate by k * 90 degrees in the plane of axes (a, b), a < b.
PatchPair rot90(const PatchPair& p, int a, int b, int k);
/// Flip, rotation, intensity scale and shift, each with its probability.
PatchPair augment(const PatchPair& p, const AugmentConfig& cfg, Rng& rng);

}  // namespace sshunet
