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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include "oracles.hpp"
#include "sshunet/data_io.hpp"
#include "sshunet/errors.hpp"

using namespace sshunet;
namespace fs = std::filesystem;
using sshunet::testing::Fixture;
using sshunet::testing::fixture_value;
using sshunet::testing::float_fixture;

namespace {

fs::path temp_path(const std::string& name) {
  auto dir = fs::temp_directory_path() / "sshunet_test_data_io";
  fs::create_directories(dir);
  return dir / name;
}

float voxel(const Tensor& t, std::array<std::int64_t, 3> shape, std::int64_t x, std::int64_t y, std::int64_t z) {
  return t.data()[static_cast<std::size_t>((x * shape[1] + y) * shape[2] + z)];
}

// Patch whose intensity encodes each voxel's linear index and whose labels
// are a function of that index.
PatchPair indexed_patch(std::int64_t n, int channels = 1) {
  PatchPair p;
  p.labels = LabelVolume::zeros({n, n, n});
  std::vector<float> data(static_cast<std::size_t>(channels * n * n * n));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i);
  for (std::int64_t i = 0; i < n * n * n; ++i) p.labels.labels[static_cast<std::size_t>(i)] = static_cast<int>((i * 7) % 3);
  p.intensity = Tensor::from_data({channels, n, n, n}, std::move(data));
  return p;
}

}  // namespace

TEST_CASE("phantom: empty primitive list gives background only") {
  PhantomSpec s;
  s.extent = {12, 12, 12};
  s.seed = 3;
  const auto rec = generate_phantom(s);
  CHECK(rec.labels.shape == s.extent);
  CHECK(rec.intensity.shape() == std::vector<std::int64_t>{1, 12, 12, 12});
  double mean = 0.0;
  for (auto l : rec.labels.labels) CHECK(l == 0);
  for (float v : rec.intensity.data()) mean += v;
  mean /= static_cast<double>(rec.intensity.numel());
  // mean of n Gaussian draws: 4 standard errors
  CHECK(std::fabs(mean - s.class_means[0]) < 4.0 * s.noise_sigma / std::sqrt(12.0 * 12 * 12));
}

TEST_CASE("phantom: rasterised sphere volume close to analytic") {
  PhantomSpec s;
  s.extent = {16, 16, 16};
  Primitive sp;
  sp.kind = PrimitiveKind::kSphere;
  sp.cls = 1;
  sp.center = {7.5, 7.5, 7.5};
  sp.radii = {5, 5, 5};
  s.primitives = {sp};
  const auto rec = generate_phantom(s);
  // independent rasterisation oracle over voxel centres
  std::int64_t oracle = 0, counted = 0;
  for (int x = 0; x < 16; ++x)
    for (int y = 0; y < 16; ++y)
      for (int z = 0; z < 16; ++z) {
        const double d2 = (x - 7.5) * (x - 7.5) + (y - 7.5) * (y - 7.5) + (z - 7.5) * (z - 7.5);
        oracle += d2 <= 25.0;
        counted += rec.labels.at(x, y, z) == 1;
      }
  CHECK(counted == oracle);
  const double analytic = 4.0 / 3.0 * std::numbers::pi * 125.0;
  CHECK(std::fabs(static_cast<double>(counted) - analytic) / analytic < 0.15);
}

TEST_CASE("phantom: later primitives overwrite earlier ones") {
  PhantomSpec s;
  s.extent = {10, 10, 10};
  Primitive a;
  a.kind = PrimitiveKind::kEllipsoid;
  a.cls = 1;
  a.center = {5, 5, 5};
  a.radii = {4, 3, 2};
  Primitive b = a;
  b.kind = PrimitiveKind::kSphere;
  b.cls = 2;
  b.radii = {1, 1, 1};
  s.primitives = {a, b};
  const auto rec = generate_phantom(s);
  CHECK(rec.labels.at(5, 5, 5) == 2);
  CHECK(rec.labels.at(8, 5, 5) == 1);
  CHECK(rec.labels.at(5, 5, 8) == 0);
}

TEST_CASE("phantom: determinism and seed sensitivity") {
  const auto s = PhantomSpec::slice_ambiguous(24, 11);
  const auto a = generate_phantom(s), b = generate_phantom(s);
  CHECK(a.labels.labels == b.labels.labels);
  const auto da = a.intensity.data(), db = b.intensity.data();
  CHECK(std::equal(da.begin(), da.end(), db.begin(), db.end()));
  const auto c = generate_phantom(PhantomSpec::slice_ambiguous(24, 12));
  CHECK(c.labels.labels != a.labels.labels);
}

TEST_CASE("phantom: slice-ambiguous preset") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = PhantomSpec::slice_ambiguous(32, seed);
    CAPTURE(seed);
    REQUIRE(s.violations().empty());
    REQUIRE(s.primitives.size() == 2);
    const auto& sphere = s.primitives[0];
    const auto& cyl = s.primitives[1];
    CHECK(sphere.kind == PrimitiveKind::kSphere);
    CHECK(cyl.kind == PrimitiveKind::kCylinder);
    CHECK(cyl.axis == 0);
    CHECK(sphere.radii[0] == cyl.radii[0]);
    CHECK(s.class_means[1] == s.class_means[2]);
    const auto rec = generate_phantom(s);
    std::int64_t n1 = 0, n2 = 0;
    for (auto l : rec.labels.labels) {
      n1 += l == 1;
      n2 += l == 2;
    }
    CHECK(n1 > 0);
    CHECK(n2 > 0);
  }
}

TEST_CASE("phantom: invalid specs rejected") {
  PhantomSpec s;
  s.extent = {8, 8, 8};
  Primitive p;
  p.kind = PrimitiveKind::kSphere;
  p.cls = 1;
  p.center = {2, 4, 4};
  p.radii = {3, 3, 3};
  s.primitives = {p};
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s.primitives[0].center = {4, 4, 4};
  s.primitives[0].cls = 3;
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s.primitives[0].cls = 0;
  CHECK_THROWS_AS(generate_phantom(s), ConfigError);
  s.primitives[0].cls = 2;
  CHECK_NOTHROW(generate_phantom(s));
}

TEST_CASE("phantom: text round trip") {
  auto s = PhantomSpec::slice_ambiguous(32, 5);
  Primitive e;
  e.kind = PrimitiveKind::kEllipsoid;
  e.cls = 1;
  e.center = {3.25, 4, 5};
  e.radii = {1, 2, 3.5};
  s.primitives.push_back(e);
  s.spacing = {0.8, 0.8, 2.5};
  const auto back = PhantomSpec::parse(s.to_text());
  CHECK(back.to_text() == s.to_text());
  CHECK(back.extent == s.extent);
  CHECK(back.seed == s.seed);
  CHECK(back.primitives.size() == 3);
  CHECK(back.primitives[1].half_length == s.primitives[1].half_length);
  CHECK(back.primitives[2].radii == e.radii);
  CHECK_THROWS_AS(PhantomSpec::parse("colour = red\n"), ConfigError);
  CHECK_THROWS_AS(PhantomSpec::parse("sphere = class:1 center:1,2 radius:1\n"), ConfigError);
  CHECK_THROWS_AS(PhantomSpec::parse("extent = 8 8 x\n"), ConfigError);
}

TEST_CASE("nifti: hand-built fixture parsed field by field") {
  for (bool big : {false, true}) {
    CAPTURE(big);
    const auto path = temp_path(big ? "fixture_be.nii" : "fixture_le.nii");
    float_fixture(big).save(path);
    const auto img = read_nifti1(path);
    CHECK(img.big_endian == big);
    CHECK(img.dim[0] == 3);
    CHECK(img.shape() == std::array<std::int64_t, 3>{4, 4, 4});
    CHECK(img.datatype == kNiftiFloat32);
    CHECK(img.bitpix == 32);
    CHECK(img.vox_offset == 352.0f);
    CHECK(img.magic == "n+1");
    const auto rec = parse_nifti1(path);
    CHECK(rec.labels.shape == std::array<std::int64_t, 3>{4, 4, 4});
    CHECK(rec.labels.spacing == std::array<double, 3>{1, 1, 1});
    const auto shape = rec.labels.shape;
    for (int x = 0; x < 4; ++x)
      for (int y = 0; y < 4; ++y)
        for (int z = 0; z < 4; ++z) CHECK(voxel(rec.intensity, shape, x, y, z) == fixture_value(x, y, z));
  }
}

TEST_CASE("nifti: byte-swapped fixture parses identically") {
  const auto le = temp_path("swap_le.nii"), be = temp_path("swap_be.nii");
  float_fixture(false, 2.0f, -5.0f).save(le);
  float_fixture(true, 2.0f, -5.0f).save(be);
  const auto a = read_nifti1(le), b = read_nifti1(be);
  CHECK(a.voxels == b.voxels);
  CHECK(a.scl_slope == b.scl_slope);
  CHECK(a.voxels[1] == 2.0f * fixture_value(0, 0, 1) - 5.0f);
}

TEST_CASE("nifti: int16 and uint8 with scaling") {
  Fixture f;
  f.put<std::int32_t>(0, 348);
  const std::int16_t dim[8] = {3, 2, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < 8; ++i) f.put<std::int16_t>(40 + 2 * i, dim[i]);
  f.put<std::int16_t>(70, 4);
  f.put<std::int16_t>(72, 16);
  f.put<float>(80, 0.5f);
  f.put<float>(84, 0.5f);
  f.put<float>(88, 3.0f);
  f.put<float>(108, 352.0f);
  f.put<float>(112, 0.5f);
  f.put<float>(116, 10.0f);
  std::memcpy(f.bytes.data() + 344, "n+1", 4);
  f.put<std::int16_t>(352, -200);
  f.put<std::int16_t>(354, 300);
  const auto path = temp_path("int16.nii");
  f.save(path);
  const auto rec = parse_nifti1(path);
  CHECK(rec.labels.spacing == std::array<double, 3>{0.5, 0.5, 3.0});
  CHECK(rec.intensity.data()[0] == -90.0f);
  CHECK(rec.intensity.data()[1] == 160.0f);

  f.put<std::int16_t>(70, 2);
  f.put<std::int16_t>(72, 8);
  f.put<float>(112, 0.0f);
  f.bytes.resize(354);
  f.bytes[352] = 255;
  f.bytes[353] = 7;
  f.save(path);
  const auto u8 = read_nifti1(path);
  CHECK(u8.voxels == std::vector<float>{255.0f, 7.0f});
}

TEST_CASE("nifti: error cases") {
  const auto path = temp_path("bad.nii");
  auto f = float_fixture(false);
  auto truncated = f;
  truncated.bytes.resize(200);
  truncated.save(path);
  CHECK_THROWS_AS(read_nifti1(path), FormatError);

  auto magic = f;
  std::memcpy(magic.bytes.data() + 344, "xyz", 4);
  magic.save(path);
  CHECK_THROWS_AS(read_nifti1(path), FormatError);

  auto size = f;
  size.put<std::int32_t>(0, 540);
  size.save(path);
  CHECK_THROWS_AS(read_nifti1(path), FormatError);

  auto dtype = f;
  dtype.put<std::int16_t>(70, 64);
  dtype.save(path);
  CHECK_THROWS_AS(read_nifti1(path), UnsupportedError);

  auto four_d = f;
  four_d.put<std::int16_t>(40, 4);
  four_d.put<std::int16_t>(48, 2);
  four_d.save(path);
  CHECK_THROWS_AS(read_nifti1(path), UnsupportedError);

  auto short_data = f;
  short_data.bytes.resize(352 + 10);
  short_data.save(path);
  CHECK_THROWS_AS(read_nifti1(path), FormatError);

  CHECK_THROWS_AS(read_nifti1(temp_path("does_not_exist.nii")), IoError);
}

TEST_CASE("nifti: ni1 pair reads companion image file") {
  auto f = float_fixture(false);
  std::vector<unsigned char> image(f.bytes.begin() + 352, f.bytes.end());
  f.bytes.resize(348);
  std::memcpy(f.bytes.data() + 344, "ni1", 4);
  f.put<float>(108, 0.0f);
  f.save(temp_path("pair.hdr"));
  std::ofstream(temp_path("pair.img"), std::ios::binary)
      .write(reinterpret_cast<const char*>(image.data()), static_cast<std::streamsize>(image.size()));
  const auto img = read_nifti1(temp_path("pair.hdr"));
  CHECK(img.magic == "ni1");
  CHECK(img.voxels[16 + 4 + 1] == fixture_value(1, 1, 1));
}

TEST_CASE("nifti: write then parse is the identity on supported fields") {
  std::vector<float> values(3 * 4 * 5);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = static_cast<float>(i) - 20.0f;
  for (bool big : {false, true}) {
    for (std::int16_t dt : {kNiftiFloat32, kNiftiInt16}) {
      CAPTURE(big);
      CAPTURE(dt);
      const auto path = temp_path("roundtrip.nii");
      NiftiWriteOptions o;
      o.datatype = dt;
      o.big_endian = big;
      if (dt == kNiftiInt16) {
        o.scl_slope = 0.5f;
        o.scl_inter = 1.0f;
      }
      write_nifti1(path, {3, 4, 5}, {0.5, 1.0, 2.0}, values, o);
      const auto img = read_nifti1(path);
      CHECK(img.big_endian == big);
      CHECK(img.datatype == dt);
      CHECK(img.shape() == std::array<std::int64_t, 3>{3, 4, 5});
      CHECK(img.spacing() == std::array<double, 3>{0.5, 1.0, 2.0});
      CHECK(img.voxels == values);
    }
  }
  write_nifti1(temp_path("labels.nii"), {3, 4, 5}, {1, 1, 1}, std::vector<float>(60, 2.0f), {kNiftiUint8});
  const auto rec = parse_nifti1(temp_path("roundtrip.nii"), temp_path("labels.nii"));
  CHECK(rec.labels.labels == std::vector<std::int32_t>(60, 2));
}

TEST_CASE("sshv: round trip and errors") {
  const auto rec = generate_phantom(PhantomSpec::slice_ambiguous(16, 2));
  const auto path = temp_path("vol.sshv");
  write_sshv(path, rec);
  const auto back = read_sshv(path);
  CHECK(back.id == rec.id);
  CHECK(back.labels.shape == rec.labels.shape);
  CHECK(back.labels.labels == rec.labels.labels);
  const auto a = rec.intensity.data(), b = back.intensity.data();
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  {
    std::ofstream(path, std::ios::binary) << "NOPE";
  }
  CHECK_THROWS_AS(read_sshv(path), FormatError);
}

TEST_CASE("hu_window") {
  const auto t = Tensor::from_data({5}, {-1500.0f, -991.0f, -314.5f, 362.0f, 1000.0f});
  const auto wt = hu_window(t, -991.0f, 362.0f);
  const auto w = wt.data();
  CHECK(w[0] == 0.0f);
  CHECK(w[1] == 0.0f);
  CHECK(w[2] == doctest::Approx(0.5).epsilon(1e-6));
  CHECK(w[3] == 1.0f);
  CHECK(w[4] == 1.0f);
  CHECK_THROWS_AS(hu_window(t, 1.0f, 1.0f), ArgumentError);
  CHECK_THROWS_AS(hu_window(t, 2.0f, 1.0f), ArgumentError);

  std::vector<float> ramp;
  for (int i = -400; i <= 400; ++i) ramp.push_back(static_cast<float>(i));
  const auto r = hu_window(Tensor::from_data({static_cast<std::int64_t>(ramp.size())}, ramp), -175.0f, 250.0f);
  const auto rd = r.data();
  for (std::size_t i = 1; i < rd.size(); ++i) CHECK(rd[i] >= rd[i - 1]);
  // idempotent once mapped back into [lo, hi]
  std::vector<float> back;
  for (float v : rd) back.push_back(-175.0f + 425.0f * v);
  const auto again_t = hu_window(Tensor::from_data(r.shape(), back), -175.0f, 250.0f);
  const auto again = again_t.data();
  for (std::size_t i = 0; i < rd.size(); ++i) CHECK(again[i] == doctest::Approx(rd[i]).epsilon(1e-6));
}

TEST_CASE("sample_patch: full extent returns the volume") {
  const auto rec = generate_phantom(PhantomSpec::slice_ambiguous(16, 4));
  Rng rng(1);
  const auto p = sample_patch(rec, 16, rng, 0.5);
  CHECK(p.labels.labels == rec.labels.labels);
  const auto a = p.intensity.data(), b = rec.intensity.data();
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  CHECK_THROWS_AS(sample_patch(rec, 17, rng, 0.5), ArgumentError);
}

TEST_CASE("sample_patch: fg_bias 1 always contains the single foreground voxel") {
  PhantomSpec s;
  s.extent = {20, 20, 20};
  s.noise_sigma = 0.0;
  auto rec = generate_phantom(s);
  for (const std::array<std::int64_t, 3> fg : {std::array<std::int64_t, 3>{1, 18, 10}, {19, 0, 0}, {10, 10, 10}}) {
    rec.labels.labels.assign(rec.labels.labels.size(), 0);
    rec.labels.at(fg[0], fg[1], fg[2]) = 1;
    Rng rng(9);
    for (int i = 0; i < 200; ++i) {
      const auto p = sample_patch(rec, 6, rng, 1.0);
      CHECK(std::count(p.labels.labels.begin(), p.labels.labels.end(), 1) == 1);
    }
  }
}

TEST_CASE("sample_patch: corners uniform at fg_bias 0") {
  // intensity encodes the linear index, so a patch's first voxel names its corner
  const std::int64_t n = 8, e = 4, positions = n - e + 1;
  VolumeRecord rec;
  rec.labels = LabelVolume::zeros({n, n, n});
  rec.labels.at(0, 0, 0) = 1;
  std::vector<float> data(static_cast<std::size_t>(n * n * n));
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(i);
  rec.intensity = Tensor::from_data({1, n, n, n}, std::move(data));
  Rng rng(2024);
  const int samples = 10000;
  std::vector<std::vector<int>> counts(3, std::vector<int>(static_cast<std::size_t>(positions), 0));
  for (int i = 0; i < samples; ++i) {
    const auto idx = static_cast<std::int64_t>(sample_patch(rec, e, rng, 0.0).intensity.data()[0]);
    const std::int64_t c[3] = {idx / (n * n), (idx / n) % n, idx % n};
    for (int a = 0; a < 3; ++a) ++counts[static_cast<std::size_t>(a)][static_cast<std::size_t>(c[a])];
  }
  const double p = 1.0 / static_cast<double>(positions);
  const double expected = samples * p, sigma = std::sqrt(samples * p * (1.0 - p));
  for (const auto& axis : counts) {
    for (int c : axis) CHECK(std::fabs(c - expected) < 3.0 * sigma);
  }
}

TEST_CASE("augment: zero probabilities are the identity") {
  const auto p = indexed_patch(5);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto q = augment(p, AugmentConfig::none(), rng);
    CHECK(q.labels.labels == p.labels.labels);
    const auto a = p.intensity.data(), b = q.intensity.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
}

TEST_CASE("augment: double flip is an involution") {
  const auto p = indexed_patch(4, 2);
  for (int axis = 0; axis < 3; ++axis) {
    const auto once = flip(p, axis);
    CHECK(once.labels.labels != p.labels.labels);
    const auto twice = flip(once, axis);
    CHECK(twice.labels.labels == p.labels.labels);
    const auto a = p.intensity.data(), b = twice.intensity.data();
    CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
  }
  CHECK_THROWS_AS(flip(p, 3), ArgumentError);
}

TEST_CASE("augment: rot90 index-transform oracle") {
  const std::int64_t n = 5;
  const auto p = indexed_patch(n);
  for (auto [a, b] : {std::pair{0, 1}, std::pair{0, 2}, std::pair{1, 2}}) {
    // quarter turn as a forward map on coordinates: (u, v) -> (n-1-v, u) in plane (a, b)
    auto forward = [&](std::array<std::int64_t, 3> s) {
      auto d = s;
      d[static_cast<std::size_t>(a)] = n - 1 - s[static_cast<std::size_t>(b)];
      d[static_cast<std::size_t>(b)] = s[static_cast<std::size_t>(a)];
      return d;
    };
    for (int k = 0; k <= 4; ++k) {
      CAPTURE(a);
      CAPTURE(k);
      const auto r = rot90(p, a, b, k);
      std::set<std::array<std::int64_t, 3>> expected_fg, actual_fg;
      for (std::int64_t x = 0; x < n; ++x)
        for (std::int64_t y = 0; y < n; ++y)
          for (std::int64_t z = 0; z < n; ++z) {
            std::array<std::int64_t, 3> d{x, y, z};
            for (int i = 0; i < k; ++i) d = forward(d);
            if (p.labels.at(x, y, z) == 1) expected_fg.insert(d);
            if (r.labels.at(x, y, z) == 1) actual_fg.insert({x, y, z});
            CHECK(voxel(r.intensity, r.labels.shape, d[0], d[1], d[2]) == voxel(p.intensity, p.labels.shape, x, y, z));
          }
      CHECK(expected_fg == actual_fg);
    }
  }
  CHECK(rot90(p, 0, 1, 4).labels.labels == p.labels.labels);
}

TEST_CASE("augment: random pipeline keeps intensity-label correspondence") {
  const std::int64_t n = 6;
  const auto p = indexed_patch(n);
  AugmentConfig cfg;
  cfg.p_flip = 0.7;
  cfg.p_rotate = 0.7;
  cfg.p_intensity_scale = 0.0;
  cfg.p_intensity_shift = 0.0;
  Rng rng(77);
  int changed = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto q = augment(p, cfg, rng);
    changed += q.labels.labels != p.labels.labels;
    const auto d = q.intensity.data();
    std::set<float> seen(d.begin(), d.end());
    CHECK(seen.size() == d.size());
    for (std::size_t i = 0; i < d.size(); ++i) {
      const auto src = static_cast<std::size_t>(d[i]);
      CHECK(q.labels.labels[i] == p.labels.labels[src]);
    }
  }
  CHECK(changed > 0);
}

TEST_CASE("augment: intensity scale and shift touch intensity only") {
  const auto p = indexed_patch(3);
  AugmentConfig cfg = AugmentConfig::none();
  cfg.p_intensity_scale = 1.0;
  cfg.p_intensity_shift = 1.0;
  Rng rng(5);
  const auto q = augment(p, cfg, rng);
  CHECK(q.labels.labels == p.labels.labels);
  const auto a = p.intensity.data(), b = q.intensity.data();
  // affine in the index: b = s a + t with s in [0.9, 1.1], t in [-0.1, 0.1]
  const double s = (b[10] - b[0]) / (a[10] - a[0]);
  const double t = b[0] - s * a[0];
  CHECK(s >= 0.9 - 1e-6);
  CHECK(s <= 1.1 + 1e-6);
  CHECK(t >= -0.1 - 1e-5);
  CHECK(t <= 0.1 + 1e-5);
  cfg.p_flip = 1.5;
  CHECK_THROWS_AS(augment(p, cfg, rng), ConfigError);
}

TEST_CASE("augment: determinism under seed") {
  const auto p = indexed_patch(4);
  AugmentConfig cfg;
  Rng r1(42), r2(42);
  for (int i = 0; i < 10; ++i) {
    const auto a = augment(p, cfg, r1), b = augment(p, cfg, r2);
    CHECK(a.labels.labels == b.labels.labels);
    const auto da = a.intensity.data(), db = b.intensity.data();
    CHECK(std::equal(da.begin(), da.end(), db.begin(), db.end()));
  }
}
