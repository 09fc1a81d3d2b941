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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "sshunet/errors.hpp"
#include "sshunet/metrics.hpp"

using namespace sshunet;

namespace {

LabelVolume with_voxels(std::array<std::int64_t, 3> shape, const std::vector<std::array<int, 3>>& voxels, int k = 1,
                        std::array<double, 3> spacing = {1, 1, 1}) {
  auto v = LabelVolume::zeros(shape, spacing);
  for (const auto& p : voxels) v.at(p[0], p[1], p[2]) = k;
  return v;
}

// plate of class 1 filling the (y, z) plane at x
void plate(LabelVolume& v, int x) {
  for (int y = 0; y < v.shape[1]; ++y)
    for (int z = 0; z < v.shape[2]; ++z) v.at(x, y, z) = 1;
}

// All-pairs surface Dice: boundary by explicit 6-neighbour scan, nearest
// distance by exhaustive search.
double nsd_oracle(const LabelVolume& a, const LabelVolume& b, int k, double tau) {
  auto surface = [&](const LabelVolume& v) {
    std::vector<std::array<double, 3>> pts;
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int x = 0; x < v.shape[0]; ++x)
      for (int y = 0; y < v.shape[1]; ++y)
        for (int z = 0; z < v.shape[2]; ++z) {
          if (v.at(x, y, z) != k) continue;
          bool edge = false;
          for (const auto& o : off) {
            const int nx = x + o[0], ny = y + o[1], nz = z + o[2];
            if (nx < 0 || ny < 0 || nz < 0 || nx >= v.shape[0] || ny >= v.shape[1] || nz >= v.shape[2] ||
                v.at(nx, ny, nz) != k) {
              edge = true;
            }
          }
          if (edge) pts.push_back({x * v.spacing[0], y * v.spacing[1], z * v.spacing[2]});
        }
    return pts;
  };
  const auto sa = surface(a), sb = surface(b);
  if (sa.empty() && sb.empty()) return 1.0;
  if (sa.empty() || sb.empty()) return 0.0;
  auto close = [&](const std::vector<std::array<double, 3>>& from, const std::vector<std::array<double, 3>>& to) {
    int n = 0;
    for (const auto& p : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& q : to) {
        best = std::min(best, std::sqrt((p[0] - q[0]) * (p[0] - q[0]) + (p[1] - q[1]) * (p[1] - q[1]) +
                                        (p[2] - q[2]) * (p[2] - q[2])));
      }
      n += best <= tau + 1e-9;
    }
    return n;
  };
  return static_cast<double>(close(sa, sb) + close(sb, sa)) / static_cast<double>(sa.size() + sb.size());
}

LabelVolume random_blobs(std::array<std::int64_t, 3> shape, std::mt19937_64& rng, int classes,
                         std::array<double, 3> spacing) {
  auto v = LabelVolume::zeros(shape, spacing);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 1; k < classes; ++k) {
    const double cx = u(rng) * shape[0], cy = u(rng) * shape[1], cz = u(rng) * shape[2], r = 1.5 + 2.5 * u(rng);
    for (int x = 0; x < shape[0]; ++x)
      for (int y = 0; y < shape[1]; ++y)
        for (int z = 0; z < shape[2]; ++z) {
          const double d = (x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz);
          if (d <= r * r && u(rng) > 0.1) v.at(x, y, z) = k;
        }
  }
  return v;
}

}  // namespace

TEST_CASE("dice hand cases") {
  const std::array<std::int64_t, 3> s{4, 4, 4};
  const auto a = with_voxels(s, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
  const auto disjoint = with_voxels(s, {{3, 3, 0}, {3, 3, 1}, {3, 3, 2}, {3, 3, 3}});
  const auto half = with_voxels(s, {{0, 0, 0}, {0, 0, 1}, {2, 2, 2}, {2, 2, 3}});
  CHECK(dice(a, a, 1) == 1.0);
  CHECK(dice(a, disjoint, 1) == 0.0);
  CHECK(dice(a, half, 1) == 0.5);
  SUBCASE("empty conventions") {
    const auto empty = LabelVolume::zeros(s);
    CHECK(dice(empty, empty, 1) == 1.0);
    CHECK(dice(a, empty, 1) == 0.0);
    CHECK(dice(empty, a, 1) == 0.0);
  }
  SUBCASE("shape mismatch") { CHECK_THROWS_AS(dice(a, LabelVolume::zeros({4, 4, 5}), 1), ArgumentError); }
}

TEST_CASE("dice properties") {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const auto y = random_blobs({6, 7, 5}, rng, 3, {1, 1, 1});
    const auto p = random_blobs({6, 7, 5}, rng, 3, {1, 1, 1});
    for (int k = 1; k < 3; ++k) {
      const double d = dice(y, p, k);
      CHECK(d == dice(p, y, k));
      CHECK(d >= 0.0);
      CHECK(d <= 1.0);
      // a shared permutation of voxel positions leaves dice unchanged
      auto yy = y, pp = p;
      std::vector<std::size_t> perm(y.labels.size());
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      std::shuffle(perm.begin(), perm.end(), rng);
      for (std::size_t i = 0; i < perm.size(); ++i) {
        yy.labels[i] = y.labels[perm[i]];
        pp.labels[i] = p.labels[perm[i]];
      }
      CHECK(dice(yy, pp, k) == d);
    }
  }
}

TEST_CASE("nsd hand cases") {
  const std::array<std::int64_t, 3> s{8, 5, 5};
  auto y = LabelVolume::zeros(s), p = LabelVolume::zeros(s);
  plate(y, 2);
  plate(p, 5);
  CHECK(nsd(y, y, 1, 1.0) == 1.0);
  CHECK(nsd(y, p, 1, 1.0) == 0.0);
  CHECK(nsd(y, p, 1, 3.0) == 1.0);
  CHECK(nsd(y, p, 1, 2.9) == 0.0);
  SUBCASE("single voxel shifted by one step") {
    const auto a = with_voxels({5, 5, 5}, {{2, 2, 2}});
    const auto b = with_voxels({5, 5, 5}, {{2, 2, 3}});
    CHECK(nsd(a, b, 1, 1.0) == 1.0);
    CHECK(nsd(a, b, 1, 0.5) == 0.0);
  }
  SUBCASE("spacing scales distances") {
    const auto a = with_voxels({5, 5, 5}, {{2, 2, 2}}, 1, {1, 1, 2});
    const auto b = with_voxels({5, 5, 5}, {{2, 2, 3}}, 1, {1, 1, 2});
    CHECK(nsd(a, b, 1, 1.0) == 0.0);
    CHECK(nsd(a, b, 1, 2.0) == 1.0);
  }
  SUBCASE("empty conventions") {
    const auto empty = LabelVolume::zeros(s);
    CHECK(nsd(empty, empty, 1) == 1.0);
    CHECK(nsd(y, empty, 1) == 0.0);
  }
  SUBCASE("spacing mismatch") {
    CHECK_THROWS_AS(nsd(y, LabelVolume::zeros(s, {1, 1, 2}), 1), ArgumentError);
    CHECK_THROWS_AS(nsd(y, y, 1, -1.0), ArgumentError);
  }
}

TEST_CASE("nsd matches the all-pairs oracle") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 12; ++trial) {
    const std::array<double, 3> spacing = trial % 2 ? std::array<double, 3>{1.0, 0.8, 1.5}
                                                    : std::array<double, 3>{1.0, 1.0, 1.0};
    const auto y = random_blobs({9, 8, 7}, rng, 3, spacing);
    const auto p = random_blobs({9, 8, 7}, rng, 3, spacing);
    for (double tau : {0.0, 1.0, 1.5, 2.5, 4.0})
      for (int k = 1; k < 3; ++k) {
        CAPTURE(tau);
        const double got = nsd(y, p, k, tau);
        CHECK(got == doctest::Approx(nsd_oracle(y, p, k, tau)).epsilon(1e-12));
        CHECK(got >= 0.0);
        CHECK(got <= 1.0);
        if (std::count(y.labels.begin(), y.labels.end(), k)) CHECK(nsd(y, y, k, tau) == 1.0);
      }
  }
}

TEST_CASE("case evaluation and aggregation") {
  const std::array<std::int64_t, 3> s{4, 4, 4};
  auto y = LabelVolume::zeros(s);
  y.at(0, 0, 0) = 1;
  y.at(0, 0, 1) = 1;
  auto p = y;
  p.at(0, 0, 1) = 0;
  p.at(3, 3, 3) = 1;
  // class 2 absent from both; class 1: |Y|=2, |P|=2, overlap 1
  const auto r = evaluate_case(y, p, 3);
  REQUIRE(r.classes.size() == 2);
  CHECK(r.classes[0].dice == 0.5);
  CHECK(r.classes[0].present);
  CHECK_FALSE(r.classes[1].present);
  REQUIRE(r.mean_dice);
  CHECK(*r.mean_dice == 0.5);

  SUBCASE("one case is the identity") {
    const auto a = aggregate({r});
    CHECK(*a.mean_dice == *r.mean_dice);
    CHECK(*a.mean_nsd == *r.mean_nsd);
  }
  SUBCASE("two cases average") {
    MetricReport c1, c2;
    c1.classes = {{1, 0.4, 0.3, 5, 5, true}};
    c2.classes = {{1, 0.6, 0.5, 5, 5, true}};
    const auto a = aggregate({c1, c2});
    CHECK(a.classes[0].dice == doctest::Approx(0.5));
    CHECK(*a.mean_dice == doctest::Approx(0.5));
    CHECK(*a.mean_nsd == doctest::Approx(0.4));
  }
  SUBCASE("class absent in every case leaves the macro mean") {
    MetricReport c1, c2;
    c1.classes = {{1, 0.8, 0.8, 5, 5, true}, {2, 1.0, 1.0, 0, 0, false}};
    c2.classes = {{1, 0.6, 0.6, 5, 5, true}, {2, 1.0, 1.0, 0, 0, false}};
    const auto a = aggregate({c1, c2});
    CHECK(*a.mean_dice == doctest::Approx(0.7));
    CHECK_FALSE(a.classes[1].present);
  }
  SUBCASE("class present in one case only") {
    MetricReport c1, c2;
    c1.classes = {{1, 0.8, 0.8, 5, 5, true}, {2, 0.2, 0.2, 3, 3, true}};
    c2.classes = {{1, 0.6, 0.6, 5, 5, true}, {2, 1.0, 1.0, 0, 0, false}};
    const auto a = aggregate({c1, c2});
    CHECK(a.classes[1].dice == doctest::Approx(0.2));
    CHECK(*a.mean_dice == doctest::Approx((0.7 + 0.2) / 2));
  }
  SUBCASE("labels out of range") {
    auto bad = y;
    bad.at(1, 1, 1) = 3;
    CHECK_THROWS_AS(evaluate_case(y, bad, 3), ArgumentError);
  }
}
