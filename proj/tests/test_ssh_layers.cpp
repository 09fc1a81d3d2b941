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

#include <numeric>
#include <random>

#include "oracles.hpp"
#include "sshunet/errors.hpp"
#include "sshunet/gradcheck.hpp"
#include "sshunet/ssh_layers.hpp"

using namespace sshunet;
using sshunet::testing::random_off_kink;
using sshunet::testing::random_tensor;
using sshunet::testing::reference_shift;

namespace {
std::vector<float> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Tensor iota_volume(std::int64_t n) {
  std::vector<float> v(static_cast<std::size_t>(n * n * n));
  std::iota(v.begin(), v.end(), 0.0f);
  return Tensor::from_data({1, 1, n, n, n}, std::move(v));
}
}  // namespace

TEST_CASE("create_multi_view") {
  auto v = iota_volume(2);
  auto mv = create_multi_view(v);
  REQUIRE(mv.tensor.shape() == Shape{3, 1, 2, 2, 2});
  CHECK(mv.base_batch == 1);

  SUBCASE("yz view slice 0 is the x=0 plane") {
    auto yz = mv.view(ViewBatch::kYZ);
    CHECK(std::vector<float>(yz.data().begin(), yz.data().begin() + 4) == std::vector<float>{0, 1, 2, 3});
  }
  SUBCASE("index oracle over every element") {
    const int n = 2;
    auto xy = mv.view(ViewBatch::kXY);
    auto xz = mv.view(ViewBatch::kXZ);
    auto at = [n](const Tensor& t, int a, int b, int c) { return t.data()[(a * n + b) * n + c]; };
    for (int x = 0; x < n; ++x)
      for (int y = 0; y < n; ++y)
        for (int z = 0; z < n; ++z) {
          CHECK(at(xy, z, x, y) == at(v, x, y, z));
          CHECK(at(xz, y, x, z) == at(v, x, y, z));
        }
    CHECK(at(xy, 1, 0, 1) == 3.0f);
  }
  SUBCASE("anisotropic volume is rejected") {
    CHECK_THROWS_AS(create_multi_view(Tensor::zeros({1, 1, 2, 2, 3})), ArgumentError);
  }
}

TEST_CASE("reverse_multi_view") {
  std::mt19937_64 rng(17);
  SUBCASE("round trip is exact") {
    for (int n : {1, 3, 4, 7}) {
      auto v = random_tensor({2, 3, n, n, n}, rng);
      for (const auto& r : reverse_multi_view(create_multi_view(v))) CHECK(to_vec(r) == to_vec(v));
    }
  }
  SUBCASE("views are independent") {
    auto v = random_tensor({1, 2, 3, 3, 3}, rng);
    auto mv = create_multi_view(v);
    std::vector<float> data = to_vec(mv.tensor);
    std::fill(data.begin(), data.begin() + v.numel(), 0.0f);
    auto r = reverse_multi_view(ViewBatch{Tensor::from_data(mv.tensor.shape(), data), 1});
    for (float x : r[0].data()) CHECK(x == 0.0f);
    CHECK(to_vec(r[1]) == to_vec(v));
    CHECK(to_vec(r[2]) == to_vec(v));
  }
  SUBCASE("sum of the three canonical views is 3v") {
    auto v = random_tensor({2, 2, 4, 4, 4}, rng);
    auto r = reverse_multi_view(create_multi_view(v));
    for (std::int64_t i = 0; i < v.numel(); ++i) {
      CHECK(r[0].data()[i] + r[1].data()[i] + r[2].data()[i] == doctest::Approx(3.0 * v.data()[i]));
    }
  }
  SUBCASE("batch not divisible by 3") {
    CHECK_THROWS_AS(as_view_batch(Tensor::zeros({4, 1, 2, 2, 2})), ArgumentError);
    CHECK_THROWS_AS(reverse_multi_view(ViewBatch{Tensor::zeros({4, 1, 2, 2, 2}), 1}), ArgumentError);
  }
}

TEST_CASE("slice_shift") {
  SUBCASE("fraction 0 is the identity") {
    std::mt19937_64 rng(1);
    auto t = random_tensor({2, 4, 3, 2, 2}, rng);
    CHECK(to_vec(slice_shift(t, ShiftSpec{{0, 1}})) == to_vec(t));
  }
  SUBCASE("four channels, three slices, fraction 1/4") {
    auto t = Tensor::from_data({1, 4, 3, 1, 1}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12});
    auto s = slice_shift(t, ShiftSpec{{1, 4}});
    CHECK(to_vec(s) == std::vector<float>{0, 1, 2, 5, 6, 0, 7, 8, 9, 10, 11, 12});
  }
  SUBCASE("forward then backward zeroes the boundary only") {
    // channel 0 of a 2-channel tensor at fraction 1/2 shifts forward,
    // channel 1 backward; route the forward result into channel 1.
    auto fwd = slice_shift(Tensor::from_data({1, 2, 3, 1, 1}, {1, 2, 3, 0, 0, 0}), ShiftSpec{{1, 2}});
    CHECK(std::vector<float>(fwd.data().begin(), fwd.data().begin() + 3) == std::vector<float>{0, 1, 2});
    auto bwd = slice_shift(Tensor::from_data({1, 2, 3, 1, 1}, {0, 0, 0, 0, 1, 2}), ShiftSpec{{1, 2}});
    CHECK(std::vector<float>(bwd.data().begin() + 3, bwd.data().end()) == std::vector<float>{1, 2, 0});
  }
  SUBCASE("matches the per-index reference on random tensors") {
    std::mt19937_64 rng(23);
    for (auto [c, f] : std::vector<std::pair<int, Fraction>>{{8, {1, 4}}, {7, {1, 4}}, {6, {1, 2}}, {16, {1, 16}}}) {
      auto t = random_tensor({2, c, 5, 3, 2}, rng);
      auto got = slice_shift(t, ShiftSpec{f});
      CHECK(to_vec(got) == reference_shift(to_vec(t), t.shape(), f.of(c)));
    }
  }
  SUBCASE("linearity") {
    std::mt19937_64 rng(29);
    auto x = random_tensor({1, 8, 4, 2, 2}, rng);
    auto y = random_tensor({1, 8, 4, 2, 2}, rng);
    const ShiftSpec spec{{1, 4}};
    auto lhs = slice_shift(add(scale(x, 2.0f), scale(y, -3.0f)), spec);
    auto rhs = add(scale(slice_shift(x, spec), 2.0f), scale(slice_shift(y, spec), -3.0f));
    CHECK(to_vec(lhs) == to_vec(rhs));
  }
  SUBCASE("more than all channels") {
    CHECK_THROWS_AS(slice_shift(Tensor::zeros({1, 4, 2, 1, 1}), ShiftSpec{{3, 4}}), ArgumentError);
  }
  SUBCASE("gradient is the opposite shift") {
    std::mt19937_64 rng(31);
    auto u = random_tensor({1, 8, 4, 2, 2}, rng);
    GradcheckOptions o;
    o.cotangent = u;
    auto r = gradcheck([&](const Tensor& t) { return slice_shift(t, ShiftSpec{{1, 4}}); },
                       random_tensor({1, 8, 4, 2, 2}, rng), o);
    CHECK(r.max_rel_error < 1e-3);
  }
}

TEST_CASE("shift_mac_equivalence") {
  SUBCASE("hand case") {
    const std::vector<float> x{1, 2, 3, 4};
    auto r = shift_mac_equivalence(x, {1, 0, -1});
    CHECK(r.direct == std::vector<double>{-2, -2, -2, 3});
    CHECK(r.decomposed == r.direct);
  }
  SUBCASE("identity tap") {
    const std::vector<float> x{5, -1, 2, 8, 3};
    auto r = shift_mac_equivalence(x, {0, 1, 0});
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(r.decomposed[i] == x[i]);
  }
  SUBCASE("random sequences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<float> d(-2, 2);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<float> x(16);
      for (auto& v : x) v = d(rng);
      auto r = shift_mac_equivalence(x, {d(rng), d(rng), d(rng)});
      CHECK(r.max_abs_diff < 1e-6);
    }
  }
  SUBCASE("too short") { CHECK_THROWS_AS(shift_mac_equivalence(std::vector<float>{1, 2}, {1, 1, 1}), ArgumentError); }
}

TEST_CASE("residual_block") {
  std::mt19937_64 rng(41);
  Rng init(5);

  SUBCASE("zero conv weights reduce the block to LeakyReLU(input)") {
    ResidualBlockConfig cfg{4, 4, std::nullopt};
    ParamStore store;
    auto p = init_residual_block(cfg, store, "b", init);
    std::fill(p.conv1_weight.mutable_data().begin(), p.conv1_weight.mutable_data().end(), 0.0f);
    std::fill(p.conv2_weight.mutable_data().begin(), p.conv2_weight.mutable_data().end(), 0.0f);
    auto x = random_tensor({1, 4, 3, 4, 4}, rng);
    CHECK(to_vec(residual_block(x, cfg, p)) == to_vec(leaky_relu(x)));
  }
  SUBCASE("single-slice input: shifted channels see only zeros") {
    ResidualBlockConfig cfg{8, 8, ShiftSpec{{1, 4}}};
    auto x = random_tensor({1, 8, 1, 4, 4}, rng);
    auto s = slice_shift(x, *cfg.shift);
    for (int c = 0; c < 4; ++c)
      for (int i = 0; i < 16; ++i) CHECK(s.data()[c * 16 + i] == 0.0f);
    for (int i = 64; i < 128; ++i) CHECK(s.data()[i] == x.data()[i]);
    // the block itself must then equal a no-shift block fed the zeroed input
    ParamStore store;
    auto p = init_residual_block(cfg, store, "b", init);
    ResidualBlockConfig plain = cfg;
    plain.shift.reset();
    auto with_shift = residual_block(x, cfg, p);
    auto h = leaky_relu(instance_norm(conv3d(s, cfg.conv1(), p.conv1_weight), p.norm1_gamma, p.norm1_beta));
    h = instance_norm(conv3d(h, cfg.conv2(), p.conv2_weight), p.norm2_gamma, p.norm2_beta);
    CHECK(to_vec(with_shift) == to_vec(leaky_relu(add(h, x))));
  }
  SUBCASE("fraction 0 reproduces the plain block bit for bit") {
    ResidualBlockConfig plain{4, 8, std::nullopt, ShiftPlacement::kPreConv, {1, 3, 3}, {1, 2, 2}};
    ResidualBlockConfig zero = plain;
    zero.shift = ShiftSpec{{0, 1}};
    ParamStore store;
    auto p = init_residual_block(plain, store, "b", init);
    auto x = random_tensor({1, 4, 4, 8, 8}, rng);
    CHECK(to_vec(residual_block(x, plain, p)) == to_vec(residual_block(x, zero, p)));
  }
  SUBCASE("stride and projection shapes") {
    ResidualBlockConfig cfg{2, 6, ShiftSpec{{1, 4}}, ShiftPlacement::kPreConv, {1, 3, 3}, {1, 2, 2}};
    ParamStore store;
    auto p = init_residual_block(cfg, store, "enc1", init);
    CHECK(store.contains("enc1.proj.weight"));
    auto y = residual_block(random_tensor({2, 2, 4, 8, 8}, rng), cfg, p);
    CHECK(y.shape() == Shape{2, 6, 4, 4, 4});
  }
  SUBCASE("between-convs placement differs from pre-conv") {
    ResidualBlockConfig pre{8, 8, ShiftSpec{{1, 4}}};
    ResidualBlockConfig mid = pre;
    mid.placement = ShiftPlacement::kBetweenConvs;
    ParamStore store;
    auto p = init_residual_block(pre, store, "b", init);
    auto x = random_tensor({1, 8, 4, 4, 4}, rng);
    CHECK(to_vec(residual_block(x, pre, p)) != to_vec(residual_block(x, mid, p)));
  }
  SUBCASE("channel mismatch") {
    ResidualBlockConfig cfg{4, 4, std::nullopt};
    ParamStore store;
    auto p = init_residual_block(cfg, store, "b", init);
    CHECK_THROWS_AS(residual_block(Tensor::zeros({1, 3, 2, 2, 2}), cfg, p), ArgumentError);
  }
  SUBCASE("gradcheck through the full block") {
    ResidualBlockConfig cfg{2, 4, ShiftSpec{{1, 4}}, ShiftPlacement::kPreConv, {1, 3, 3}, {1, 1, 1}};
    ParamStore store;
    auto p = init_residual_block(cfg, store, "b", init);
    auto x = random_off_kink({1, 2, 4, 4, 4}, rng);
    auto u = random_tensor({1, 4, 4, 4, 4}, rng);
    auto f = [&]() { return residual_block(x, cfg, p); };
    GradcheckOptions o;
    o.cotangent = u;
    CHECK(gradcheck(f, x, o).max_rel_error < 1e-3);
    CHECK(gradcheck(f, p.conv1_weight, o).max_rel_error < 1e-3);
    CHECK(gradcheck(f, p.proj_weight, o).max_rel_error < 1e-3);
    CHECK(gradcheck(f, p.norm2_gamma, o).max_rel_error < 1e-3);
  }
}

TEST_CASE("multi_view_fusion") {
  std::mt19937_64 rng(43);
  Rng init(9);
  const int channels = 4;
  const int classes = 2;

  auto identity_head = [&](ParamStore& store) {
    auto h = init_head(channels, classes, store, "head", init);
    auto w1 = h.conv1_weight.mutable_data();
    std::fill(w1.begin(), w1.end(), 0.0f);
    for (int c = 0; c < channels; ++c) w1[c * channels + c] = 1.0f;
    auto w2 = h.conv2_weight.mutable_data();
    std::fill(w2.begin(), w2.end(), 0.0f);
    for (int k = 0; k < classes; ++k) w2[k * channels + k] = 1.0f;
    return h;
  };

  SUBCASE("identical views with identity head give 3x the first K channels") {
    ParamStore store;
    auto head = identity_head(store);
    auto v = random_tensor({1, channels, 3, 3, 3}, rng, 0.1f, 1.0f);
    auto logits = multi_view_fusion(create_multi_view(v), head);
    REQUIRE(logits.shape() == Shape{1, classes, 3, 3, 3});
    for (int i = 0; i < classes * 27; ++i) CHECK(logits.data()[i] == doctest::Approx(3.0 * v.data()[i]));
  }
  SUBCASE("zeroing one view equals fusing the other two") {
    ParamStore store;
    auto head = init_head(channels, classes, store, "head", init);
    auto v = random_tensor({1, channels, 3, 3, 3}, rng);
    auto mv = create_multi_view(v);
    auto data = to_vec(mv.tensor);
    std::fill(data.begin() + v.numel() * 2, data.end(), 0.0f);  // xz view
    auto got = multi_view_fusion(ViewBatch{Tensor::from_data(mv.tensor.shape(), data), 1}, head);
    auto r = reverse_multi_view(mv);
    auto want = head_forward(add(r[0], r[1]), head);
    for (std::int64_t i = 0; i < got.numel(); ++i) CHECK(got.data()[i] == doctest::Approx(want.data()[i]));
  }
  SUBCASE("swapping xy and xz entries is invisible for a symmetric volume") {
    // v[x, y, z] = f(x) + f(y) + f(z) is invariant under every axis swap, so
    // the reverse-permuted xy and xz contents coincide.
    ParamStore store;
    auto head = init_head(channels, classes, store, "head", init);
    const int n = 3;
    std::vector<float> f{3.0f, -7.0f, 11.0f};  // integers keep the sums exact
    std::vector<float> data(static_cast<std::size_t>(channels * n * n * n));
    for (int c = 0; c < channels; ++c)
      for (int x = 0; x < n; ++x)
        for (int y = 0; y < n; ++y)
          for (int z = 0; z < n; ++z) data[((c * n + x) * n + y) * n + z] = (c + 1) * (f[x] + f[y] + f[z]);
    auto mv = create_multi_view(Tensor::from_data({1, channels, n, n, n}, data));
    auto swapped = concat_batch({mv.view(ViewBatch::kXZ), mv.view(ViewBatch::kYZ), mv.view(ViewBatch::kXY)});
    auto a = multi_view_fusion(mv, head);
    auto b = multi_view_fusion(ViewBatch{swapped, 1}, head);
    CHECK(to_vec(a) == to_vec(b));

    // and a non-symmetric volume does notice the swap
    auto v = random_tensor({1, channels, n, n, n}, rng);
    auto mv2 = create_multi_view(v);
    auto swapped2 = concat_batch({mv2.view(ViewBatch::kXZ), mv2.view(ViewBatch::kYZ), mv2.view(ViewBatch::kXY)});
    CHECK(to_vec(multi_view_fusion(mv2, head)) != to_vec(multi_view_fusion(ViewBatch{swapped2, 1}, head)));
  }
  SUBCASE("gradcheck of the fusion head") {
    ParamStore store;
    auto head = init_head(channels, classes, store, "head", init);
    auto x = random_off_kink({3, channels, 2, 2, 2}, rng);
    auto u = random_tensor({1, classes, 2, 2, 2}, rng);
    auto f = [&]() { return multi_view_fusion(ViewBatch{x, 1}, head); };
    GradcheckOptions o;
    o.cotangent = u;
    CHECK(gradcheck(f, x, o).max_rel_error < 1e-3);
    CHECK(gradcheck(f, head.conv1_weight, o).max_rel_error < 1e-3);
    CHECK(gradcheck(f, head.conv2_bias, o).max_rel_error < 1e-3);
  }
  SUBCASE("batch not divisible by 3") {
    ParamStore store;
    auto head = init_head(channels, classes, store, "head", init);
    CHECK_THROWS_AS(multi_view_fusion(ViewBatch{Tensor::zeros({2, channels, 2, 2, 2}), 1}, head), ArgumentError);
  }
}
