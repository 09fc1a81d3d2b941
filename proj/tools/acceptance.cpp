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

// Acceptance checks 1-10. One PASS/FAIL line per criterion; exit status is
// nonzero when any selected criterion fails. Arguments select criteria by
// number; no arguments runs all of them.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sshunet/complexity.hpp"
#include "sshunet/data_io.hpp"
#include "sshunet/errors.hpp"
#include "sshunet/gradcheck.hpp"
#include "sshunet/metrics.hpp"
#include "sshunet/network.hpp"
#include "sshunet/ssh_layers.hpp"
#include "sshunet/trainer.hpp"

using namespace sshunet;
namespace fs = std::filesystem;
using sshunet::testing::random_off_kink;
using sshunet::testing::random_tensor;

namespace {

// Pinned tolerances and budgets.
constexpr double kShiftMacTol = 1e-6;
constexpr double kShiftMacSeconds = 1.0;
constexpr double kRoundTripSeconds = 1.0;
constexpr double kGradTol = 1e-3;
constexpr double kGradSeconds = 30.0;
constexpr double kConvTol = 1e-5;
constexpr double kConvSeconds = 10.0;
constexpr double kTrendMargin = 0.03;
constexpr double kTrendSeconds = 15 * 60.0;
constexpr double kOverfitDice = 0.90;
constexpr double kOverfitSeconds = 5 * 60.0;

// Ablation trend setup: slice-ambiguous phantoms, fixed budget, three seeds.
constexpr std::int64_t kTrendSteps = 600;
constexpr std::int64_t kTrendExtent = 16;
constexpr std::int64_t kTrendTrain = 8;
constexpr std::int64_t kTrendVal = 8;
constexpr std::int64_t kTrendPatch = 16;
constexpr double kTrendLr = 3e-3;
constexpr std::uint64_t kTrendSeeds[] = {0, 1, 2};

// Overfit setup: tiny multi-view net memorising four phantoms.
constexpr std::int64_t kOverfitSteps = 300;
constexpr std::int64_t kOverfitExtent = 16;
constexpr std::int64_t kOverfitVolumes = 4;
constexpr double kOverfitLr = 3e-3;
constexpr std::uint64_t kOverfitSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

class Stopwatch {
 public:
  double seconds() const { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_).count(); }

 private:
  std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::vector<float> to_vec(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

Outcome shift_mac() {
  Stopwatch sw;
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> len(3, 64);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    std::vector<float> x(static_cast<std::size_t>(len(rng)));
    for (auto& v : x) v = u(rng);
    const std::array<float, 3> w{u(rng), u(rng), u(rng)};
    worst = std::max(worst, shift_mac_equivalence(x, w).max_abs_diff);
  }
  const double s = sw.seconds();
  return {worst <= kShiftMacTol && s < kShiftMacSeconds,
          "1000 trials, max |direct - decomposed| " + num(worst) + " (tol 1e-6), " + num(s) + " s"};
}

Outcome multi_view_round_trip() {
  Stopwatch sw;
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> extent(1, 16), small(1, 2), chans(1, 3);
  int exact = 0;
  for (int t = 0; t < 100; ++t) {
    const std::int64_t n = extent(rng);
    const auto v = random_tensor({small(rng), chans(rng), n, n, n}, rng);
    const auto back = reverse_multi_view(create_multi_view(v));
    bool same = true;
    for (const auto& view : back) same = same && view.shape() == v.shape() && to_vec(view) == to_vec(v);
    exact += same;
  }
  const double s = sw.seconds();
  return {exact == 100 && s < kRoundTripSeconds,
          std::to_string(exact) + "/100 volumes exact, " + num(s) + " s"};
}

Outcome zero_cost_shift() {
  const std::vector<std::vector<int>> widths{{4, 8}, {8, 16, 32}, {16, 32, 64, 128}, {32, 64, 128, 256, 320}};
  const std::vector<Shape> inputs{{1, 16, 16, 16}, {1, 128, 128, 128}, {2, 1, 32, 32, 32}};
  int configs = 0, equal = 0;
  for (const auto& w : widths) {
    for (auto placement : {ShiftPlacement::kPreConv, ShiftPlacement::kBetweenConvs}) {
      for (const auto& fraction : {Fraction{1, 4}, Fraction{1, 8}, Fraction{1, 2}}) {
        auto make = [&](Variant v) {
          UNetConfig c;
          c.variant = v;
          c.stage_widths = w;
          c.placement = placement;
          c.shift_fraction = fraction;
          return c;
        };
        const auto plain = make(Variant::kPlain2d), shift = make(Variant::kShift2d),
                   mv = make(Variant::kShift2dMultiview);
        bool ok = true;
        for (const auto& in : inputs) {
          const auto p = count_flops(plain, in), s = count_flops(shift, in), m = count_flops(mv, in);
          ok = ok && p.total_params == s.total_params && s.total_params == m.total_params &&
               p.total_flops == s.total_flops;
        }
        if (w.size() <= 3) {
          const auto built = [&](const UNetConfig& c) { return SSHUNet::build(c, 0).params().scalar_count(); };
          const auto bp = built(plain);
          ok = ok && bp == built(shift) && bp == built(mv) && bp == count_params(plain).total_params;
        }
        ++configs;
        equal += ok;
      }
    }
  }
  return {equal == configs, std::to_string(equal) + "/" + std::to_string(configs) +
                                " configs with equal params (static and built) and equal FLOPs"};
}

Outcome gradients() {
  Stopwatch sw;
  std::mt19937_64 rng(4);
  Rng init(5);
  double worst = 0.0;
  auto track = [&](const GradcheckReport& r) { worst = std::max(worst, r.max_rel_error); };

  {
    GradcheckOptions o;
    o.cotangent = random_tensor({1, 8, 4, 2, 2}, rng);
    track(gradcheck([](const Tensor& t) { return slice_shift(t, ShiftSpec{{1, 4}}); },
                    random_tensor({1, 8, 4, 2, 2}, rng), o));
  }
  for (auto placement : {ShiftPlacement::kPreConv, ShiftPlacement::kBetweenConvs}) {
    ResidualBlockConfig cfg{2, 4, ShiftSpec{{1, 4}}, placement, {1, 3, 3}, {1, 1, 1}};
    ParamStore store;
    auto p = init_residual_block(cfg, store, "b", init);
    auto x = random_off_kink({1, 2, 4, 4, 4}, rng);
    GradcheckOptions o;
    o.cotangent = random_tensor({1, 4, 4, 4, 4}, rng);
    auto f = [&]() { return residual_block(x, cfg, p); };
    for (const auto& t : {x, p.conv1_weight, p.conv2_weight, p.norm1_gamma, p.proj_weight}) track(gradcheck(f, t, o));
  }
  {
    ParamStore store;
    auto head = init_head(4, 3, store, "head", init);
    auto x = random_off_kink({3, 4, 2, 2, 2}, rng);
    GradcheckOptions o;
    o.cotangent = random_tensor({1, 3, 2, 2, 2}, rng);
    auto f = [&]() { return multi_view_fusion(ViewBatch{x, 1}, head); };
    for (const auto& t : {x, head.conv1_weight, head.conv1_bias, head.conv2_weight}) track(gradcheck(f, t, o));
  }
  {
    std::vector<LabelVolume> labels;
    std::uniform_int_distribution<int> cls(0, 2);
    for (int b = 0; b < 2; ++b) {
      labels.push_back(LabelVolume::zeros({3, 3, 3}));
      for (auto& l : labels.back().labels) l = cls(rng);
    }
    GradcheckOptions o;
    o.h = 0.1;
    track(gradcheck([&](const Tensor& z) { return dice_ce_loss(z, labels); }, random_tensor({2, 3, 3, 3, 3}, rng), o));
  }
  const double s = sw.seconds();
  return {worst < kGradTol && s < kGradSeconds,
          "max relative error " + num(worst) + " (tol 1e-3), " + num(s) + " s"};
}

Outcome conv_oracle() {
  Stopwatch sw;
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<int> b(1, 2), c(1, 4), sl(1, 4), hw(1, 8), st(1, 2), bias(0, 1);
  double worst = 0.0;
  int cases = 0;
  for (int t = 0; t < 200; ++t) {
    const bool planar = t % 2 == 0;
    const Extent3 k = planar ? Extent3{1, 3, 3} : Extent3{3, 3, 3};
    const int s = st(rng);
    const Extent3 stride = planar ? Extent3{1, s, s} : Extent3{s, s, s};
    const Shape in{b(rng), c(rng), sl(rng), hw(rng), hw(rng)};
    const int c_out = c(rng);
    const bool with_bias = bias(rng) == 1;
    ConvSpec spec{static_cast<int>(in[1]), c_out, k, stride, with_bias};
    const auto x = random_tensor(in, rng);
    const auto w = random_tensor(spec.weight_shape(), rng);
    const Tensor bv = with_bias ? random_tensor({c_out}, rng) : Tensor{};
    const auto y = conv3d(x, spec, w, bv);
    Shape want_shape;
    const auto want = sshunet::testing::naive_conv3d(to_vec(x), x.shape(), to_vec(w), c_out, k, stride,
                                                     with_bias ? to_vec(bv) : std::vector<float>{}, want_shape);
    if (y.shape() != want_shape) return {false, "shape mismatch for input " + shape_str(in)};
    worst = std::max(worst, sshunet::testing::max_rel_error(y.data(), want));
    ++cases;
  }
  const double s = sw.seconds();
  return {worst < kConvTol && s < kConvSeconds, std::to_string(cases) + " planar/3D cases up to 2x4x4x8x8, max rel error " +
                                                    num(worst) + " (tol 1e-5), " + num(s) + " s"};
}

LabelVolume with_voxels(std::array<std::int64_t, 3> shape, const std::vector<std::array<int, 3>>& voxels) {
  auto v = LabelVolume::zeros(shape);
  for (const auto& p : voxels) v.at(p[0], p[1], p[2]) = 1;
  return v;
}

Outcome metric_cases() {
  const std::array<std::int64_t, 3> s{4, 4, 4};
  const auto a = with_voxels(s, {{0, 0, 0}, {0, 0, 1}, {0, 0, 2}, {0, 0, 3}});
  const auto disjoint = with_voxels(s, {{3, 3, 0}, {3, 3, 1}, {3, 3, 2}, {3, 3, 3}});
  const auto half = with_voxels(s, {{0, 0, 0}, {0, 0, 1}, {2, 2, 2}, {2, 2, 3}});
  auto plate = [](int x) {
    auto v = LabelVolume::zeros({8, 5, 5});
    for (int y = 0; y < 5; ++y)
      for (int z = 0; z < 5; ++z) v.at(x, y, z) = 1;
    return v;
  };
  const auto p2 = plate(2), p5 = plate(5);
  const double d_same = dice(a, a, 1), d_dis = dice(a, disjoint, 1), d_half = dice(a, half, 1);
  const double n_same = nsd(p2, p2, 1, 1.0), n_1 = nsd(p2, p5, 1, 1.0), n_3 = nsd(p2, p5, 1, 3.0);
  const bool ok = d_same == 1.0 && d_dis == 0.0 && d_half == 0.5 && n_same == 1.0 && n_1 == 0.0 && n_3 == 1.0;
  return {ok, "dice " + num(d_same) + "/" + num(d_dis) + "/" + num(d_half) + ", nsd(y,y) " + num(n_same) +
                  ", plates 3 mm apart: " + num(n_1) + " at 1 mm, " + num(n_3) + " at 3 mm"};
}

Outcome kernel_cost_ratio() {
  int layers = 0, exact = 0;
  for (const auto& w : std::vector<std::vector<int>>{{8, 16}, {8, 16, 32}, {16, 32, 64, 128}}) {
    UNetConfig planar;
    planar.variant = Variant::kPlain2d;
    planar.stage_widths = w;
    auto full = planar;
    full.variant = Variant::kFull3d;
    for (const auto& in : std::vector<Shape>{{1, 16, 16, 16}, {1, 128, 128, 128}}) {
      const auto p = count_flops(planar, in), f = count_flops(full, in);
      auto flops = [](const CostReport& r, const std::string& name) {
        for (const auto& row : r.rows) {
          if (row.layer == name) return row.flops;
        }
        return std::int64_t{-1};
      };
      for (const auto& row : p.rows) {
        const auto dot = row.layer.find('.');
        const auto stage = row.layer.substr(0, dot), part = row.layer.substr(dot + 1);
        if (stage == "head" || (part != "conv1" && part != "conv2")) continue;
        // the norm after each conv costs 2 per output element, so equal norm
        // costs mean equal channels and output shape
        const auto norm = stage + (part == "conv1" ? ".norm1" : ".norm2");
        if (flops(p, norm) != flops(f, norm)) continue;
        ++layers;
        exact += flops(f, row.layer) == 3 * row.flops;
      }
    }
  }
  int direct = 0, swept = 0;
  for (int c_in : {1, 8, 16}) {
    for (int c_out : {4, 32}) {
      for (const Extent3 out : {Extent3{8, 8, 8}, Extent3{4, 16, 16}, Extent3{64, 64, 64}}) {
        const ConvSpec planar_spec{c_in, c_out, {1, 3, 3}, {1, 1, 1}, false};
        const ConvSpec full_spec{c_in, c_out, {3, 3, 3}, {1, 1, 1}, false};
        ++swept;
        direct += conv_flops(full_spec, out, 2) == 3 * conv_flops(planar_spec, out, 2);
      }
    }
  }
  return {layers > 0 && exact == layers && direct == swept,
          std::to_string(exact) + "/" + std::to_string(layers) + " network convs at matching output shape and " +
              std::to_string(direct) + "/" + std::to_string(swept) + " standalone convs at exactly 3x planar FLOPs"};
}

UNetConfig trend_network(Variant v, Fraction f) {
  UNetConfig c;
  c.variant = v;
  c.stage_widths = {8, 16, 32};
  c.shift_fraction = f;
  c.patch_extent = static_cast<int>(kTrendPatch);
  return c;
}

double trend_run(const UNetConfig& cfg, std::uint64_t seed) {
  auto net = SSHUNet::build(cfg, seed);
  const auto data = phantom_dataset(kTrendTrain, kTrendVal, kTrendExtent, seed);
  auto optim = OptimConfig::adamw(kTrendLr);
  optim.total_iters = kTrendSteps;
  LoopConfig loop;
  loop.steps = kTrendSteps;
  loop.patch = kTrendPatch;
  loop.val_every = 0;
  loop.seed = seed;
  train(net, data, optim, loop);
  return mean_dice(net, data.val, kTrendPatch, loop.overlap);
}

Outcome ablation_trend() {
  Stopwatch sw;
  double plain = 0.0, shift = 0.0;
  std::string per_seed;
  for (auto seed : kTrendSeeds) {
    const double p = trend_run(trend_network(Variant::kPlain2d, {1, 4}), seed);
    const double s = trend_run(trend_network(Variant::kShift2d, {1, 4}), seed);
    plain += p;
    shift += s;
    per_seed += " " + num(s) + "/" + num(p);
  }
  const double n = static_cast<double>(std::size(kTrendSeeds));
  plain /= n;
  shift /= n;
  // fraction 0 of the shift variant is the plain planar network; confirm on a short run
  auto zero = SSHUNet::build(trend_network(Variant::kShift2d, {0, 1}), 7);
  auto ref = SSHUNet::build(trend_network(Variant::kPlain2d, {1, 4}), 7);
  const auto data = phantom_dataset(2, 0, kTrendPatch, 7);
  LoopConfig loop;
  loop.steps = 10;
  loop.patch = kTrendPatch;
  loop.val_every = 0;
  loop.seed = 7;
  auto optim = OptimConfig::adamw(kTrendLr);
  optim.total_iters = loop.steps;
  optim.warmup_iters = 2;
  train(zero, data, optim, loop);
  train(ref, data, optim, loop);
  bool same = true;
  for (std::size_t i = 0; i < zero.params().entries().size(); ++i) {
    same = same && to_vec(zero.params().entries()[i].second) == to_vec(ref.params().entries()[i].second);
  }
  const double s = sw.seconds();
  const bool ok = shift - plain >= kTrendMargin && same && s <= kTrendSeconds;
  return {ok, "val Dice shift2d " + num(shift) + " vs plain2d " + num(plain) + " (gap " + num(shift - plain) +
                  ", need 0.03; per seed shift/plain" + per_seed + "); fraction 1/4 vs 0 gap " + num(shift - plain) +
                  (same ? " (fraction 0 == plain2d bitwise)" : " (fraction 0 differs from plain2d)") + ", " + num(s) +
                  " s"};
}

Outcome overfit() {
  Stopwatch sw;
  UNetConfig cfg;
  cfg.variant = Variant::kShift2dMultiview;
  cfg.stage_widths = {8, 16};
  cfg.patch_extent = static_cast<int>(kOverfitExtent);
  const auto data = phantom_dataset(kOverfitVolumes, 0, kOverfitExtent, kOverfitSeed);
  auto optim = OptimConfig::adamw(kOverfitLr);
  optim.total_iters = kOverfitSteps;
  optim.warmup_iters = 20;
  LoopConfig loop;
  loop.steps = kOverfitSteps;
  loop.patch = kOverfitExtent;
  loop.val_every = 0;
  loop.seed = kOverfitSeed;
  loop.augment = AugmentConfig::none();
  auto run = [&](std::vector<float>& losses) {
    auto net = SSHUNet::build(cfg, kOverfitSeed);
    for (const auto& row : train(net, data, optim, loop).history) losses.push_back(static_cast<float>(row.loss));
    return mean_dice(net, data.train, kOverfitExtent, loop.overlap);
  };
  std::vector<float> first, second;
  const double d1 = run(first);
  const double d2 = run(second);
  const bool deterministic = first == second && d1 == d2;
  const double s = sw.seconds();
  return {d1 >= kOverfitDice && deterministic && s <= kOverfitSeconds,
          "train-set mean Dice " + num(d1) + " after 300 steps (need 0.90), " +
              (deterministic ? "identical rerun" : "rerun differs") + ", " + num(s) + " s for both runs"};
}

Outcome nifti_fixture() {
  const auto dir = fs::temp_directory_path() / "sshunet_acceptance";
  fs::create_directories(dir);
  bool fields = true;
  for (bool big : {false, true}) {
    const auto path = dir / (big ? "be.nii" : "le.nii");
    sshunet::testing::float_fixture(big, 2.0f, -5.0f).save(path);
    const auto img = read_nifti1(path);
    fields = fields && img.big_endian == big && img.dim[0] == 3 && img.shape() == std::array<std::int64_t, 3>{4, 4, 4} &&
             img.datatype == kNiftiFloat32 && img.bitpix == 32 && img.vox_offset == 352.0f && img.magic == "n+1" &&
             img.scl_slope == 2.0f && img.scl_inter == -5.0f && img.pixdim[1] == 1.0f;
    for (int z = 0; z < 4; ++z)
      for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
          const auto i = static_cast<std::size_t>((x * 4 + y) * 4 + z);
          fields = fields && img.voxels[i] == 2.0f * sshunet::testing::fixture_value(x, y, z) - 5.0f;
        }
  }
  auto expect_format_error = [&](sshunet::testing::Fixture f, const char* name) {
    const auto path = dir / name;
    f.save(path);
    try {
      read_nifti1(path);
    } catch (const FormatError&) {
      return true;
    } catch (...) {
    }
    return false;
  };
  auto truncated = sshunet::testing::float_fixture(false);
  truncated.bytes.resize(200);
  auto magic = sshunet::testing::float_fixture(true);
  std::memcpy(magic.bytes.data() + 344, "xyz", 4);
  const bool errors = expect_format_error(truncated, "truncated.nii") && expect_format_error(magic, "magic.nii");
  return {fields && errors, std::string("fields bit-exact in both byte orders: ") + (fields ? "yes" : "no") +
                                ", truncated and bad-magic rejected with FormatError: " + (errors ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"shift/MAC decomposition", shift_mac},
      {"multi-view round trip", multi_view_round_trip},
      {"zero-cost shift", zero_cost_shift},
      {"gradient correctness", gradients},
      {"convolution oracle", conv_oracle},
      {"metric hand cases", metric_cases},
      {"kernel-cost ratio", kernel_cost_ratio},
      {"ablation trend", ablation_trend},
      {"overfit smoke", overfit},
      {"NIfTI fixture parse", nifti_fixture},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > static_cast<int>(criteria.size())) {
      std::fprintf(stderr, "usage: %s [criterion 1-10 ...]\n", argv[0]);
      return 2;
    }
    selected.insert(n);
  }
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int n = static_cast<int>(i) + 1;
    if (!selected.empty() && selected.count(n) == 0) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2d %s  %s: %s\n", n, o.pass ? "PASS" : "FAIL", criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
