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
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "sshunet/data_io.hpp"
#include "sshunet/metrics.hpp"
#include "sshunet/network.hpp"
#include "sshunet/params.hpp"
#include "sshunet/tensor.hpp"

namespace sshunet {

/// Smoothing added to numerator and denominator of each soft-Dice term.
inline constexpr double kDiceSmooth = 1.0;

/// Mean over the batch of cross-entropy (averaged over voxels) plus
/// 1 - soft-Dice (averaged over all K classes, background included).
/// `logits` is [B, K, X, Y, Z]; `labels` holds B volumes of shape [X, Y, Z].
Tensor dice_ce_loss(const Tensor& logits, const std::vector<LabelVolume>& labels, double smooth = kDiceSmooth);

enum class OptimKind { kSgdMomentum, kAdamW };

std::string optim_name(OptimKind k);
OptimKind parse_optim(const std::string& name);

struct OptimConfig {
  OptimKind kind = OptimKind::kSgdMomentum;
  double lr = 0.01;
  double momentum = 0.99;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  std::int64_t warmup_iters = 50;
  std::int64_t total_iters = 1000;

  static OptimConfig sgd(double lr = 0.01, double momentum = 0.99);
  static OptimConfig adamw(double lr = 4e-4, double weight_decay = 1e-5);

  std::vector<std::string> violations() const;
  void validate() const;
};

/// Linear warmup to `lr`, then half-cosine decay reaching 0 at total_iters.
double lr_at(const OptimConfig& cfg, std::int64_t step);

struct TrainState {
  std::int64_t step = 0;
  /// SGD velocity or AdamW first moment, one buffer per parameter.
  std::vector<std::vector<float>> first;
  /// AdamW second moment.
  std::vector<std::vector<float>> second;
  Rng rng{0};
  double best_val_dice = -1.0;
  std::int64_t best_step = -1;
  std::vector<std::vector<float>> best_params;
};

/// v = m v + g; w -= lr_at(step) v; step += 1. Gradients come from the
/// parameters' grad buffers (missing ones count as zero).
void sgd_step(TrainState& state, ParamStore& params, const OptimConfig& cfg);

/// Adam with bias correction and decoupled weight decay.
void adamw_step(TrainState& state, ParamStore& params, const OptimConfig& cfg);

/// Dispatches on cfg.kind.
void optimizer_step(TrainState& state, ParamStore& params, const OptimConfig& cfg);

/// Intensity window used for the synthetic phantoms.
inline constexpr float kPhantomWindowLo = -175.0f;
inline constexpr float kPhantomWindowHi = 250.0f;

struct Dataset {
  std::vector<VolumeRecord> train;
  std::vector<VolumeRecord> val;
};

/// Applies hu_window to every intensity volume.
Dataset windowed(Dataset data, float lo, float hi);

/// Slice-ambiguous phantoms, windowed. Volume seeds derive from `seed`
/// so train and validation never share a volume.
Dataset phantom_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t extent, std::uint64_t seed);

struct LoopConfig {
  std::int64_t steps = 300;
  std::int64_t batch = 2;
  std::int64_t patch = 16;
  double fg_bias = 0.5;
  AugmentConfig augment{};
  /// Validate every this many steps and after the last one; 0 disables.
  std::int64_t val_every = 50;
  double overlap = 0.5;
  std::uint64_t seed = 0;

  std::vector<std::string> violations() const;
};

struct HistoryRow {
  std::int64_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
  std::optional<double> val_dice;
};

/// `step,loss,lr,val_dice`, val_dice empty when not evaluated.
void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows);

struct TrainResult {
  TrainState state;
  std::vector<HistoryRow> history;
};

/// Optional per-step observer, called after each history row is recorded.
using TrainObserver = std::function<void(const HistoryRow&)>;

/// sample_patch -> augment -> forward -> dice_ce_loss -> backward -> step.
/// Throws NumericError with step, lr and gradient norms when the loss or a
/// gradient becomes non-finite.
TrainResult train(SSHUNet& net, const Dataset& data, const OptimConfig& optim, const LoopConfig& loop,
                  const TrainObserver& observer = {});

/// Maps [1, C, E, E, E] intensities to [1, K, E, E, E] logits.
using Predictor = std::function<Tensor(const Tensor&)>;

/// Window start offsets along one axis of length `length` after padding
/// the end to `padded` so the grid is exact.
struct AxisTiling {
  std::int64_t padded = 0;
  std::vector<std::int64_t> starts;
};
AxisTiling tile_axis(std::int64_t length, std::int64_t patch, double overlap);

/// Number of windows covering each voxel of a volume of `shape`.
std::vector<int> window_count_map(std::array<std::int64_t, 3> shape, std::int64_t patch, double overlap);

/// Uniformly averaged softmax probabilities [K, X, Y, Z] over all windows.
Tensor sliding_window_probs(const Predictor& model, const Tensor& intensity, std::int64_t patch, double overlap);

LabelVolume sliding_window_infer(const Predictor& model, const VolumeRecord& volume, std::int64_t patch,
                                 double overlap);
LabelVolume sliding_window_infer(const SSHUNet& net, const VolumeRecord& volume, std::int64_t patch, double overlap);

/// Macro mean foreground Dice of sliding-window predictions over `volumes`.
double mean_dice(const SSHUNet& net, const std::vector<VolumeRecord>& volumes, std::int64_t patch, double overlap);

}  // namespace sshunet
