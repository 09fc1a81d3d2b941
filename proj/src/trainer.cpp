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

#include "sshunet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include "sshunet/errors.hpp"
#include "sshunet/ops.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) out += (i ? "; " : "") + items[i];
  return out;
}

}  // namespace

// ---------------------------------------------------------------- loss

Tensor dice_ce_loss(const Tensor& logits, const std::vector<LabelVolume>& labels, double smooth) {
  if (logits.rank() != 5) throw ArgumentError("dice_ce_loss expects logits [B, K, X, Y, Z], got " + shape_str(logits.shape()));
  const i64 B = logits.dim(0), K = logits.dim(1);
  const i64 V = logits.numel() / (B * K);
  if (static_cast<i64>(labels.size()) != B) throw ArgumentError("dice_ce_loss needs one label volume per batch item");
  for (const auto& l : labels) {
    if (l.shape[0] != logits.dim(2) || l.shape[1] != logits.dim(3) || l.shape[2] != logits.dim(4)) {
      throw ArgumentError("label volume shape does not match logits " + shape_str(logits.shape()));
    }
    for (auto v : l.labels) {
      if (v < 0 || v >= K) throw ArgumentError("label " + std::to_string(v) + " outside [0, " + std::to_string(K) + ")");
    }
  }
  const auto z = logits.data();
  std::vector<double> p(z.size());
  for (i64 b = 0; b < B; ++b) {
    const i64 base = b * K * V;
    for (i64 i = 0; i < V; ++i) {
      double m = z[base + i];
      for (i64 c = 1; c < K; ++c) m = std::max(m, static_cast<double>(z[base + c * V + i]));
      double s = 0.0;
      for (i64 c = 0; c < K; ++c) s += std::exp(z[base + c * V + i] - m);
      for (i64 c = 0; c < K; ++c) p[base + c * V + i] = std::exp(z[base + c * V + i] - m) / s;
    }
  }
  // per (b, c): intersection, prediction mass, label mass
  std::vector<double> inter(B * K, 0.0), pmass(B * K, 0.0), gmass(B * K, 0.0);
  double ce = 0.0, dice_sum = 0.0;
  for (i64 b = 0; b < B; ++b) {
    const auto& lab = labels[static_cast<std::size_t>(b)].labels;
    for (i64 i = 0; i < V; ++i) {
      const i64 y = lab[static_cast<std::size_t>(i)];
      const double py = std::max(p[b * K * V + y * V + i], 1e-300);
      ce -= std::log(py);
      inter[b * K + y] += py;
      gmass[b * K + y] += 1.0;
    }
    for (i64 c = 0; c < K; ++c) {
      for (i64 i = 0; i < V; ++i) pmass[b * K + c] += p[b * K * V + c * V + i];
      dice_sum += (2.0 * inter[b * K + c] + smooth) / (pmass[b * K + c] + gmass[b * K + c] + smooth);
    }
  }
  const double loss = ce / static_cast<double>(B * V) + 1.0 - dice_sum / static_cast<double>(B * K);
  std::vector<LabelVolume> held = labels;
  return make_op_result(
      {}, {static_cast<float>(loss)}, {logits},
      [logits, held = std::move(held), p = std::move(p), inter = std::move(inter), pmass = std::move(pmass),
       gmass = std::move(gmass), B, K, V, smooth](std::span<const float> gout) {
        auto gz = grad_sink(logits);
        if (gz.empty()) return;
        const double g = gout[0];
        std::vector<double> gp(static_cast<std::size_t>(K));
        for (i64 b = 0; b < B; ++b) {
          const auto& lab = held[static_cast<std::size_t>(b)].labels;
          for (i64 i = 0; i < V; ++i) {
            const i64 y = lab[static_cast<std::size_t>(i)];
            // d(-mean dice)/dp for this voxel, then the softmax Jacobian
            double dot = 0.0;
            for (i64 c = 0; c < K; ++c) {
              const double den = pmass[b * K + c] + gmass[b * K + c] + smooth;
              const double num = 2.0 * inter[b * K + c] + smooth;
              const double onehot = c == y ? 1.0 : 0.0;
              gp[c] = -(2.0 * onehot * den - num) / (den * den) / static_cast<double>(B * K);
              dot += gp[c] * p[b * K * V + c * V + i];
            }
            for (i64 c = 0; c < K; ++c) {
              const i64 j = b * K * V + c * V + i;
              const double onehot = c == y ? 1.0 : 0.0;
              const double ce_grad = (p[j] - onehot) / static_cast<double>(B * V);
              gz[j] += static_cast<float>(g * (ce_grad + p[j] * (gp[c] - dot)));
            }
          }
        }
      },
      "dice_ce_loss");
}

// ---------------------------------------------------------------- optimizers

std::string optim_name(OptimKind k) { return k == OptimKind::kSgdMomentum ? "sgd" : "adamw"; }

OptimKind parse_optim(const std::string& name) {
  if (name == "sgd") return OptimKind::kSgdMomentum;
  if (name == "adamw") return OptimKind::kAdamW;
  throw ConfigError("unknown optimizer '" + name + "' (valid: sgd, adamw)");
}

OptimConfig OptimConfig::sgd(double lr, double momentum) {
  OptimConfig c;
  c.kind = OptimKind::kSgdMomentum;
  c.lr = lr;
  c.momentum = momentum;
  return c;
}

OptimConfig OptimConfig::adamw(double lr, double weight_decay) {
  OptimConfig c;
  c.kind = OptimKind::kAdamW;
  c.lr = lr;
  c.weight_decay = weight_decay;
  return c;
}

std::vector<std::string> OptimConfig::violations() const {
  std::vector<std::string> out;
  if (!(lr >= 0.0) || !std::isfinite(lr)) out.emplace_back("lr must be finite and non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) out.emplace_back("momentum must lie in [0, 1)");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) out.emplace_back("betas must lie in [0, 1)");
  if (!(eps > 0.0)) out.emplace_back("eps must be positive");
  if (!(weight_decay >= 0.0)) out.emplace_back("weight_decay must be non-negative");
  if (warmup_iters < 0) out.emplace_back("warmup_iters must be non-negative");
  if (total_iters <= 0) out.emplace_back("total_iters must be positive");
  if (warmup_iters > total_iters) out.emplace_back("warmup_iters must not exceed total_iters");
  return out;
}

void OptimConfig::validate() const {
  const auto v = violations();
  if (!v.empty()) throw ConfigError("invalid optimizer config: " + join(v));
}

double lr_at(const OptimConfig& cfg, std::int64_t step) {
  if (step < cfg.warmup_iters) return cfg.lr * static_cast<double>(step + 1) / static_cast<double>(cfg.warmup_iters);
  const i64 span = cfg.total_iters - cfg.warmup_iters;
  if (span <= 0 || step >= cfg.total_iters) return 0.0;
  const double t = static_cast<double>(step - cfg.warmup_iters) / static_cast<double>(span);
  return cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

namespace {

void ensure_buffers(std::vector<std::vector<float>>& bufs, const ParamStore& params) {
  if (bufs.empty()) {
    for (const auto& [name, t] : params.entries()) bufs.emplace_back(static_cast<std::size_t>(t.numel()), 0.0f);
    return;
  }
  if (bufs.size() != params.size()) throw ArgumentError("optimizer state does not match the parameter count");
  for (std::size_t i = 0; i < bufs.size(); ++i) {
    const auto& [name, t] = params.entries()[i];
    if (static_cast<i64>(bufs[i].size()) != t.numel()) {
      throw ArgumentError("optimizer state shape mismatch for '" + name + "'");
    }
  }
}

}  // namespace

void sgd_step(TrainState& state, ParamStore& params, const OptimConfig& cfg) {
  ensure_buffers(state.first, params);
  const double lr = lr_at(cfg, state.step);
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto& t = params.entries()[n].second;
    auto w = t.mutable_data();
    auto& v = state.first[n];
    const bool has = t.has_grad();
    const auto g = has ? t.grad() : std::span<const float>{};
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      v[i] = static_cast<float>(cfg.momentum * v[i] + gi);
      w[i] = static_cast<float>(w[i] - lr * v[i]);
    }
  }
  ++state.step;
}

void adamw_step(TrainState& state, ParamStore& params, const OptimConfig& cfg) {
  ensure_buffers(state.first, params);
  ensure_buffers(state.second, params);
  const double lr = lr_at(cfg, state.step);
  const double t = static_cast<double>(state.step + 1);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t n = 0; n < params.size(); ++n) {
    auto& tensor = params.entries()[n].second;
    auto w = tensor.mutable_data();
    auto& m = state.first[n];
    auto& v = state.second[n];
    const bool has = tensor.has_grad();
    const auto g = has ? tensor.grad() : std::span<const float>{};
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = static_cast<float>(cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi);
      v[i] = static_cast<float>(cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      double wi = w[i] * (1.0 - lr * cfg.weight_decay);
      wi -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
      w[i] = static_cast<float>(wi);
    }
  }
  ++state.step;
}

void optimizer_step(TrainState& state, ParamStore& params, const OptimConfig& cfg) {
  if (cfg.kind == OptimKind::kSgdMomentum) {
    sgd_step(state, params, cfg);
  } else {
    adamw_step(state, params, cfg);
  }
}

// ---------------------------------------------------------------- data

Dataset windowed(Dataset data, float lo, float hi) {
  for (auto* set : {&data.train, &data.val}) {
    for (auto& r : *set) r.intensity = hu_window(r.intensity, lo, hi);
  }
  return data;
}

Dataset phantom_dataset(std::int64_t n_train, std::int64_t n_val, std::int64_t extent, std::uint64_t seed) {
  if (n_train <= 0 || n_val < 0) throw ConfigError("phantom dataset needs at least one training volume");
  Dataset d;
  for (i64 i = 0; i < n_train + n_val; ++i) {
    auto spec = PhantomSpec::slice_ambiguous(extent, seed * 1000003ULL + static_cast<std::uint64_t>(i));
    spec.id = (i < n_train ? "train_" : "val_") + std::to_string(i < n_train ? i : i - n_train);
    (i < n_train ? d.train : d.val).push_back(generate_phantom(spec));
  }
  return windowed(std::move(d), kPhantomWindowLo, kPhantomWindowHi);
}

// ---------------------------------------------------------------- training

std::vector<std::string> LoopConfig::violations() const {
  std::vector<std::string> out;
  if (steps < 0) out.emplace_back("steps must be non-negative");
  if (batch <= 0) out.emplace_back("batch must be positive");
  if (patch <= 0) out.emplace_back("patch must be positive");
  if (!(fg_bias >= 0.0 && fg_bias <= 1.0)) out.emplace_back("fg_bias must lie in [0, 1]");
  if (val_every < 0) out.emplace_back("val_every must be non-negative");
  if (!(overlap >= 0.0 && overlap < 1.0)) out.emplace_back("overlap must lie in [0, 1)");
  for (auto& v : augment.violations()) out.push_back("augment: " + v);
  return out;
}

void write_history_csv(std::ostream& os, const std::vector<HistoryRow>& rows) {
  os << "step,loss,lr,val_dice\n";
  const auto old = os.precision(9);
  for (const auto& r : rows) {
    os << r.step << ',' << r.loss << ',' << r.lr << ',';
    if (r.val_dice) os << *r.val_dice;
    os << '\n';
  }
  os.precision(old);
}

namespace {

std::string grad_report(const ParamStore& params) {
  std::ostringstream os;
  os << "grad norms:";
  for (const auto& [name, t] : params.entries()) {
    double s = 0.0;
    if (t.has_grad()) {
      for (float g : t.grad()) s += static_cast<double>(g) * g;
    }
    os << ' ' << name << '=' << std::sqrt(s);
  }
  return os.str();
}

[[noreturn]] void abort_training(const std::string& why, i64 step, double lr, const ParamStore& params) {
  std::ostringstream os;
  os << "training aborted at step " << step << " (lr " << lr << "): " << why << "; " << grad_report(params);
  throw NumericError(os.str());
}

}  // namespace

TrainResult train(SSHUNet& net, const Dataset& data, const OptimConfig& optim, const LoopConfig& loop,
                  const TrainObserver& observer) {
  if (data.train.empty()) throw ConfigError("training dataset is empty");
  optim.validate();
  if (const auto v = loop.violations(); !v.empty()) throw ConfigError("invalid loop config: " + join(v));
  const auto& cfg = net.config();
  if (cfg.multi_view() && loop.patch % (i64{1} << (cfg.stages() - 1)) != 0) {
    throw ConfigError("patch " + std::to_string(loop.patch) + " is not divisible by the network's downsampling");
  }

  TrainResult result;
  auto& st = result.state;
  st.rng.seed(loop.seed);
  ParamStore& params = net.params();
  for (i64 s = 0; s < loop.steps; ++s) {
    const double lr = lr_at(optim, st.step);
    std::vector<Tensor> images;
    std::vector<LabelVolume> labels;
    for (i64 b = 0; b < loop.batch; ++b) {
      std::uniform_int_distribution<std::size_t> pick(0, data.train.size() - 1);
      const auto& rec = data.train[pick(st.rng)];
      auto patch = augment(sample_patch(rec, loop.patch, st.rng, loop.fg_bias), loop.augment, st.rng);
      const auto shape = patch.intensity.shape();
      const auto d = patch.intensity.data();
      images.push_back(Tensor::from_data({1, shape[0], shape[1], shape[2], shape[3]}, {d.begin(), d.end()}));
      labels.push_back(std::move(patch.labels));
    }
    const Tensor x = concat_batch(images);
    params.zero_grad();
    double loss_value = 0.0;
    try {
      GradTape tape;
      TapeScope scope(tape);
      const Tensor loss = dice_ce_loss(net.forward(x), labels);
      loss_value = loss.data()[0];
      tape.backward(loss);
    } catch (const NumericError& e) {
      abort_training(e.what(), s, lr, params);
    }
    if (!std::isfinite(loss_value)) abort_training("non-finite loss", s, lr, params);
    for (const auto& [name, t] : params.entries()) {
      if (!t.has_grad()) continue;
      for (float g : t.grad()) {
        if (!std::isfinite(g)) abort_training("non-finite gradient in '" + name + "'", s, lr, params);
      }
    }
    optimizer_step(st, params, optim);

    HistoryRow row{s, loss_value, lr, std::nullopt};
    const bool last = s + 1 == loop.steps;
    if (loop.val_every > 0 && !data.val.empty() && ((s + 1) % loop.val_every == 0 || last)) {
      row.val_dice = mean_dice(net, data.val, loop.patch, loop.overlap);
      if (*row.val_dice > st.best_val_dice) {
        st.best_val_dice = *row.val_dice;
        st.best_step = s;
        st.best_params.clear();
        for (const auto& [name, t] : params.entries()) st.best_params.emplace_back(t.data().begin(), t.data().end());
      }
    }
    result.history.push_back(row);
    if (observer) observer(row);
  }
  params.zero_grad();
  return result;
}

// ---------------------------------------------------------------- inference

AxisTiling tile_axis(std::int64_t length, std::int64_t patch, double overlap) {
  if (length <= 0 || patch <= 0) throw ArgumentError("tiling needs positive length and patch");
  if (!(overlap >= 0.0 && overlap < 1.0)) throw ArgumentError("overlap must lie in [0, 1)");
  const i64 stride = std::max<i64>(1, static_cast<i64>(std::floor(static_cast<double>(patch) * (1.0 - overlap))));
  AxisTiling t;
  const i64 steps = length <= patch ? 0 : (length - patch + stride - 1) / stride;
  t.padded = patch + steps * stride;
  if (t.padded - length > length - 1) {
    throw ArgumentError("volume axis of " + std::to_string(length) + " is too short to reflect-pad to " +
                        std::to_string(t.padded));
  }
  for (i64 i = 0; i <= steps; ++i) t.starts.push_back(i * stride);
  return t;
}

std::vector<int> window_count_map(std::array<std::int64_t, 3> shape, std::int64_t patch, double overlap) {
  const auto tx = tile_axis(shape[0], patch, overlap), ty = tile_axis(shape[1], patch, overlap),
             tz = tile_axis(shape[2], patch, overlap);
  std::vector<int> counts(static_cast<std::size_t>(shape[0] * shape[1] * shape[2]), 0);
  for (i64 sx : tx.starts)
    for (i64 sy : ty.starts)
      for (i64 sz : tz.starts)
        for (i64 x = sx; x < std::min(sx + patch, shape[0]); ++x)
          for (i64 y = sy; y < std::min(sy + patch, shape[1]); ++y)
            for (i64 z = sz; z < std::min(sz + patch, shape[2]); ++z) ++counts[static_cast<std::size_t>((x * shape[1] + y) * shape[2] + z)];
  return counts;
}

Tensor sliding_window_probs(const Predictor& model, const Tensor& intensity, std::int64_t patch, double overlap) {
  if (intensity.rank() != 4) throw ArgumentError("sliding window expects intensity [C, X, Y, Z]");
  const i64 C = intensity.dim(0);
  const std::array<i64, 3> shape{intensity.dim(1), intensity.dim(2), intensity.dim(3)};
  std::array<AxisTiling, 3> tiles;
  for (int a = 0; a < 3; ++a) tiles[a] = tile_axis(shape[a], patch, overlap);
  const i64 PX = tiles[0].padded, PY = tiles[1].padded, PZ = tiles[2].padded;
  auto reflect = [](i64 i, i64 n) { return i < n ? i : 2 * (n - 1) - i; };
  const auto in = intensity.data();
  std::vector<float> padded(static_cast<std::size_t>(C * PX * PY * PZ));
  for (i64 c = 0; c < C; ++c)
    for (i64 x = 0; x < PX; ++x)
      for (i64 y = 0; y < PY; ++y)
        for (i64 z = 0; z < PZ; ++z) {
          const i64 sx = reflect(x, shape[0]), sy = reflect(y, shape[1]), sz = reflect(z, shape[2]);
          padded[static_cast<std::size_t>(((c * PX + x) * PY + y) * PZ + z)] =
              in[static_cast<std::size_t>(((c * shape[0] + sx) * shape[1] + sy) * shape[2] + sz)];
        }

  i64 K = 0;
  std::vector<double> acc;
  std::vector<int> count(static_cast<std::size_t>(PX * PY * PZ), 0);
  std::vector<float> window(static_cast<std::size_t>(C * patch * patch * patch));
  for (i64 sx : tiles[0].starts)
    for (i64 sy : tiles[1].starts)
      for (i64 sz : tiles[2].starts) {
        for (i64 c = 0; c < C; ++c)
          for (i64 x = 0; x < patch; ++x)
            for (i64 y = 0; y < patch; ++y)
              for (i64 z = 0; z < patch; ++z) {
                window[static_cast<std::size_t>(((c * patch + x) * patch + y) * patch + z)] =
                    padded[static_cast<std::size_t>(((c * PX + sx + x) * PY + sy + y) * PZ + sz + z)];
              }
        const Tensor logits = model(Tensor::from_data({1, C, patch, patch, patch}, window));
        if (logits.rank() != 5 || logits.dim(0) != 1 || logits.dim(2) != patch || logits.dim(3) != patch ||
            logits.dim(4) != patch) {
          throw ArgumentError("model output " + shape_str(logits.shape()) + " does not match the window");
        }
        if (K == 0) {
          K = logits.dim(1);
          acc.assign(static_cast<std::size_t>(K * PX * PY * PZ), 0.0);
        }
        const Tensor probs = softmax_channels(logits);
        const auto p = probs.data();
        for (i64 x = 0; x < patch; ++x)
          for (i64 y = 0; y < patch; ++y)
            for (i64 z = 0; z < patch; ++z) {
              const i64 dst = ((sx + x) * PY + sy + y) * PZ + sz + z;
              ++count[static_cast<std::size_t>(dst)];
              for (i64 k = 0; k < K; ++k) {
                acc[static_cast<std::size_t>(k * PX * PY * PZ + dst)] +=
                    p[static_cast<std::size_t>(((k * patch + x) * patch + y) * patch + z)];
              }
            }
      }
  std::vector<float> out(static_cast<std::size_t>(K * shape[0] * shape[1] * shape[2]));
  for (i64 k = 0; k < K; ++k)
    for (i64 x = 0; x < shape[0]; ++x)
      for (i64 y = 0; y < shape[1]; ++y)
        for (i64 z = 0; z < shape[2]; ++z) {
          const i64 src = (x * PY + y) * PZ + z;
          out[static_cast<std::size_t>(((k * shape[0] + x) * shape[1] + y) * shape[2] + z)] = static_cast<float>(
              acc[static_cast<std::size_t>(k * PX * PY * PZ + src)] / count[static_cast<std::size_t>(src)]);
        }
  return Tensor::from_data({K, shape[0], shape[1], shape[2]}, std::move(out));
}

LabelVolume sliding_window_infer(const Predictor& model, const VolumeRecord& volume, std::int64_t patch,
                                 double overlap) {
  const Tensor probs = sliding_window_probs(model, volume.intensity, patch, overlap);
  const i64 K = probs.dim(0);
  auto out = LabelVolume::zeros(volume.labels.shape, volume.labels.spacing);
  const i64 V = out.numel();
  const auto p = probs.data();
  for (i64 i = 0; i < V; ++i) {
    i64 best = 0;
    for (i64 k = 1; k < K; ++k) {
      if (p[static_cast<std::size_t>(k * V + i)] > p[static_cast<std::size_t>(best * V + i)]) best = k;
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(best);
  }
  return out;
}

LabelVolume sliding_window_infer(const SSHUNet& net, const VolumeRecord& volume, std::int64_t patch, double overlap) {
  return sliding_window_infer([&net](const Tensor& x) { return net.forward(x); }, volume, patch, overlap);
}

double mean_dice(const SSHUNet& net, const std::vector<VolumeRecord>& volumes, std::int64_t patch, double overlap) {
  const int K = net.config().num_classes;
  std::vector<double> sum(static_cast<std::size_t>(K), 0.0);
  std::vector<int> n(static_cast<std::size_t>(K), 0);
  for (const auto& rec : volumes) {
    const auto pred = sliding_window_infer(net, rec, patch, overlap);
    for (int k = 1; k < K; ++k) {
      if (std::find(rec.labels.labels.begin(), rec.labels.labels.end(), k) == rec.labels.labels.end()) continue;
      sum[static_cast<std::size_t>(k)] += dice(rec.labels, pred, k);
      ++n[static_cast<std::size_t>(k)];
    }
  }
  double total = 0.0;
  int classes = 0;
  for (int k = 1; k < K; ++k) {
    if (n[static_cast<std::size_t>(k)] == 0) continue;
    total += sum[static_cast<std::size_t>(k)] / n[static_cast<std::size_t>(k)];
    ++classes;
  }
  return classes ? total / classes : 0.0;
}

}  // namespace sshunet
