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

#include "sshunet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

i64 floor_div(i64 a, i64 b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }
i64 ceil_div(i64 a, i64 b) { return -floor_div(-a, b); }

// Output positions o in [0, n_out) whose input tap o * stride + offset lies in [0, n_in).
struct Range {
  i64 lo;
  i64 hi;  // inclusive
};
Range valid_range(i64 n_out, i64 stride, i64 offset, i64 n_in) {
  return {std::max<i64>(0, ceil_div(-offset, stride)), std::min<i64>(n_out - 1, floor_div(n_in - 1 - offset, stride))};
}

struct ConvGeom {
  i64 batch, c_in, c_out;
  Extent3 in, out, k, s, p;

  i64 in_vol() const { return i64{in[0]} * in[1] * in[2]; }
  i64 out_vol() const { return i64{out[0]} * out[1] * out[2]; }
  i64 k_vol() const { return i64{k[0]} * k[1] * k[2]; }
};

// Column matrix of one batch item: row r = ci * k_vol + tap holds the input
// value each output position reads through that tap, zero where padded.
// Weight layout (C_out, C_in, kS, kH, kW) matches the row order.
void im2col(const ConvGeom& g, const float* x, std::vector<float>& cols) {
  const i64 ovol = g.out_vol();
  cols.assign(static_cast<std::size_t>(g.c_in * g.k_vol() * ovol), 0.0f);
  const i64 sw = g.s[2];
  for (i64 ci = 0; ci < g.c_in; ++ci) {
    const float* xc = x + ci * g.in_vol();
    for (int kd = 0; kd < g.k[0]; ++kd) {
      const Range rd = valid_range(g.out[0], g.s[0], kd - g.p[0], g.in[0]);
      for (int kh = 0; kh < g.k[1]; ++kh) {
        const Range rh = valid_range(g.out[1], g.s[1], kh - g.p[1], g.in[1]);
        for (int kw = 0; kw < g.k[2]; ++kw) {
          const i64 off = kw - g.p[2];
          const Range rw = valid_range(g.out[2], sw, off, g.in[2]);
          if (rw.lo > rw.hi) continue;
          const i64 r = (ci * g.k[0] + kd) * g.k[1] * g.k[2] + kh * g.k[2] + kw;
          float* row = cols.data() + r * ovol;
          for (i64 od = rd.lo; od <= rd.hi; ++od) {
            const i64 id = od * g.s[0] + kd - g.p[0];
            for (i64 oh = rh.lo; oh <= rh.hi; ++oh) {
              const i64 ih = oh * g.s[1] + kh - g.p[1];
              float* dst = row + (od * g.out[1] + oh) * g.out[2];
              const float* src = xc + (id * g.in[1] + ih) * g.in[2] + off;
              for (i64 ow = rw.lo; ow <= rw.hi; ++ow) dst[ow] = src[ow * sw];
            }
          }
        }
      }
    }
  }
}

// out[b, co] += sum_ci w[co, ci] (*) in[b, ci]
void conv_forward_kernel(const ConvGeom& g, const float* in, const float* w, float* out) {
  const i64 ovol = g.out_vol();
  const i64 rows = g.c_in * g.k_vol();
  std::vector<float> cols;
  std::vector<double> acc(static_cast<std::size_t>(ovol));
  for (i64 b = 0; b < g.batch; ++b) {
    im2col(g, in + b * g.c_in * g.in_vol(), cols);
    for (i64 co = 0; co < g.c_out; ++co) {
      float* o = out + (b * g.c_out + co) * ovol;
      std::copy(o, o + ovol, acc.begin());
      const float* wr = w + co * rows;
      for (i64 r = 0; r < rows; ++r) {
        const double wd = wr[r];
        if (wd == 0.0) continue;
        const float* c = cols.data() + r * ovol;
        double* a = acc.data();
        for (i64 i = 0; i < ovol; ++i) a[i] += wd * c[i];
      }
      std::transform(acc.begin(), acc.end(), o, [](double v) { return static_cast<float>(v); });
    }
  }
}

// gin[b, ci] += sum_co w[co, ci] (*)^T gout[b, co]
void conv_backward_data_kernel(const ConvGeom& g, const float* gout, const float* w, float* gin) {
  const i64 ovol = g.out_vol();
  const i64 rows = g.c_in * g.k_vol();
  const i64 sw = g.s[2];
  std::vector<double> drow(static_cast<std::size_t>(ovol));
  std::vector<double> acc(static_cast<std::size_t>(g.in_vol()));
  for (i64 b = 0; b < g.batch; ++b) {
    const float* go = gout + b * g.c_out * ovol;
    for (i64 ci = 0; ci < g.c_in; ++ci) {
      float* gi = gin + (b * g.c_in + ci) * g.in_vol();
      std::copy(gi, gi + g.in_vol(), acc.begin());
      for (int kd = 0; kd < g.k[0]; ++kd) {
        const Range rd = valid_range(g.out[0], g.s[0], kd - g.p[0], g.in[0]);
        for (int kh = 0; kh < g.k[1]; ++kh) {
          const Range rh = valid_range(g.out[1], g.s[1], kh - g.p[1], g.in[1]);
          for (int kw = 0; kw < g.k[2]; ++kw) {
            const i64 off = kw - g.p[2];
            const Range rw = valid_range(g.out[2], sw, off, g.in[2]);
            if (rw.lo > rw.hi || rd.lo > rd.hi || rh.lo > rh.hi) continue;
            const i64 r = (ci * g.k[0] + kd) * g.k[1] * g.k[2] + kh * g.k[2] + kw;
            // column gradient of row r, then scattered back through the tap
            std::fill(drow.begin(), drow.end(), 0.0);
            for (i64 co = 0; co < g.c_out; ++co) {
              const double wd = w[co * rows + r];
              if (wd == 0.0) continue;
              const float* gp = go + co * ovol;
              double* d = drow.data();
              for (i64 i = 0; i < ovol; ++i) d[i] += wd * gp[i];
            }
            for (i64 od = rd.lo; od <= rd.hi; ++od) {
              const i64 id = od * g.s[0] + kd - g.p[0];
              for (i64 oh = rh.lo; oh <= rh.hi; ++oh) {
                const i64 ih = oh * g.s[1] + kh - g.p[1];
                const double* src = drow.data() + (od * g.out[1] + oh) * g.out[2];
                double* dst = acc.data() + (id * g.in[1] + ih) * g.in[2] + off;
                for (i64 ow = rw.lo; ow <= rw.hi; ++ow) dst[ow * sw] += src[ow];
              }
            }
          }
        }
      }
      std::transform(acc.begin(), acc.end(), gi, [](double v) { return static_cast<float>(v); });
    }
  }
}

// gw[co, ci, k] += sum_b sum_o gout[b, co, o] * in[b, ci, o * s + k - p]
void conv_backward_weight_kernel(const ConvGeom& g, const float* gout, const float* in, float* gw) {
  const i64 ovol = g.out_vol();
  const i64 rows = g.c_in * g.k_vol();
  std::vector<float> cols;
  std::vector<double> acc(static_cast<std::size_t>(g.c_out * rows), 0.0);
  for (i64 b = 0; b < g.batch; ++b) {
    im2col(g, in + b * g.c_in * g.in_vol(), cols);
    for (i64 co = 0; co < g.c_out; ++co) {
      const float* gp = gout + (b * g.c_out + co) * ovol;
      for (i64 r = 0; r < rows; ++r) {
        const float* c = cols.data() + r * ovol;
        // four independent lanes keep the order fixed and the loop vectorisable
        double lane[4] = {0.0, 0.0, 0.0, 0.0};
        i64 i = 0;
        for (; i + 4 <= ovol; i += 4) {
          for (int l = 0; l < 4; ++l) lane[l] += static_cast<double>(gp[i + l]) * c[i + l];
        }
        for (; i < ovol; ++i) lane[0] += static_cast<double>(gp[i]) * c[i];
        acc[static_cast<std::size_t>(co * rows + r)] += (lane[0] + lane[1]) + (lane[2] + lane[3]);
      }
    }
  }
  for (i64 j = 0; j < g.c_out * rows; ++j) gw[j] += static_cast<float>(acc[static_cast<std::size_t>(j)]);
}

void check_rank5(const Tensor& x, const char* op) {
  if (x.rank() != 5) {
    throw ArgumentError(std::string(op) + " expects a [B, C, S, H, W] tensor, got " + shape_str(x.shape()));
  }
}

void check_spec(const ConvSpec& spec) {
  for (int a = 0; a < 3; ++a) {
    if (spec.kernel[a] <= 0 || spec.stride[a] <= 0) throw ArgumentError("conv kernel and stride must be positive");
  }
  if (spec.in_channels <= 0 || spec.out_channels <= 0) throw ArgumentError("conv channels must be positive");
}

Extent3 spatial(const Tensor& x) {
  return {static_cast<int>(x.dim(2)), static_cast<int>(x.dim(3)), static_cast<int>(x.dim(4))};
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ArgumentError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

void accumulate(std::span<float> dst, std::span<const float> src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

Shape ConvSpec::weight_shape() const {
  return {out_channels, in_channels, kernel[0], kernel[1], kernel[2]};
}

Extent3 ConvSpec::output_extent(const Extent3& in) const {
  const Extent3 p = padding();
  Extent3 out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] + 2 * p[a] - kernel[a]) / stride[a] + 1;
  return out;
}

Shape conv_transpose_weight_shape(const ConvSpec& spec) {
  return {spec.in_channels, spec.out_channels, spec.kernel[0], spec.kernel[1], spec.kernel[2]};
}

Tensor permute(const Tensor& t, const std::vector<int>& order) {
  const int r = t.rank();
  if (static_cast<int>(order.size()) != r) throw ArgumentError("permutation length does not match tensor rank");
  std::vector<int> inverse(static_cast<std::size_t>(r), -1);
  for (int i = 0; i < r; ++i) {
    const int src = order[static_cast<std::size_t>(i)];
    if (src < 0 || src >= r || inverse[static_cast<std::size_t>(src)] != -1) {
      throw ArgumentError("order is not a permutation of 0..rank-1");
    }
    inverse[static_cast<std::size_t>(src)] = i;
  }

  const Shape& in_shape = t.shape();
  Shape out_shape(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) out_shape[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(order[i])];

  std::vector<i64> in_strides(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  // stride in the input for each output axis
  std::vector<i64> src_strides(static_cast<std::size_t>(r));
  for (int i = 0; i < r; ++i) src_strides[i] = in_strides[order[i]];

  const i64 n = t.numel();
  // gather[j] = input index feeding output index j
  std::vector<i64> gather(static_cast<std::size_t>(n));
  std::vector<i64> idx(static_cast<std::size_t>(r), 0);
  i64 src = 0;
  for (i64 j = 0; j < n; ++j) {
    gather[j] = src;
    for (int a = r - 1; a >= 0; --a) {
      if (++idx[a] < out_shape[a]) {
        src += src_strides[a];
        break;
      }
      src -= src_strides[a] * (out_shape[a] - 1);
      idx[a] = 0;
    }
  }

  auto in = t.data();
  std::vector<float> out(static_cast<std::size_t>(n));
  for (i64 j = 0; j < n; ++j) out[j] = in[gather[j]];

  return make_op_result(
      std::move(out_shape), std::move(out), {t},
      [t, gather = std::move(gather)](std::span<const float> gout) {
        auto gin = grad_sink(t);
        if (gin.empty()) return;
        for (std::size_t j = 0; j < gather.size(); ++j) gin[gather[j]] += gout[j];
      },
      "permute");
}

Tensor conv3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
  check_rank5(x, "conv3d");
  check_spec(spec);
  if (x.dim(1) != spec.in_channels) {
    throw ArgumentError("conv3d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                        std::to_string(spec.in_channels));
  }
  if (weight.shape() != spec.weight_shape()) {
    throw ArgumentError("conv3d: weight shape " + shape_str(weight.shape()) + ", expected " +
                        shape_str(spec.weight_shape()));
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) throw ArgumentError("conv3d: bias shape mismatch");

  ConvGeom g{x.dim(0), spec.in_channels, spec.out_channels, spatial(x), {}, spec.kernel, spec.stride, spec.padding()};
  g.out = spec.output_extent(g.in);
  for (int a = 0; a < 3; ++a) {
    if (g.out[a] <= 0) throw ArgumentError("conv3d: input too small for kernel");
  }

  std::vector<float> out(static_cast<std::size_t>(g.batch * g.c_out * g.out_vol()), 0.0f);
  if (bias.defined()) {
    auto bv = bias.data();
    for (i64 b = 0; b < g.batch; ++b) {
      for (i64 co = 0; co < g.c_out; ++co) {
        std::fill_n(out.begin() + (b * g.c_out + co) * g.out_vol(), g.out_vol(), bv[co]);
      }
    }
  }
  conv_forward_kernel(g, x.data().data(), weight.data().data(), out.data());

  Shape out_shape{g.batch, g.c_out, g.out[0], g.out[1], g.out[2]};
  return make_op_result(
      std::move(out_shape), std::move(out), {x, weight, bias},
      [x, weight, bias, g](std::span<const float> gout) {
        if (auto gx = grad_sink(x); !gx.empty()) {
          conv_backward_data_kernel(g, gout.data(), weight.data().data(), gx.data());
        }
        if (auto gw = grad_sink(weight); !gw.empty()) {
          conv_backward_weight_kernel(g, gout.data(), x.data().data(), gw.data());
        }
        if (auto gb = grad_sink(bias); !gb.empty()) {
          for (i64 co = 0; co < g.c_out; ++co) {
            double s = 0.0;
            for (i64 b = 0; b < g.batch; ++b) {
              const float* go = gout.data() + (b * g.c_out + co) * g.out_vol();
              for (i64 i = 0; i < g.out_vol(); ++i) s += go[i];
            }
            gb[co] += static_cast<float>(s);
          }
        }
      },
      "conv3d");
}

Tensor conv_transpose3d(const Tensor& x, const ConvSpec& spec, const Tensor& weight, const Tensor& bias) {
  check_rank5(x, "conv_transpose3d");
  check_spec(spec);
  if (x.dim(1) != spec.in_channels) {
    throw ArgumentError("conv_transpose3d: input has " + std::to_string(x.dim(1)) + " channels, spec expects " +
                        std::to_string(spec.in_channels));
  }
  if (weight.shape() != conv_transpose_weight_shape(spec)) {
    throw ArgumentError("conv_transpose3d: weight shape " + shape_str(weight.shape()) + ", expected " +
                        shape_str(conv_transpose_weight_shape(spec)));
  }
  if (bias.defined() && bias.shape() != Shape{spec.out_channels}) {
    throw ArgumentError("conv_transpose3d: bias shape mismatch");
  }

  // Expressed as the adjoint of a padding-free conv mapping the (larger)
  // output back onto x: that conv has C_in = spec.out_channels and
  // C_out = spec.in_channels, and its weight layout matches ours.
  const Extent3 xin = spatial(x);
  ConvGeom g{x.dim(0), spec.out_channels, spec.in_channels, {}, xin, spec.kernel, spec.stride, {0, 0, 0}};
  for (int a = 0; a < 3; ++a) g.in[a] = (xin[a] - 1) * spec.stride[a] + spec.kernel[a];

  std::vector<float> out(static_cast<std::size_t>(g.batch * g.c_in * g.in_vol()), 0.0f);
  if (bias.defined()) {
    auto bv = bias.data();
    for (i64 b = 0; b < g.batch; ++b) {
      for (i64 c = 0; c < g.c_in; ++c) std::fill_n(out.begin() + (b * g.c_in + c) * g.in_vol(), g.in_vol(), bv[c]);
    }
  }
  conv_backward_data_kernel(g, x.data().data(), weight.data().data(), out.data());

  Shape out_shape{g.batch, g.c_in, g.in[0], g.in[1], g.in[2]};
  return make_op_result(
      std::move(out_shape), std::move(out), {x, weight, bias},
      [x, weight, bias, g](std::span<const float> gout) {
        if (auto gx = grad_sink(x); !gx.empty()) {
          conv_forward_kernel(g, gout.data(), weight.data().data(), gx.data());
        }
        if (auto gw = grad_sink(weight); !gw.empty()) {
          conv_backward_weight_kernel(g, x.data().data(), gout.data(), gw.data());
        }
        if (auto gb = grad_sink(bias); !gb.empty()) {
          for (i64 c = 0; c < g.c_in; ++c) {
            double s = 0.0;
            for (i64 b = 0; b < g.batch; ++b) {
              const float* go = gout.data() + (b * g.c_in + c) * g.in_vol();
              for (i64 i = 0; i < g.in_vol(); ++i) s += go[i];
            }
            gb[c] += static_cast<float>(s);
          }
        }
      },
      "conv_transpose3d");
}

Tensor instance_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps) {
  if (x.rank() < 3) throw ArgumentError("instance_norm expects [B, C, ...]");
  const i64 batch = x.dim(0);
  const i64 channels = x.dim(1);
  const i64 vol = x.numel() / (batch * channels);
  if (vol < 2) throw DegenerateInputError("instance_norm: each instance needs at least 2 elements");
  if (gamma.defined() && gamma.shape() != Shape{channels}) throw ArgumentError("instance_norm: gamma shape mismatch");
  if (beta.defined() && beta.shape() != Shape{channels}) throw ArgumentError("instance_norm: beta shape mismatch");

  auto in = x.data();
  std::vector<float> xhat(in.size());
  std::vector<float> inv_std(static_cast<std::size_t>(batch * channels));
  std::vector<float> out(in.size());
  for (i64 b = 0; b < batch; ++b) {
    for (i64 c = 0; c < channels; ++c) {
      const i64 base = (b * channels + c) * vol;
      double s = 0.0;
      for (i64 i = 0; i < vol; ++i) s += in[base + i];
      const double mu = s / static_cast<double>(vol);
      double v = 0.0;
      for (i64 i = 0; i < vol; ++i) {
        const double d = in[base + i] - mu;
        v += d * d;
      }
      v /= static_cast<double>(vol);
      const double is = 1.0 / std::sqrt(v + eps);
      inv_std[b * channels + c] = static_cast<float>(is);
      const float gm = gamma.defined() ? gamma.data()[c] : 1.0f;
      const float bt = beta.defined() ? beta.data()[c] : 0.0f;
      for (i64 i = 0; i < vol; ++i) {
        const float h = static_cast<float>((in[base + i] - mu) * is);
        xhat[base + i] = h;
        out[base + i] = gm * h + bt;
      }
    }
  }

  return make_op_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [x, gamma, beta, batch, channels, vol, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](std::span<const float> gout) {
        auto gx = grad_sink(x);
        auto gg = grad_sink(gamma);
        auto gbt = grad_sink(beta);
        for (i64 b = 0; b < batch; ++b) {
          for (i64 c = 0; c < channels; ++c) {
            const i64 base = (b * channels + c) * vol;
            double sum_g = 0.0;
            double sum_gx = 0.0;
            for (i64 i = 0; i < vol; ++i) {
              sum_g += gout[base + i];
              sum_gx += static_cast<double>(gout[base + i]) * xhat[base + i];
            }
            if (!gg.empty()) gg[c] += static_cast<float>(sum_gx);
            if (!gbt.empty()) gbt[c] += static_cast<float>(sum_g);
            if (gx.empty()) continue;
            const double gm = gamma.defined() ? gamma.data()[c] : 1.0;
            const double mean_g = gm * sum_g / static_cast<double>(vol);
            const double mean_gx = gm * sum_gx / static_cast<double>(vol);
            const double is = inv_std[b * channels + c];
            for (i64 i = 0; i < vol; ++i) {
              gx[base + i] += static_cast<float>(is * (gm * gout[base + i] - mean_g - xhat[base + i] * mean_gx));
            }
          }
        }
      },
      "instance_norm");
}

namespace {
thread_local KinkMonitor* active_monitor = nullptr;
}  // namespace

KinkMonitor::KinkMonitor() : previous_(active_monitor) { active_monitor = this; }

KinkMonitor::~KinkMonitor() { active_monitor = previous_; }

void KinkMonitor::fold(std::span<const float> values) {
  for (float v : values) hash_ = (hash_ ^ (v >= 0.0f ? 1u : 2u)) * 1099511628211ull;
}

Tensor leaky_relu(const Tensor& x, float slope) {
  auto in = x.data();
  if (active_monitor) active_monitor->fold(in);
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] >= 0.0f ? in[i] : slope * in[i];
  return make_op_result(
      x.shape(), std::move(out), {x},
      [x, slope](std::span<const float> gout) {
        auto gx = grad_sink(x);
        if (gx.empty()) return;
        auto in = x.data();
        for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += in[i] >= 0.0f ? gout[i] : slope * gout[i];
      },
      "leaky_relu");
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  auto av = a.data();
  auto bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const float> gout) {
        if (auto ga = grad_sink(a); !ga.empty()) accumulate(ga, gout);
        if (auto gb = grad_sink(b); !gb.empty()) accumulate(gb, gout);
      },
      "add");
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  auto av = a.data();
  auto bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op_result(
      a.shape(), std::move(out), {a, b},
      [a, b](std::span<const float> gout) {
        if (auto ga = grad_sink(a); !ga.empty()) {
          auto bv = b.data();
          for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * bv[i];
        }
        if (auto gb = grad_sink(b); !gb.empty()) {
          auto av = a.data();
          for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += gout[i] * av[i];
        }
      },
      "mul");
}

Tensor scale(const Tensor& a, float s) {
  auto av = a.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op_result(
      a.shape(), std::move(out), {a},
      [a, s](std::span<const float> gout) {
        auto ga = grad_sink(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += gout[i] * s;
      },
      "scale");
}

Tensor square(const Tensor& a) { return mul(a, a); }

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (float v : a.data()) s += v;
  return make_op_result(
      {1}, {static_cast<float>(s)}, {a},
      [a](std::span<const float> gout) {
        auto ga = grad_sink(a);
        for (auto& g : ga) g += gout[0];
      },
      "sum");
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0f / static_cast<float>(a.numel())); }

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || a.rank() != b.rank() || a.dim(0) != b.dim(0)) {
    throw ArgumentError("concat_channels: incompatible shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  for (int i = 2; i < a.rank(); ++i) {
    if (a.dim(i) != b.dim(i)) {
      throw ArgumentError("concat_channels: spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
  }
  const i64 batch = a.dim(0);
  const i64 ca = a.dim(1);
  const i64 cb = b.dim(1);
  const i64 vol = a.numel() / (batch * ca);
  Shape out_shape = a.shape();
  out_shape[1] = ca + cb;
  std::vector<float> out(static_cast<std::size_t>(batch * (ca + cb) * vol));
  auto av = a.data();
  auto bv = b.data();
  for (i64 n = 0; n < batch; ++n) {
    std::copy_n(av.begin() + n * ca * vol, ca * vol, out.begin() + n * (ca + cb) * vol);
    std::copy_n(bv.begin() + n * cb * vol, cb * vol, out.begin() + (n * (ca + cb) + ca) * vol);
  }
  return make_op_result(
      std::move(out_shape), std::move(out), {a, b},
      [a, b, batch, ca, cb, vol](std::span<const float> gout) {
        auto ga = grad_sink(a);
        auto gb = grad_sink(b);
        for (i64 n = 0; n < batch; ++n) {
          const float* src = gout.data() + n * (ca + cb) * vol;
          if (!ga.empty()) {
            for (i64 i = 0; i < ca * vol; ++i) ga[n * ca * vol + i] += src[i];
          }
          if (!gb.empty()) {
            for (i64 i = 0; i < cb * vol; ++i) gb[n * cb * vol + i] += src[ca * vol + i];
          }
        }
      },
      "concat_channels");
}

Tensor concat_batch(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("concat_batch: no inputs");
  Shape out_shape = parts.front().shape();
  out_shape[0] = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(out_shape.size())) throw ArgumentError("concat_batch: rank mismatch");
    for (int i = 1; i < p.rank(); ++i) {
      if (p.dim(i) != out_shape[static_cast<std::size_t>(i)]) {
        throw ArgumentError("concat_batch: shape mismatch " + shape_str(p.shape()));
      }
    }
    out_shape[0] += p.dim(0);
  }
  std::vector<float> out;
  out.reserve(static_cast<std::size_t>(shape_numel(out_shape)));
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());

  return make_op_result(
      std::move(out_shape), std::move(out), parts,
      [parts](std::span<const float> gout) {
        std::size_t off = 0;
        for (const auto& p : parts) {
          auto gp = grad_sink(p);
          for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += gout[off + i];
          off += static_cast<std::size_t>(p.numel());
        }
      },
      "concat_batch");
}

Tensor slice_batch(const Tensor& t, std::int64_t begin, std::int64_t count) {
  if (begin < 0 || count <= 0 || begin + count > t.dim(0)) throw ArgumentError("slice_batch: range out of bounds");
  const i64 per = t.numel() / t.dim(0);
  Shape out_shape = t.shape();
  out_shape[0] = count;
  auto tv = t.data();
  std::vector<float> out(tv.begin() + begin * per, tv.begin() + (begin + count) * per);
  return make_op_result(
      std::move(out_shape), std::move(out), {t},
      [t, begin, per](std::span<const float> gout) {
        auto gt = grad_sink(t);
        if (gt.empty()) return;
        for (std::size_t i = 0; i < gout.size(); ++i) gt[begin * per + i] += gout[i];
      },
      "slice_batch");
}

Tensor softmax_channels(const Tensor& x) {
  if (x.rank() < 2) throw ArgumentError("softmax_channels expects [B, K, ...]");
  const i64 batch = x.dim(0);
  const i64 k = x.dim(1);
  const i64 vol = x.numel() / (batch * k);
  auto in = x.data();
  std::vector<float> out(in.size());
  for (i64 b = 0; b < batch; ++b) {
    const i64 base = b * k * vol;
    for (i64 i = 0; i < vol; ++i) {
      float m = in[base + i];
      for (i64 c = 1; c < k; ++c) m = std::max(m, in[base + c * vol + i]);
      double z = 0.0;
      for (i64 c = 0; c < k; ++c) z += std::exp(static_cast<double>(in[base + c * vol + i] - m));
      for (i64 c = 0; c < k; ++c) {
        out[base + c * vol + i] = static_cast<float>(std::exp(static_cast<double>(in[base + c * vol + i] - m)) / z);
      }
    }
  }
  std::vector<float> probs = out;
  return make_op_result(
      x.shape(), std::move(out), {x},
      [x, batch, k, vol, probs = std::move(probs)](std::span<const float> gout) {
        auto gx = grad_sink(x);
        if (gx.empty()) return;
        for (i64 b = 0; b < batch; ++b) {
          const i64 base = b * k * vol;
          for (i64 i = 0; i < vol; ++i) {
            double dot = 0.0;
            for (i64 c = 0; c < k; ++c) dot += static_cast<double>(gout[base + c * vol + i]) * probs[base + c * vol + i];
            for (i64 c = 0; c < k; ++c) {
              const i64 j = base + c * vol + i;
              gx[j] += static_cast<float>(probs[j] * (gout[j] - dot));
            }
          }
        }
      },
      "softmax_channels");
}

}  // namespace sshunet
