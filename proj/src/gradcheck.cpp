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

#include "sshunet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <utility>

#include "sshunet/ops.hpp"

namespace sshunet {

GradcheckReport gradcheck(const std::function<Tensor()>& f, Tensor wrt, const GradcheckOptions& opts) {
  const bool had_flag = wrt.requires_grad();
  wrt.set_requires_grad(true);
  wrt.zero_grad();
  Tensor u = opts.cotangent;
  {
    GradTape tape;
    TapeScope scope(tape);
    Tensor y = f();
    if (!u.defined()) u = Tensor::full(y.shape(), 1.0f);
    tape.backward(sum(mul(y, u)));
  }
  auto weights = u.data();
  // sum_i u_i * sum_k c_k y_k[i], differencing per element in double
  auto combine = [&](std::initializer_list<std::pair<double, const Tensor*>> terms) {
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      double d = 0.0;
      for (const auto& [c, y] : terms) d += c * static_cast<double>(y->data()[i]);
      acc += static_cast<double>(weights[i]) * d;
    }
    return acc;
  };
  std::vector<float> analytic(static_cast<std::size_t>(wrt.numel()), 0.0f);
  if (wrt.has_grad()) std::copy(wrt.grad().begin(), wrt.grad().end(), analytic.begin());
  wrt.zero_grad();
  wrt.set_requires_grad(had_flag);

  std::vector<std::size_t> indices = opts.indices;
  if (indices.empty()) {
    indices.resize(analytic.size());
    std::iota(indices.begin(), indices.end(), std::size_t{0});
  }

  double scale = 0.0;
  for (float a : analytic) scale = std::max(scale, static_cast<double>(std::fabs(a)));
  const double floor = std::max(opts.floor_fraction * scale, 1e-12);

  GradcheckReport report;
  auto values = wrt.mutable_data();
  std::size_t idx_current = 0;
  auto evaluate = [&](float v, std::uint64_t& sig) {
    KinkMonitor monitor;
    values[idx_current] = v;
    Tensor y = f();
    sig = monitor.signature();
    return y;
  };
  for (std::size_t idx : indices) {
    idx_current = idx;
    const float orig = values[idx];
    std::uint64_t sig0 = 0;
    const Tensor y0 = evaluate(orig, sig0);
    // Derivative estimate at step h, halving h while the stencil leaves the
    // branch pattern of orig. Updates h to the step actually used.
    auto estimate = [&](double& h, bool& used_one_sided, bool& kinked) {
      // Three-point derivative at orig from nodes orig + a and orig + b on
      // one side, exact for quadratics.
      auto one_sided = [&](double dir, const Tensor& y1, float p1, double& out) {
        const float p2 = static_cast<float>(orig + dir * 2.0 * h);
        std::uint64_t sig2 = 0;
        const Tensor y2 = evaluate(p2, sig2);
        if (sig2 != sig0) return false;
        const double a = static_cast<double>(p1) - orig;
        const double b = static_cast<double>(p2) - orig;
        out = combine({{-(a + b) / (a * b), &y0}, {b / (a * (b - a)), &y1}, {-a / (b * (b - a)), &y2}});
        return true;
      };
      for (;;) {
        const float up = static_cast<float>(orig + h);
        const float down = static_cast<float>(orig - h);
        std::uint64_t sig_up = 0, sig_down = 0;
        const Tensor plus = evaluate(up, sig_up);
        const Tensor minus = evaluate(down, sig_down);
        // divide by the step actually representable in float
        const double width = static_cast<double>(up) - static_cast<double>(down);
        const double central = combine({{1.0 / width, &plus}, {-1.0 / width, &minus}});
        if (sig_up == sig0 && sig_down == sig0) return central;
        double out = 0.0;
        if ((sig_up == sig0 && one_sided(1.0, plus, up, out)) ||
            (sig_down == sig0 && one_sided(-1.0, minus, down, out))) {
          used_one_sided = true;
          return out;
        }
        if (h * 0.5 < opts.min_h) {
          kinked = true;
          return central;
        }
        h *= 0.5;
      }
    };
    // Step ladder h, h/2, ...; keep the estimate where successive steps agree
    // best, balancing truncation against float rounding.
    double h = opts.h;
    bool used_one_sided = false, kinked = false;
    double prev = estimate(h, used_one_sided, kinked);
    double numeric = prev;
    double best_gap = std::numeric_limits<double>::infinity();
    for (int level = 0; level < opts.levels; ++level) {
      h *= 0.5;
      if (h < opts.min_h) break;
      const double cur = estimate(h, used_one_sided, kinked);
      const double gap = std::fabs(cur - prev);
      if (gap < best_gap) {
        best_gap = gap;
        numeric = cur;
      }
      prev = cur;
    }
    if (used_one_sided) ++report.one_sided;
    if (kinked) ++report.kinked;
    values[idx] = orig;
    const double a = analytic[idx];
    const double abs_err = std::fabs(a - numeric);
    const double rel_err = abs_err / std::max({std::fabs(a), std::fabs(numeric), floor});
    if (rel_err > report.max_rel_error) {
      report.max_rel_error = rel_err;
      report.worst_index = idx;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
    ++report.probed;
  }
  report.passed = report.max_rel_error < opts.tol;
  return report;
}

GradcheckReport gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& t,
                          const GradcheckOptions& opts) {
  Tensor x = t.detach();
  return gradcheck([&f, x]() { return f(x); }, x, opts);
}

}  // namespace sshunet
