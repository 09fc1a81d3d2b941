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

#include <cstddef>
#include <functional>
#include <vector>

#include "sshunet/tensor.hpp"

namespace sshunet {

struct GradcheckOptions {
  double h = 1e-2;
  double tol = 1e-3;
  /// Coordinates to probe; empty means all of them.
  std::vector<std::size_t> indices;
  /// Errors are taken relative to max(|analytic|, |numeric|, floor) where
  /// floor = floor_fraction * max_i |analytic_i|. The default scores every
  /// component against the gradient's largest one, since float32 rounding
  /// noise is set by that scale rather than by the component's own size.
  double floor_fraction = 1.0;
  /// The step is halved, down to min_h, until the stencil stays on the
  /// LeakyReLU branch pattern of x. When only one side leaves it, a
  /// one-sided three-point stencil on the other side is used instead.
  double min_h = 1e-4;
  /// Extra halvings of h tried per coordinate; the estimate whose step
  /// agrees best with the next larger one is kept.
  int levels = 4;
  /// Weights u of the probed scalar sum(u * f()). Undefined means ones.
  Tensor cotangent;
};

struct GradcheckReport {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t probed = 0;
  /// Coordinates scored with the one-sided stencil.
  std::size_t one_sided = 0;
  /// Coordinates where even min_h crossed a kink; still scored.
  std::size_t kinked = 0;
  bool passed = false;
};

/// Compares the tape gradient of L = sum(u * f()) w.r.t. `wrt` against
/// central differences (L(x+h) - L(x-h)) / 2h. The difference is taken per
/// output element and accumulated in double, so float rounding of
/// unaffected outputs cancels exactly. `wrt` is perturbed in place and
/// restored; `f` must read it on every call. Stencil points never leave the
/// LeakyReLU branch pattern of x, so the check measures the derivative of
/// the smooth piece the tape differentiated.
GradcheckReport gradcheck(const std::function<Tensor()>& f, Tensor wrt, const GradcheckOptions& opts = {});

/// Same check for a function of one tensor argument, evaluated at `t`.
GradcheckReport gradcheck(const std::function<Tensor(const Tensor&)>& f, const Tensor& t,
                          const GradcheckOptions& opts = {});

}  // namespace sshunet
