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

#include "sshunet/metrics.hpp"

#include <cmath>
#include <map>
#include <string>

#include "sshunet/errors.hpp"

namespace sshunet {

namespace {

using i64 = std::int64_t;

std::string shape_text(const std::array<i64, 3>& s) {
  return "(" + std::to_string(s[0]) + ", " + std::to_string(s[1]) + ", " + std::to_string(s[2]) + ")";
}

void check_pair(const LabelVolume& y, const LabelVolume& yhat, bool spacing) {
  if (y.shape != yhat.shape) {
    throw ArgumentError("label volumes differ in shape: " + shape_text(y.shape) + " vs " + shape_text(yhat.shape));
  }
  if (static_cast<i64>(y.labels.size()) != y.numel() || static_cast<i64>(yhat.labels.size()) != yhat.numel()) {
    throw ArgumentError("label buffer does not match its shape");
  }
  if (spacing && y.spacing != yhat.spacing) throw ArgumentError("label volumes differ in spacing");
}

std::vector<char> boundary(const LabelVolume& v, int k) {
  const auto [X, Y, Z] = v.shape;
  std::vector<char> out(static_cast<std::size_t>(v.numel()), 0);
  auto inside = [&](i64 x, i64 y, i64 z) {
    return x >= 0 && y >= 0 && z >= 0 && x < X && y < Y && z < Z && v.at(x, y, z) == k;
  };
  for (i64 x = 0; x < X; ++x)
    for (i64 y = 0; y < Y; ++y)
      for (i64 z = 0; z < Z; ++z) {
        if (v.at(x, y, z) != k) continue;
        if (!inside(x - 1, y, z) || !inside(x + 1, y, z) || !inside(x, y - 1, z) || !inside(x, y + 1, z) ||
            !inside(x, y, z - 1) || !inside(x, y, z + 1)) {
          out[static_cast<std::size_t>(v.index(x, y, z))] = 1;
        }
      }
  return out;
}

// Counts voxels of `from` with a voxel of `to` within tau. Exact: every voxel
// of `to` inside the axis-aligned tau box is tested by squared distance.
i64 within_tolerance(const std::vector<char>& from, const std::vector<char>& to, const LabelVolume& grid, double tau) {
  const auto [X, Y, Z] = grid.shape;
  const auto& sp = grid.spacing;
  const double tau2 = tau * tau + 1e-9;
  const i64 rx = static_cast<i64>(std::floor(tau / sp[0] + 1e-9));
  const i64 ry = static_cast<i64>(std::floor(tau / sp[1] + 1e-9));
  const i64 rz = static_cast<i64>(std::floor(tau / sp[2] + 1e-9));
  i64 hits = 0;
  for (i64 x = 0; x < X; ++x)
    for (i64 y = 0; y < Y; ++y)
      for (i64 z = 0; z < Z; ++z) {
        if (!from[static_cast<std::size_t>(grid.index(x, y, z))]) continue;
        bool found = false;
        for (i64 dx = -rx; dx <= rx && !found; ++dx) {
          const i64 nx = x + dx;
          if (nx < 0 || nx >= X) continue;
          for (i64 dy = -ry; dy <= ry && !found; ++dy) {
            const i64 ny = y + dy;
            if (ny < 0 || ny >= Y) continue;
            for (i64 dz = -rz; dz <= rz; ++dz) {
              const i64 nz = z + dz;
              if (nz < 0 || nz >= Z || !to[static_cast<std::size_t>(grid.index(nx, ny, nz))]) continue;
              const double ex = dx * sp[0], ey = dy * sp[1], ez = dz * sp[2];
              if (ex * ex + ey * ey + ez * ez <= tau2) {
                found = true;
                break;
              }
            }
          }
        }
        if (found) ++hits;
      }
  return hits;
}

i64 count(const LabelVolume& v, int k) {
  i64 n = 0;
  for (auto l : v.labels) n += l == k;
  return n;
}

}  // namespace

LabelVolume LabelVolume::zeros(std::array<std::int64_t, 3> shape, std::array<double, 3> spacing) {
  LabelVolume v;
  v.shape = shape;
  v.spacing = spacing;
  v.labels.assign(static_cast<std::size_t>(shape[0] * shape[1] * shape[2]), 0);
  return v;
}

double dice(const LabelVolume& y, const LabelVolume& yhat, int k) {
  check_pair(y, yhat, false);
  i64 a = 0, b = 0, both = 0;
  for (std::size_t i = 0; i < y.labels.size(); ++i) {
    const bool in_y = y.labels[i] == k;
    const bool in_p = yhat.labels[i] == k;
    a += in_y;
    b += in_p;
    both += in_y && in_p;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

double nsd(const LabelVolume& y, const LabelVolume& yhat, int k, double tau_mm) {
  check_pair(y, yhat, true);
  if (!(tau_mm >= 0.0)) throw ArgumentError("NSD tolerance must be non-negative");
  for (double s : y.spacing) {
    if (!(s > 0.0)) throw ArgumentError("voxel spacing must be positive");
  }
  const auto by = boundary(y, k);
  const auto bp = boundary(yhat, k);
  i64 ny = 0, np = 0;
  for (char c : by) ny += c;
  for (char c : bp) np += c;
  if (ny + np == 0) return 1.0;
  if (ny == 0 || np == 0) return 0.0;
  const i64 hits = within_tolerance(bp, by, y, tau_mm) + within_tolerance(by, bp, y, tau_mm);
  return static_cast<double>(hits) / static_cast<double>(ny + np);
}

MetricReport evaluate_case(const LabelVolume& y, const LabelVolume& yhat, int num_classes, double tau_mm) {
  check_pair(y, yhat, true);
  for (std::size_t i = 0; i < y.labels.size(); ++i) {
    if (y.labels[i] < 0 || y.labels[i] >= num_classes || yhat.labels[i] < 0 || yhat.labels[i] >= num_classes) {
      throw ArgumentError("label out of range [0, " + std::to_string(num_classes) + ")");
    }
  }
  MetricReport r;
  double sd = 0.0, sn = 0.0;
  int present = 0;
  for (int k = 1; k < num_classes; ++k) {
    ClassMetrics c;
    c.cls = k;
    c.gt_voxels = count(y, k);
    c.pred_voxels = count(yhat, k);
    c.present = c.gt_voxels + c.pred_voxels > 0;
    c.dice = dice(y, yhat, k);
    c.nsd = nsd(y, yhat, k, tau_mm);
    if (c.present) {
      sd += c.dice;
      sn += c.nsd;
      ++present;
    }
    r.classes.push_back(c);
  }
  if (present) {
    r.mean_dice = sd / present;
    r.mean_nsd = sn / present;
  }
  return r;
}

MetricReport aggregate(const std::vector<MetricReport>& cases) {
  struct Acc {
    double dice = 0.0, nsd = 0.0;
    std::int64_t gt = 0, pred = 0;
    int n = 0;
    bool seen = false;
  };
  std::map<int, Acc> acc;
  for (const auto& c : cases) {
    for (const auto& m : c.classes) {
      auto& a = acc[m.cls];
      a.seen = true;
      a.gt += m.gt_voxels;
      a.pred += m.pred_voxels;
      if (!m.present) continue;
      a.dice += m.dice;
      a.nsd += m.nsd;
      ++a.n;
    }
  }
  MetricReport r;
  double sd = 0.0, sn = 0.0;
  int present = 0;
  for (const auto& [k, a] : acc) {
    ClassMetrics m;
    m.cls = k;
    m.gt_voxels = a.gt;
    m.pred_voxels = a.pred;
    m.present = a.n > 0;
    if (m.present) {
      m.dice = a.dice / a.n;
      m.nsd = a.nsd / a.n;
      sd += m.dice;
      sn += m.nsd;
      ++present;
    }
    r.classes.push_back(m);
  }
  if (present) {
    r.mean_dice = sd / present;
    r.mean_nsd = sn / present;
  }
  return r;
}

}  // namespace sshunet
