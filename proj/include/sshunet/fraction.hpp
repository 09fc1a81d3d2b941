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

#include <string>

namespace sshunet {

/// Non-negative rational number, e.g. the per-direction shift proportion.
struct Fraction {
  int num = 0;
  int den = 1;

  double value() const { return static_cast<double>(num) / den; }
  /// floor(n * num / den) computed in integers.
  int of(int n) const { return static_cast<int>((static_cast<long long>(n) * num) / den); }
  std::string str() const;

  /// Accepts "1/4", "0" or "3". Throws ArgumentError otherwise.
  static Fraction parse(const std::string& text);

  friend bool operator==(const Fraction& a, const Fraction& b) {
    return static_cast<long long>(a.num) * b.den == static_cast<long long>(b.num) * a.den;
  }
};

}  // namespace sshunet
