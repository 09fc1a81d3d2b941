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
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "sshunet/tensor.hpp"

namespace sshunet {

using Rng = std::mt19937_64;

/// Ordered, named collection of trainable leaves.
class ParamStore {
 public:
  /// Registers a new parameter. Names must be unique.
  Tensor add(const std::string& name, Tensor value);

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  /// Number of scalars across all parameters.
  std::int64_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// U(-b, b) with b = sqrt(6 / fan_in).
Tensor kaiming_uniform(const Shape& shape, std::int64_t fan_in, Rng& rng);

}  // namespace sshunet
