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

#include "sshunet/params.hpp"

#include <cmath>
#include <cstdlib>

#include "sshunet/errors.hpp"
#include "sshunet/fraction.hpp"

namespace sshunet {

Tensor ParamStore::add(const std::string& name, Tensor value) {
  if (contains(name)) throw ArgumentError("duplicate parameter name " + name);
  value.set_requires_grad(true);
  entries_.emplace_back(name, value);
  return value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& [n, t] : entries_) {
    if (n == name) return t;
  }
  throw ArgumentError("unknown parameter " + name);
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.first == name) return true;
  }
  return false;
}

std::int64_t ParamStore::scalar_count() const {
  std::int64_t n = 0;
  for (const auto& e : entries_) n += e.second.numel();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.second.zero_grad();
}

Tensor kaiming_uniform(const Shape& shape, std::int64_t fan_in, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<float> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<float>(dist(rng));
  return Tensor::from_data(shape, std::move(data));
}

std::string Fraction::str() const {
  if (num == 0) return "0";
  if (den == 1) return std::to_string(num);
  return std::to_string(num) + "/" + std::to_string(den);
}

Fraction Fraction::parse(const std::string& text) {
  auto parse_int = [&](const std::string& s) {
    if (s.empty()) throw ArgumentError("invalid fraction '" + text + "'");
    for (char c : s) {
      if (c < '0' || c > '9') throw ArgumentError("invalid fraction '" + text + "'");
    }
    return std::stoi(s);
  };
  const auto slash = text.find('/');
  Fraction f;
  if (slash == std::string::npos) {
    f.num = parse_int(text);
    f.den = 1;
  } else {
    f.num = parse_int(text.substr(0, slash));
    f.den = parse_int(text.substr(slash + 1));
  }
  if (f.den == 0) throw ArgumentError("invalid fraction '" + text + "': zero denominator");
  return f;
}

}  // namespace sshunet
