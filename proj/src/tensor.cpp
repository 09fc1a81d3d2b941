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

#include "sshunet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sshunet/errors.hpp"

namespace sshunet {

namespace detail {
struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool leaf = true;
};
}  // namespace detail

namespace {
thread_local GradTape* g_active_tape = nullptr;

void check_shape(const Shape& shape) {
  for (auto e : shape) {
    if (e <= 0) throw ArgumentError("tensor extents must be positive, got " + shape_str(shape));
  }
}
}  // namespace

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  check_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data.assign(static_cast<std::size_t>(shape_numel(shape)), value);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from_data(Shape shape, std::vector<float> data, bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::int64_t>(data.size()) != shape_numel(shape)) {
    throw ArgumentError("data length " + std::to_string(data.size()) + " does not match shape " +
                        shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::scalar(float value, bool requires_grad) { return full({1}, value, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }
int Tensor::rank() const { return static_cast<int>(impl_->shape.size()); }

std::int64_t Tensor::dim(int axis) const {
  const int r = rank();
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw ArgumentError("axis out of range");
  return impl_->shape[static_cast<std::size_t>(axis)];
}

std::int64_t Tensor::numel() const { return static_cast<std::int64_t>(impl_->data.size()); }
std::span<const float> Tensor::data() const { return impl_->data; }
std::span<float> Tensor::mutable_data() { return impl_->data; }

float Tensor::item() const {
  if (impl_->data.size() != 1) throw ArgumentError("item() on a non-scalar tensor " + shape_str(shape()));
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }
void Tensor::set_requires_grad(bool value) { impl_->requires_grad = value; }
bool Tensor::is_leaf() const { return impl_->leaf; }
bool Tensor::has_grad() const { return !impl_->grad.empty(); }
std::span<const float> Tensor::grad() const { return impl_->grad; }
void Tensor::zero_grad() { impl_->grad.clear(); }

Tensor Tensor::detach() const { return from_data(shape(), impl_->data, false); }

std::span<float> grad_sink(const Tensor& t) {
  if (!t.defined() || !t.impl_->requires_grad) return {};
  auto& g = t.impl_->grad;
  if (g.empty()) g.assign(t.impl_->data.size(), 0.0f);
  return g;
}

Tensor make_op_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                      BackwardFn fn, const char* op_name) {
  for (float v : data) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite value produced by ") + op_name);
  }
  Tensor out = Tensor::from_data(std::move(shape), std::move(data));
  GradTape* tape = g_active_tape;
  if (tape == nullptr) return out;
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.defined() && t.requires_grad(); });
  if (!needs_grad) return out;
  out.impl_->requires_grad = true;
  out.impl_->leaf = false;
  tape->record(std::move(inputs), out, std::move(fn), op_name);
  return out;
}

void GradTape::record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn, const char* op_name) {
  entries_.push_back(Entry{std::move(inputs), std::move(output), std::move(fn), op_name});
}

void GradTape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ArgumentError("backward requires a scalar loss");
  }
  for (auto& e : entries_) e.output.impl_->grad.clear();
  auto seed = grad_sink(loss);
  if (seed.empty()) return;  // loss does not depend on anything trainable
  seed[0] += 1.0f;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    const auto& g = it->output.impl_->grad;
    if (g.empty()) continue;
    it->fn(g);
  }
}

std::vector<std::string> GradTape::op_names() const {
  std::vector<std::string> names;
  names.reserve(entries_.size());
  for (const auto& e : entries_) names.emplace_back(e.name);
  return names;
}

TapeScope::TapeScope(GradTape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

GradTape* active_tape() { return g_active_tape; }

void backward(GradTape& tape, const Tensor& loss) { tape.backward(loss); }

}  // namespace sshunet
