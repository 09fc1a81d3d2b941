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
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace sshunet {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct TensorImpl;
}

/// Dense row-major float32 tensor handle.
///
/// Copies share storage. Values are fixed at construction; the only mutation
/// paths are gradient accumulation and `mutable_data()`, which the optimizers
/// use to update parameters in place between steps.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);
  static Tensor scalar(float value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  int rank() const;
  /// Extent of axis `axis`; negative values count from the back.
  std::int64_t dim(int axis) const;
  std::int64_t numel() const;

  std::span<const float> data() const;
  std::span<float> mutable_data();
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  /// True when the tensor was not produced by a recorded op.
  bool is_leaf() const;

  bool has_grad() const;
  std::span<const float> grad() const;
  void zero_grad();

  /// New leaf with a copy of the values and no gradient tracking.
  Tensor detach() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

  std::shared_ptr<detail::TensorImpl> impl_;

  friend class GradTape;
  friend Tensor make_op_result(Shape, std::vector<float>, std::vector<Tensor>,
                               std::function<void(std::span<const float>)>, const char*);
  friend std::span<float> grad_sink(const Tensor&);
};

using BackwardFn = std::function<void(std::span<const float> grad_out)>;

/// Ordered record of executed differentiable ops.
///
/// Ops record themselves on the tape made active by a `TapeScope` on the
/// calling thread, provided at least one input requires a gradient. With no
/// active tape ops run in inference mode and nothing is recorded.
class GradTape {
 public:
  GradTape() = default;
  GradTape(const GradTape&) = delete;
  GradTape& operator=(const GradTape&) = delete;

  void record(std::vector<Tensor> inputs, Tensor output, BackwardFn fn, const char* op_name);

  /// Reverse-mode sweep seeded with d(loss)/d(loss) = 1. Leaf gradients
  /// accumulate across calls; intermediate gradients are reset first.
  void backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  /// Op names in execution order.
  std::vector<std::string> op_names() const;
  void clear() { entries_.clear(); }

 private:
  struct Entry {
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
    const char* name;
  };
  std::vector<Entry> entries_;
};

/// Makes `tape` the active tape of this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(GradTape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  GradTape* previous_;
};

GradTape* active_tape();

/// Convenience wrapper for `tape.backward(loss)`.
void backward(GradTape& tape, const Tensor& loss);

/// Builds an op output. Throws NumericError if any value is non-finite.
/// When a tape is active and an input requires a gradient, the output is
/// marked as requiring one and `fn` is recorded to propagate `grad_out`
/// into the inputs through `grad_sink`.
Tensor make_op_result(Shape shape, std::vector<float> data, std::vector<Tensor> inputs,
                      BackwardFn fn, const char* op_name);

/// Gradient buffer of `t` for accumulation, allocated on first use. Empty
/// when `t` does not require a gradient.
std::span<float> grad_sink(const Tensor& t);

}  // namespace sshunet
