// Copyright 2026 The darklight Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace darklight {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  std::vector<double>& ensure_grad();
};

}  // namespace detail

// Dense row-major float64 array. Copies share storage: a Tensor is a handle.
// Values are fixed once an op has produced them; only leaves created by the
// caller expose mutable_data() (used by optimizers and weight loading).
class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(const Shape& shape);
  static Tensor ones(const Shape& shape);
  static Tensor full(const Shape& shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  std::size_t dim(std::size_t axis) const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  double item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  // Empty span when no gradient has been accumulated.
  std::span<const double> grad() const;
  void zero_grad();

  // New leaf with a copy of the values and no history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Records differentiable ops issued on this thread while alive. Only one tape
// is active per thread; constructing a new one shadows the previous until it
// is destroyed. Ops issued with no active tape produce constants.
class Tape {
 public:
  // Receives the op's output node (value and accumulated grad).
  using BackwardFn = std::function<void(const detail::Node& out)>;

  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Propagates d(loss)/d(leaf) into every reachable leaf's grad buffer.
  // Returns the number of recorded ops visited (always size()).
  std::size_t backward(const Tensor& loss);

  std::size_t size() const { return entries_.size(); }
  void clear() { entries_.clear(); }

  static Tape* active();
  void record(std::shared_ptr<detail::Node> output, BackwardFn fn);

 private:
  struct Entry {
    std::shared_ptr<detail::Node> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  Tape* previous_ = nullptr;
};

// Builds a result tensor, recording it on the active tape when any input
// requires a gradient. Op implementations go through this.
Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs,
                   Tape::BackwardFn backward);

// ---- element-wise ---------------------------------------------------------

enum class ElementwiseOp { kAdd, kSub, kMul, kDiv, kRelu, kSigmoid, kExp, kLog, kAbs };

// Binary ops broadcast numpy-style (trailing alignment, singleton axes).
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b = Tensor());

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& t);
Tensor sigmoid(const Tensor& t);
Tensor exp(const Tensor& t);
Tensor log(const Tensor& t);
Tensor abs(const Tensor& t);
Tensor square(const Tensor& t);
Tensor scale(const Tensor& t, double factor);
Tensor shift(const Tensor& t, double offset);

enum class ClampGrad {
  kMasked,          // zero gradient where the input was clipped
  kStraightThrough  // identity gradient everywhere
};
Tensor clamp(const Tensor& t, double lo, double hi, ClampGrad mode = ClampGrad::kMasked);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
inline Tensor operator+(const Tensor& a, double s) { return shift(a, s); }
inline Tensor operator+(double s, const Tensor& a) { return shift(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return shift(a, -s); }
inline Tensor operator-(double s, const Tensor& a) { return shift(scale(a, -1.0), s); }
inline Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

// ---- reductions -----------------------------------------------------------

enum class ReduceOp { kSum, kMean, kSpatialMean };

Tensor reduce(ReduceOp op, const Tensor& t);
Tensor sum(const Tensor& t);
Tensor mean(const Tensor& t);
// Averages the trailing two axes: [..., H, W] -> [...].
Tensor spatial_mean(const Tensor& t);
// [C, H, W] -> [1, H, W].
Tensor channel_mean(const Tensor& t);

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& t, const Shape& shape);
// Rows [begin, end) of the leading axis.
Tensor slice_leading(const Tensor& t, std::size_t begin, std::size_t end);

// ---- spatial --------------------------------------------------------------

// Cross-correlation of [C_in, H, W] with [C_out, C_in, k, k].
Tensor conv2d(const Tensor& input, const Tensor& weight, int stride = 1, int padding = 0);
// 2x2 average pooling with stride 2; H and W must be even.
Tensor avg_pool2(const Tensor& t);
Tensor upsample_nearest(const Tensor& t, std::size_t factor);
// Forward differences on the trailing axes; the last column/row is zero.
Tensor diff_x(const Tensor& t);
Tensor diff_y(const Tensor& t);
// Separable filter applied to each [H, W] plane of [C, H, W], no padding.
// Output is [C, H - k + 1, W - k + 1].
Tensor separable_filter_valid(const Tensor& t, std::span<const double> kernel);

}  // namespace darklight
