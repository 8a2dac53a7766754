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

#include "darklight/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace darklight {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

std::vector<double>& Node::ensure_grad() {
  if (grad.empty()) grad.assign(value.size(), 0.0);
  return grad;
}

}  // namespace detail

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw std::invalid_argument("Tensor: shape " + shape_to_string(shape) + " holds " +
                                std::to_string(shape_numel(shape)) + " values, got " +
                                std::to_string(values.size()));
  }
  node_ = std::make_shared<detail::Node>();
  node_->shape = std::move(shape);
  node_->value = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(const Shape& shape) { return full(shape, 0.0); }
Tensor Tensor::ones(const Shape& shape) { return full(shape, 1.0); }
Tensor Tensor::full(const Shape& shape, double value) {
  return Tensor(shape, std::vector<double>(shape_numel(shape), value));
}
Tensor Tensor::scalar(double value) { return Tensor(Shape{}, {value}); }

static const detail::Node& checked(const std::shared_ptr<detail::Node>& n) {
  if (!n) throw std::logic_error("Tensor: use of undefined tensor");
  return *n;
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::numel() const { return checked(node_).value.size(); }
std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw std::out_of_range("Tensor::dim: axis " + std::to_string(axis) + " of " +
                            shape_to_string(s));
  }
  return s[axis];
}
std::span<const double> Tensor::data() const { return checked(node_).value; }
std::span<double> Tensor::mutable_data() {
  checked(node_);
  return node_->value;
}
double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_to_string(shape()) +
                                " is not a scalar");
  }
  return node_->value[0];
}
bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
void Tensor::set_requires_grad(bool on) {
  checked(node_);
  node_->requires_grad = on;
}
bool Tensor::has_grad() const { return !checked(node_).grad.empty(); }
std::span<const double> Tensor::grad() const { return checked(node_).grad; }
void Tensor::zero_grad() {
  checked(node_);
  std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}
Tensor Tensor::detach() const { return Tensor(shape(), std::vector<double>(data().begin(), data().end())); }

// ---- Tape -----------------------------------------------------------------

namespace {
thread_local Tape* g_active_tape = nullptr;
}

namespace {

// Each training step allocates and frees the same set of large activation
// buffers. With glibc defaults those go straight back to the kernel and every
// step pays the page faults again, so keep them in the heap instead.
void retain_large_allocations() {
#if defined(__GLIBC__)
  static const bool once = [] {
    mallopt(M_MMAP_THRESHOLD, 512 << 20);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    return true;
  }();
  (void)once;
#endif
}

}  // namespace

Tape::Tape() : previous_(g_active_tape) {
  retain_large_allocations();
  g_active_tape = this;
}
Tape::~Tape() { g_active_tape = previous_; }
Tape* Tape::active() { return g_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> output, BackwardFn fn) {
  entries_.push_back(Entry{std::move(output), std::move(fn)});
}

std::size_t Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                (loss.defined() ? shape_to_string(loss.shape()) : "<undefined>"));
  }
  if (!loss.requires_grad()) {
    throw std::invalid_argument("backward: loss does not depend on any differentiable leaf");
  }
  loss.node()->ensure_grad()[0] += 1.0;
  std::size_t visited = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    ++visited;
    if (it->output->grad.empty()) continue;  // not reachable from loss
    it->backward(*it->output);
  }
  return visited;
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> inputs, Tape::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  Tape* tape = Tape::active();
  if (tape == nullptr) return out;
  const bool needs = std::any_of(inputs.begin(), inputs.end(), [](const Tensor* t) {
    return t != nullptr && t->defined() && t->requires_grad();
  });
  if (!needs) return out;
  out.set_requires_grad(true);
  tape->record(out.node(), std::move(backward));
  return out;
}

// ---- broadcasting ---------------------------------------------------------

namespace {

struct Broadcast {
  Shape out;
  std::vector<std::size_t> stride_a;  // aligned to out rank, 0 on broadcast axes
  std::vector<std::size_t> stride_b;
};

std::vector<std::size_t> aligned_strides(const Shape& s, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t step = 1;
  const std::size_t offset = out.size() - s.size();
  for (std::size_t i = s.size(); i-- > 0;) {
    strides[i + offset] = s[i] == 1 ? 0 : step;
    step *= s[i];
  }
  return strides;
}

Broadcast broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const std::size_t db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes " + shape_to_string(a) + " and " +
                                  shape_to_string(b) + " are not broadcastable");
    }
    out[i] = std::max(da, db);
  }
  return Broadcast{out, aligned_strides(a, out), aligned_strides(b, out)};
}

// Calls fn(out_index, a_index, b_index) for every output element.
template <typename Fn>
void for_each_broadcast(const Broadcast& bc, Fn&& fn) {
  const std::size_t n = shape_numel(bc.out);
  const std::size_t rank = bc.out.size();
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ia, ib);
    for (std::size_t d = rank; d-- > 0;) {
      ++idx[d];
      ia += bc.stride_a[d];
      ib += bc.stride_b[d];
      if (idx[d] < bc.out[d]) break;
      ia -= bc.stride_a[d] * idx[d];
      ib -= bc.stride_b[d] * idx[d];
      idx[d] = 0;
    }
  }
}

const char* op_name(ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::kAdd: return "add";
    case ElementwiseOp::kSub: return "sub";
    case ElementwiseOp::kMul: return "mul";
    case ElementwiseOp::kDiv: return "div";
    case ElementwiseOp::kRelu: return "relu";
    case ElementwiseOp::kSigmoid: return "sigmoid";
    case ElementwiseOp::kExp: return "exp";
    case ElementwiseOp::kLog: return "log";
    case ElementwiseOp::kAbs: return "abs";
  }
  return "?";
}

Tensor binary(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  Broadcast bc = broadcast_shapes(a.shape(), b.shape(), op_name(op));
  auto av = a.data();
  auto bv = b.data();
  if (op == ElementwiseOp::kDiv) {
    for (double y : bv) {
      if (y == 0.0) throw std::domain_error("div: zero divisor");
    }
  }
  auto apply = [op](double x, double y) {
    switch (op) {
      case ElementwiseOp::kAdd: return x + y;
      case ElementwiseOp::kSub: return x - y;
      case ElementwiseOp::kMul: return x * y;
      default: return x / y;
    }
  };
  const bool same = a.shape() == b.shape();
  std::vector<double> out(shape_numel(bc.out));
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = apply(av[i], bv[i]);
  } else {
    for_each_broadcast(bc, [&](std::size_t i, std::size_t ia, std::size_t ib) {
      out[i] = apply(av[ia], bv[ib]);
    });
  }
  auto na = a.node();
  auto nb = b.node();
  return make_result(bc.out, std::move(out), {&a, &b},
                     [op, na, nb, bc, same](const detail::Node& out_node) {
                       const auto& g = out_node.grad;
                       const auto& x = na->value;
                       const auto& y = nb->value;
                       double* ga = na->requires_grad ? na->ensure_grad().data() : nullptr;
                       double* gb = nb->requires_grad ? nb->ensure_grad().data() : nullptr;
                       auto step = [&](std::size_t i, std::size_t ia, std::size_t ib) {
                         switch (op) {
                           case ElementwiseOp::kAdd:
                             if (ga) ga[ia] += g[i];
                             if (gb) gb[ib] += g[i];
                             break;
                           case ElementwiseOp::kSub:
                             if (ga) ga[ia] += g[i];
                             if (gb) gb[ib] -= g[i];
                             break;
                           case ElementwiseOp::kMul:
                             if (ga) ga[ia] += g[i] * y[ib];
                             if (gb) gb[ib] += g[i] * x[ia];
                             break;
                           default:
                             if (ga) ga[ia] += g[i] / y[ib];
                             if (gb) gb[ib] -= g[i] * x[ia] / (y[ib] * y[ib]);
                             break;
                         }
                       };
                       if (same) {
                         for (std::size_t i = 0; i < g.size(); ++i) step(i, i, i);
                       } else {
                         for_each_broadcast(bc, step);
                       }
                     });
}

// Unary op; deriv(x, y) is dy/dx given input x and output y.
template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& t, Fwd fwd, Deriv deriv) {
  auto in = t.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  auto nin = t.node();
  return make_result(t.shape(), std::move(out), {&t},
                     [nin, deriv](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) {
                         gi[i] += o.grad[i] * deriv(nin->value[i], o.value[i]);
                       }
                     });
}

}  // namespace

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case ElementwiseOp::kAdd:
    case ElementwiseOp::kSub:
    case ElementwiseOp::kMul:
    case ElementwiseOp::kDiv:
      if (!b.defined()) {
        throw std::invalid_argument(std::string(op_name(op)) + ": second operand missing");
      }
      return binary(op, a, b);
    case ElementwiseOp::kRelu:
      return unary(
          a, [](double x) { return x < 0.0 ? 0.0 : x; },
          [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
    case ElementwiseOp::kSigmoid:
      return unary(
          a,
          [](double x) {
            double y;
            if (x >= 0.0) {
              y = 1.0 / (1.0 + std::exp(-x));
            } else {
              const double e = std::exp(x);
              y = e / (1.0 + e);
            }
            return std::clamp(y, std::numeric_limits<double>::min(), std::nextafter(1.0, 0.0));
          },
          [](double, double y) { return y * (1.0 - y); });
    case ElementwiseOp::kExp:
      return unary(
          a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
    case ElementwiseOp::kLog:
      // NaN passes through so divergence surfaces as a non-finite loss.
      for (double x : a.data()) {
        if (x <= 0.0) throw std::domain_error("log: nonpositive operand " + std::to_string(x));
      }
      return unary(
          a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
    case ElementwiseOp::kAbs:
      return unary(
          a, [](double x) { return std::abs(x); },
          [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
  }
  throw std::invalid_argument("elementwise: unknown op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(ElementwiseOp::kDiv, a, b); }
Tensor relu(const Tensor& t) { return elementwise(ElementwiseOp::kRelu, t); }
Tensor sigmoid(const Tensor& t) { return elementwise(ElementwiseOp::kSigmoid, t); }
Tensor exp(const Tensor& t) { return elementwise(ElementwiseOp::kExp, t); }
Tensor log(const Tensor& t) { return elementwise(ElementwiseOp::kLog, t); }
Tensor abs(const Tensor& t) { return elementwise(ElementwiseOp::kAbs, t); }

Tensor square(const Tensor& t) {
  return unary(
      t, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor scale(const Tensor& t, double factor) {
  return unary(
      t, [factor](double x) { return x * factor; }, [factor](double, double) { return factor; });
}

Tensor shift(const Tensor& t, double offset) {
  return unary(
      t, [offset](double x) { return x + offset; }, [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& t, double lo, double hi, ClampGrad mode) {
  if (lo > hi) throw std::invalid_argument("clamp: lo > hi");
  auto fwd = [lo, hi](double x) { return std::clamp(x, lo, hi); };
  if (mode == ClampGrad::kStraightThrough) {
    return unary(t, fwd, [](double, double) { return 1.0; });
  }
  return unary(t, fwd, [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

// ---- reductions -----------------------------------------------------------

Tensor reduce(ReduceOp op, const Tensor& t) {
  if (t.numel() == 0) throw std::invalid_argument("reduce: empty tensor");
  auto in = t.data();
  auto nin = t.node();
  if (op == ReduceOp::kSpatialMean) {
    if (t.rank() < 3) {
      throw std::invalid_argument("spatial_mean: rank >= 3 required, got " +
                                  shape_to_string(t.shape()));
    }
    Shape out_shape(t.shape().begin(), t.shape().end() - 2);
    const std::size_t plane = t.dim(t.rank() - 2) * t.dim(t.rank() - 1);
    const std::size_t planes = shape_numel(out_shape);
    std::vector<double> out(planes);
    for (std::size_t p = 0; p < planes; ++p) {
      double acc = 0.0;
      for (std::size_t i = 0; i < plane; ++i) acc += in[p * plane + i];
      out[p] = acc / static_cast<double>(plane);
    }
    return make_result(std::move(out_shape), std::move(out), {&t},
                       [nin, plane](const detail::Node& o) {
                         auto& gi = nin->ensure_grad();
                         const double inv = 1.0 / static_cast<double>(plane);
                         for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i / plane] * inv;
                       });
  }
  double acc = 0.0;
  for (double x : in) acc += x;
  const double factor = op == ReduceOp::kMean ? 1.0 / static_cast<double>(in.size()) : 1.0;
  return make_result(Shape{}, {acc * factor}, {&t}, [nin, factor](const detail::Node& o) {
    auto& gi = nin->ensure_grad();
    const double g = o.grad[0] * factor;
    for (double& x : gi) x += g;
  });
}

Tensor sum(const Tensor& t) { return reduce(ReduceOp::kSum, t); }
Tensor mean(const Tensor& t) { return reduce(ReduceOp::kMean, t); }
Tensor spatial_mean(const Tensor& t) { return reduce(ReduceOp::kSpatialMean, t); }

Tensor channel_mean(const Tensor& t) {
  if (t.rank() != 3 || t.numel() == 0) {
    throw std::invalid_argument("channel_mean: expected non-empty [C,H,W], got " +
                                shape_to_string(t.shape()));
  }
  const std::size_t c = t.dim(0);
  const std::size_t plane = t.dim(1) * t.dim(2);
  auto in = t.data();
  std::vector<double> out(plane, 0.0);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < plane; ++i) out[i] += in[k * plane + i];
  }
  const double inv = 1.0 / static_cast<double>(c);
  for (double& x : out) x *= inv;
  auto nin = t.node();
  return make_result(Shape{1, t.dim(1), t.dim(2)}, std::move(out), {&t},
                     [nin, c, plane, inv](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t k = 0; k < c; ++k) {
                         for (std::size_t i = 0; i < plane; ++i) gi[k * plane + i] += o.grad[i] * inv;
                       }
                     });
}

// ---- shape ----------------------------------------------------------------

Tensor reshape(const Tensor& t, const Shape& shape) {
  if (shape_numel(shape) != t.numel()) {
    throw std::invalid_argument("reshape: cannot view " + shape_to_string(t.shape()) + " as " +
                                shape_to_string(shape));
  }
  auto nin = t.node();
  return make_result(shape, std::vector<double>(t.data().begin(), t.data().end()), {&t},
                     [nin](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += o.grad[i];
                     });
}

Tensor slice_leading(const Tensor& t, std::size_t begin, std::size_t end) {
  if (t.rank() == 0 || begin >= end || end > t.dim(0)) {
    throw std::invalid_argument("slice_leading: range [" + std::to_string(begin) + "," +
                                std::to_string(end) + ") invalid for " + shape_to_string(t.shape()));
  }
  Shape out_shape = t.shape();
  out_shape[0] = end - begin;
  const std::size_t row = t.numel() / t.dim(0);
  auto in = t.data();
  std::vector<double> out(in.begin() + static_cast<std::ptrdiff_t>(begin * row),
                          in.begin() + static_cast<std::ptrdiff_t>(end * row));
  auto nin = t.node();
  const std::size_t offset = begin * row;
  return make_result(std::move(out_shape), std::move(out), {&t},
                     [nin, offset](const detail::Node& o) {
                       auto& gi = nin->ensure_grad();
                       for (std::size_t i = 0; i < o.grad.size(); ++i) gi[offset + i] += o.grad[i];
                     });
}

}  // namespace darklight
