// Copyright 2026 The spread-lil Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "spread/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

namespace spread {

namespace {

struct TapeState {
  std::uint64_t sequence = 0;
  bool grad_enabled = true;
  std::string override_name;
  Tape::BackwardOverride override_fn;
};

TapeState& tape_state() {
  thread_local TapeState state;
  return state;
}

std::size_t product(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

void check_shape(const Shape& shape) {
  if (shape.empty()) {
    throw DimensionError("tensor shape must have at least one dimension");
  }
  for (auto d : shape) {
    if (d == 0) {
      throw DimensionError("tensor dimensions must be positive, got " +
                           to_string(shape));
    }
  }
}

using detail::Node;
using detail::TensorImpl;
using ImplPtr = std::shared_ptr<TensorImpl>;

ImplPtr new_impl(Shape shape, Eigen::VectorXd data, bool requires_grad) {
  check_shape(shape);
  if (static_cast<std::size_t>(data.size()) != product(shape)) {
    throw DimensionError("data length " + std::to_string(data.size()) +
                         " does not match shape " + to_string(shape));
  }
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

// Builds the result of an operation and, when any input is tracked, records
// a node whose backward rule is produced by `make_rule` (called only then).
template <typename MakeRule>
Tensor record(const char* name, Shape shape, Eigen::VectorXd data,
              const std::vector<const Tensor*>& inputs, MakeRule make_rule) {
  if (!data.allFinite()) {
    throw EvaluationError(std::string("non-finite value produced by ") + name);
  }
  bool track = false;
  if (Tape::grad_enabled()) {
    for (const Tensor* t : inputs) track = track || t->requires_grad();
  }
  auto impl = new_impl(std::move(shape), std::move(data), track);
  if (track) {
    auto node = std::make_shared<Node>();
    node->sequence = Tape::next_sequence();
    node->name = name;
    for (const Tensor* t : inputs) node->inputs.push_back(t->impl());
    Tape::BackwardRule rule = make_rule(node->inputs);
    auto& state = tape_state();
    if (state.override_fn && state.override_name == name) {
      node->backward = [fn = state.override_fn,
                        rule = std::move(rule)](const Eigen::VectorXd& g) {
        fn(g, rule);
      };
    } else {
      node->backward = std::move(rule);
    }
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

// Accumulates into an input only when it participates in differentiation.
void push(const ImplPtr& input, const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (input->requires_grad) input->accumulate(g);
}

Eigen::Map<const RowMatrix> as_matrix(const Eigen::VectorXd& v,
                                      std::size_t rows, std::size_t cols) {
  return {v.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

Eigen::VectorXd flatten(const RowMatrix& m) {
  return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

void require_2d(const Tensor& a, const char* op) {
  if (a.dim() != 2) {
    throw DimensionError(std::string(op) + " expects a 2-D tensor, got " +
                         to_string(a.shape()));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
}

}  // namespace

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::TensorImpl::accumulate(
    const Eigen::Ref<const Eigen::VectorXd>& g) {
  if (grad.size() == 0) {
    grad = g;
  } else {
    grad += g;
  }
}

// Tensor ----------------------------------------------------------------------

Tensor::Tensor() = default;
Tensor::Tensor(std::shared_ptr<detail::TensorImpl> impl)
    : impl_(std::move(impl)) {}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  auto n = static_cast<Eigen::Index>(product(shape));
  return Tensor(new_impl(std::move(shape), Eigen::VectorXd::Constant(n, value),
                         requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  Eigen::VectorXd data =
      Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
  return Tensor(new_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

Tensor Tensor::from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m,
                           bool requires_grad) {
  RowMatrix rm = m;
  return Tensor(new_impl({static_cast<std::size_t>(m.rows()),
                          static_cast<std::size_t>(m.cols())},
                         flatten(rm), requires_grad));
}

Tensor Tensor::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v,
                           bool requires_grad) {
  return Tensor(new_impl({static_cast<std::size_t>(v.size())}, v,
                         requires_grad));
}

const Shape& Tensor::shape() const { return impl_->shape; }
std::size_t Tensor::numel() const {
  return static_cast<std::size_t>(impl_->data.size());
}
std::size_t Tensor::rows() const { return impl_->shape[0]; }
std::size_t Tensor::cols() const {
  return impl_->shape.size() >= 2 ? product(Shape(impl_->shape.begin() + 1,
                                                  impl_->shape.end()))
                                  : 1;
}

Eigen::Map<const Eigen::VectorXd> Tensor::values() const {
  return {impl_->data.data(), impl_->data.size()};
}

Eigen::Map<Eigen::VectorXd> Tensor::values_mut() {
  return {impl_->data.data(), impl_->data.size()};
}

Eigen::Map<const RowMatrix> Tensor::matrix() const {
  return as_matrix(impl_->data, rows(), cols());
}

double Tensor::item() const {
  if (numel() != 1) {
    throw DimensionError("item() on tensor of shape " + to_string(shape()));
  }
  return impl_->data[0];
}

double Tensor::at(std::size_t flat_index) const {
  return impl_->data[static_cast<Eigen::Index>(flat_index)];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool flag) {
  impl_->requires_grad = flag;
  return *this;
}

bool Tensor::has_grad() const { return impl_->grad.size() != 0; }

Eigen::VectorXd Tensor::grad() const {
  if (impl_->grad.size() == 0) return Eigen::VectorXd::Zero(impl_->data.size());
  return impl_->grad;
}

void Tensor::zero_grad() { impl_->grad.resize(0); }

Tensor Tensor::detach() const { return clone(false); }

Tensor Tensor::clone(bool requires_grad) const {
  return Tensor(new_impl(impl_->shape, impl_->data, requires_grad));
}

void Tensor::backward() const {
  if (numel() != 1) {
    throw DimensionError("backward() requires a single-element tensor, got " +
                         to_string(shape()));
  }
  impl_->accumulate(Eigen::VectorXd::Ones(1));
  for (TensorImpl* result : Tape::collect(*this)) {
    if (result->grad.size() == 0) continue;
    result->node->backward(result->grad);
  }
}

// Tape ------------------------------------------------------------------------

std::uint64_t Tape::next_sequence() { return ++tape_state().sequence; }

bool Tape::grad_enabled() { return tape_state().grad_enabled; }

std::vector<detail::TensorImpl*> Tape::collect(const Tensor& root) {
  std::vector<TensorImpl*> order;
  std::unordered_set<TensorImpl*> seen;
  std::vector<TensorImpl*> stack{root.impl().get()};
  while (!stack.empty()) {
    TensorImpl* t = stack.back();
    stack.pop_back();
    if (!t->node || !seen.insert(t).second) continue;
    order.push_back(t);
    for (const auto& in : t->node->inputs) stack.push_back(in.get());
  }
  // Creation order is a topological order of the graph.
  std::sort(order.begin(), order.end(), [](TensorImpl* a, TensorImpl* b) {
    return a->node->sequence > b->node->sequence;
  });
  return order;
}

void Tape::set_backward_override(std::string op_name, BackwardOverride fn) {
  auto& state = tape_state();
  state.override_name = std::move(op_name);
  state.override_fn = std::move(fn);
}

void Tape::clear_backward_override() {
  auto& state = tape_state();
  state.override_name.clear();
  state.override_fn = nullptr;
}

NoGradGuard::NoGradGuard() : previous_(tape_state().grad_enabled) {
  tape_state().grad_enabled = false;
}

NoGradGuard::~NoGradGuard() { tape_state().grad_enabled = previous_; }

// Arithmetic ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions differ " +
                         to_string(a.shape()) + " x " + to_string(b.shape()));
  }
  RowMatrix out = a.matrix() * b.matrix();
  Shape shape{a.rows(), b.cols()};
  return record("matmul", shape, flatten(out), {&a, &b},
                [m = a.rows(), k = a.cols(), n = b.cols()](auto& in) {
                  return [in, m, k, n](const Eigen::VectorXd& g) {
                    auto G = as_matrix(g, m, n);
                    auto A = as_matrix(in[0]->data, m, k);
                    auto B = as_matrix(in[1]->data, k, n);
                    if (in[0]->requires_grad) {
                      RowMatrix ga = G * B.transpose();
                      push(in[0], flatten(ga));
                    }
                    if (in[1]->requires_grad) {
                      RowMatrix gb = A.transpose() * G;
                      push(in[1], flatten(gb));
                    }
                  };
                });
}

Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op) {
  switch (op) {
    case ElementwiseOp::Add:
      return add(a, b);
    case ElementwiseOp::Sub:
      return sub(a, b);
    case ElementwiseOp::Mul:
      return mul(a, b);
  }
  throw ParameterError("unknown elementwise op");
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  return record("add", a.shape(), a.values() + b.values(), {&a, &b},
                [](auto& in) {
                  return [in](const Eigen::VectorXd& g) {
                    push(in[0], g);
                    push(in[1], g);
                  };
                });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  return record("sub", a.shape(), a.values() - b.values(), {&a, &b},
                [](auto& in) {
                  return [in](const Eigen::VectorXd& g) {
                    push(in[0], g);
                    if (in[1]->requires_grad) push(in[1], -g);
                  };
                });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Eigen::VectorXd out = a.values().cwiseProduct(b.values());
  return record("mul", a.shape(), std::move(out), {&a, &b}, [](auto& in) {
    return [in](const Eigen::VectorXd& g) {
      if (in[0]->requires_grad) push(in[0], g.cwiseProduct(in[1]->data));
      if (in[1]->requires_grad) push(in[1], g.cwiseProduct(in[0]->data));
    };
  });
}

Tensor scale(const Tensor& a, double factor) {
  return record("scale", a.shape(), a.values() * factor, {&a},
                [factor](auto& in) {
                  return [in, factor](const Eigen::VectorXd& g) {
                    push(in[0], g * factor);
                  };
                });
}

Tensor add_scalar(const Tensor& a, double offset) {
  Eigen::VectorXd out = a.values().array() + offset;
  return record("add_scalar", a.shape(), std::move(out), {&a}, [](auto& in) {
    return [in](const Eigen::VectorXd& g) { push(in[0], g); };
  });
}

Tensor activation(const Tensor& a, Activation kind) {
  return kind == Activation::Tanh ? tanh(a) : relu(a);
}

Tensor tanh(const Tensor& a) {
  Eigen::VectorXd out = a.values().array().tanh();
  return record("tanh", a.shape(), out, {&a}, [&out](auto& in) {
    return [in, y = out](const Eigen::VectorXd& g) {
      push(in[0], g.array() * (1.0 - y.array().square()));
    };
  });
}

Tensor relu(const Tensor& a) {
  Eigen::VectorXd out = a.values().cwiseMax(0.0);
  return record("relu", a.shape(), std::move(out), {&a}, [](auto& in) {
    return [in](const Eigen::VectorXd& g) {
      push(in[0], (in[0]->data.array() > 0.0).select(g, 0.0));
    };
  });
}

Tensor exp(const Tensor& a) {
  Eigen::VectorXd out = a.values().array().exp();
  return record("exp", a.shape(), out, {&a}, [&out](auto& in) {
    return [in, y = out](const Eigen::VectorXd& g) {
      push(in[0], g.cwiseProduct(y));
    };
  });
}

// Reductions ------------------------------------------------------------------

Tensor reduce(const Tensor& a, Reduction kind) {
  return kind == Reduction::Sum ? sum(a) : mean(a);
}

Tensor sum(const Tensor& a) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(1, a.values().sum());
  return record("sum", {1}, std::move(out), {&a}, [n = a.numel()](auto& in) {
    return [in, n](const Eigen::VectorXd& g) {
      push(in[0], Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), g[0]));
    };
  });
}

Tensor mean(const Tensor& a) {
  const double n = static_cast<double>(a.numel());
  Eigen::VectorXd out = Eigen::VectorXd::Constant(1, a.values().sum() / n);
  return record("mean", {1}, std::move(out), {&a}, [n](auto& in) {
    return [in, n](const Eigen::VectorXd& g) {
      push(in[0], Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                            g[0] / n));
    };
  });
}

Tensor sum(const Tensor& a, int axis) {
  require_2d(a, "sum(axis)");
  const std::size_t r = a.rows(), c = a.cols();
  if (axis == 0) {
    Eigen::VectorXd out = a.matrix().colwise().sum().transpose();
    return record("sum_axis0", {c}, std::move(out), {&a}, [r](auto& in) {
      return [in, r](const Eigen::VectorXd& g) {
        RowMatrix ga = g.transpose().replicate(static_cast<Eigen::Index>(r), 1);
        push(in[0], flatten(ga));
      };
    });
  }
  if (axis == 1) {
    Eigen::VectorXd out = a.matrix().rowwise().sum();
    return record("sum_axis1", {r}, std::move(out), {&a}, [c](auto& in) {
      return [in, c](const Eigen::VectorXd& g) {
        RowMatrix ga = g.replicate(1, static_cast<Eigen::Index>(c));
        push(in[0], flatten(ga));
      };
    });
  }
  throw DimensionError("sum: axis must be 0 or 1");
}

Tensor logsumexp(const Tensor& a, int axis) {
  if (a.dim() == 1 && axis == 0) {
    const double m = a.values().maxCoeff();
    const double out = m + std::log((a.values().array() - m).exp().sum());
    return record("logsumexp", {1}, Eigen::VectorXd::Constant(1, out), {&a},
                  [out](auto& in) {
                    return [in, out](const Eigen::VectorXd& g) {
                      push(in[0], (in[0]->data.array() - out).exp() * g[0]);
                    };
                  });
  }
  require_2d(a, "logsumexp");
  if (axis != 0 && axis != 1) {
    throw DimensionError("logsumexp: axis must be 0 or 1");
  }
  // Work on a view whose reduced axis runs along columns.
  RowMatrix x = axis == 1 ? RowMatrix(a.matrix()) : RowMatrix(a.matrix().transpose());
  Eigen::VectorXd m = x.rowwise().maxCoeff();
  Eigen::VectorXd out =
      m.array() + ((x.colwise() - m).array().exp().rowwise().sum()).log();
  Shape shape{static_cast<std::size_t>(out.size())};
  return record("logsumexp", shape, out, {&a},
                [&out, axis, r = a.rows(), c = a.cols()](auto& in) {
                  return [in, y = out, axis, r, c](const Eigen::VectorXd& g) {
                    auto X = as_matrix(in[0]->data, r, c);
                    RowMatrix ga(r, c);
                    if (axis == 1) {
                      ga = ((X.colwise() - y).array().exp()).colwise() *
                           g.array();
                    } else {
                      ga = ((X.rowwise() - y.transpose()).array().exp())
                               .rowwise() *
                           g.transpose().array();
                    }
                    push(in[0], flatten(ga));
                  };
                });
}

Tensor squared_norm(const Tensor& a) {
  Eigen::VectorXd out = Eigen::VectorXd::Constant(1, a.values().squaredNorm());
  return record("squared_norm", {1}, std::move(out), {&a}, [](auto& in) {
    return [in](const Eigen::VectorXd& g) {
      push(in[0], in[0]->data * (2.0 * g[0]));
    };
  });
}

// Shape manipulation ----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape new_shape) {
  check_shape(new_shape);
  if (product(new_shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(a.shape()) +
                         " as " + to_string(new_shape));
  }
  return record("reshape", std::move(new_shape), a.values(), {&a},
                [](auto& in) {
                  return [in](const Eigen::VectorXd& g) { push(in[0], g); };
                });
}

Tensor concat(std::initializer_list<Tensor> tensors, int axis) {
  return concat(std::span<const Tensor>(tensors.begin(), tensors.size()),
                axis);
}

Tensor concat(std::span<const Tensor> tensors, int axis) {
  if (tensors.empty()) throw DimensionError("concat of zero tensors");
  const std::size_t dim = tensors[0].dim();
  if (dim == 1) {
    if (axis != 0) throw DimensionError("concat: 1-D tensors need axis 0");
    std::size_t total = 0;
    for (const auto& t : tensors) {
      if (t.dim() != 1) throw DimensionError("concat: mixed ranks");
      total += t.numel();
    }
    Eigen::VectorXd out(static_cast<Eigen::Index>(total));
    std::vector<std::size_t> sizes;
    Eigen::Index off = 0;
    for (const auto& t : tensors) {
      out.segment(off, t.numel()) = t.values();
      off += static_cast<Eigen::Index>(t.numel());
      sizes.push_back(t.numel());
    }
    std::vector<const Tensor*> inputs;
    for (const auto& t : tensors) inputs.push_back(&t);
    return record("concat", {total}, std::move(out), inputs,
                  [&sizes](auto& in) {
                    return [in, sizes](const Eigen::VectorXd& g) {
                      Eigen::Index o = 0;
                      for (std::size_t i = 0; i < in.size(); ++i) {
                        const auto n = static_cast<Eigen::Index>(sizes[i]);
                        if (in[i]->requires_grad) push(in[i], g.segment(o, n));
                        o += n;
                      }
                    };
                  });
  }
  if (dim != 2) throw DimensionError("concat supports 1-D and 2-D tensors");
  if (axis != 0 && axis != 1) throw DimensionError("concat: axis must be 0 or 1");
  std::size_t rows = 0, cols = 0;
  for (const auto& t : tensors) {
    if (t.dim() != 2) throw DimensionError("concat: mixed ranks");
    if (axis == 0) {
      if (cols == 0) cols = t.cols();
      if (t.cols() != cols) throw DimensionError("concat: column mismatch");
      rows += t.rows();
    } else {
      if (rows == 0) rows = t.rows();
      if (t.rows() != rows) throw DimensionError("concat: row mismatch");
      cols += t.cols();
    }
  }
  RowMatrix out(rows, cols);
  std::vector<std::size_t> extents;
  Eigen::Index off = 0;
  for (const auto& t : tensors) {
    if (axis == 0) {
      out.middleRows(off, t.rows()) = t.matrix();
      off += static_cast<Eigen::Index>(t.rows());
      extents.push_back(t.rows());
    } else {
      out.middleCols(off, t.cols()) = t.matrix();
      off += static_cast<Eigen::Index>(t.cols());
      extents.push_back(t.cols());
    }
  }
  std::vector<const Tensor*> inputs;
  for (const auto& t : tensors) inputs.push_back(&t);
  return record(
      "concat", {rows, cols}, flatten(out), inputs,
      [&extents, axis, rows, cols](auto& in) {
        return [in, extents, axis, rows, cols](const Eigen::VectorXd& g) {
          auto G = as_matrix(g, rows, cols);
          Eigen::Index o = 0;
          for (std::size_t i = 0; i < in.size(); ++i) {
            const auto n = static_cast<Eigen::Index>(extents[i]);
            if (in[i]->requires_grad) {
              RowMatrix gi = axis == 0 ? RowMatrix(G.middleRows(o, n))
                                       : RowMatrix(G.middleCols(o, n));
              push(in[i], flatten(gi));
            }
            o += n;
          }
        };
      });
}

Tensor transpose(const Tensor& a) {
  require_2d(a, "transpose");
  RowMatrix out = a.matrix().transpose();
  return record("transpose", {a.cols(), a.rows()}, flatten(out), {&a},
                [r = a.rows(), c = a.cols()](auto& in) {
                  return [in, r, c](const Eigen::VectorXd& g) {
                    RowMatrix ga = as_matrix(g, c, r).transpose();
                    push(in[0], flatten(ga));
                  };
                });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_2d(a, "slice_cols");
  if (count == 0 || begin + count > a.cols()) {
    throw DimensionError("slice_cols: range out of bounds for " +
                         to_string(a.shape()));
  }
  RowMatrix out = a.matrix().middleCols(static_cast<Eigen::Index>(begin),
                                        static_cast<Eigen::Index>(count));
  return record("slice_cols", {a.rows(), count}, flatten(out), {&a},
                [r = a.rows(), c = a.cols(), begin, count](auto& in) {
                  return [in, r, c, begin, count](const Eigen::VectorXd& g) {
                    RowMatrix ga = RowMatrix::Zero(r, c);
                    ga.middleCols(static_cast<Eigen::Index>(begin),
                                  static_cast<Eigen::Index>(count)) =
                        as_matrix(g, r, count);
                    push(in[0], flatten(ga));
                  };
                });
}

Tensor expand_rows(const Tensor& a, std::size_t rows) {
  if (!(a.dim() == 1 || (a.dim() == 2 && a.rows() == 1))) {
    throw DimensionError("expand_rows expects [n] or [1 x n], got " +
                         to_string(a.shape()));
  }
  const std::size_t n = a.numel();
  RowMatrix out = a.values().transpose().replicate(
      static_cast<Eigen::Index>(rows), 1);
  return record("expand_rows", {rows, n}, flatten(out), {&a},
                [rows, n](auto& in) {
                  return [in, rows, n](const Eigen::VectorXd& g) {
                    Eigen::VectorXd ga =
                        as_matrix(g, rows, n).colwise().sum().transpose();
                    push(in[0], ga);
                  };
                });
}

Tensor expand_cols(const Tensor& a, std::size_t cols) {
  if (!(a.dim() == 1 || (a.dim() == 2 && a.cols() == 1))) {
    throw DimensionError("expand_cols expects [m] or [m x 1], got " +
                         to_string(a.shape()));
  }
  const std::size_t m = a.numel();
  RowMatrix out = a.values().replicate(1, static_cast<Eigen::Index>(cols));
  return record("expand_cols", {m, cols}, flatten(out), {&a},
                [m, cols](auto& in) {
                  return [in, m, cols](const Eigen::VectorXd& g) {
                    Eigen::VectorXd ga = as_matrix(g, m, cols).rowwise().sum();
                    push(in[0], ga);
                  };
                });
}

Tensor tile_cols(const Tensor& a, std::size_t reps) {
  require_2d(a, "tile_cols");
  if (reps == 0) throw DimensionError("tile_cols: reps must be positive");
  const std::size_t r = a.rows(), k = a.cols();
  RowMatrix out = a.matrix().replicate(1, static_cast<Eigen::Index>(reps));
  return record("tile_cols", {r, k * reps}, flatten(out), {&a},
                [r, k, reps](auto& in) {
                  return [in, r, k, reps](const Eigen::VectorXd& g) {
                    auto G = as_matrix(g, r, k * reps);
                    RowMatrix ga = RowMatrix::Zero(r, k);
                    for (std::size_t i = 0; i < reps; ++i) {
                      ga += G.middleCols(static_cast<Eigen::Index>(i * k),
                                         static_cast<Eigen::Index>(k));
                    }
                    push(in[0], flatten(ga));
                  };
                });
}

Tensor index_select(const Tensor& a, std::span<const std::size_t> indices) {
  if (a.dim() != 1) {
    throw DimensionError("index_select expects a 1-D tensor, got " +
                         to_string(a.shape()));
  }
  if (indices.empty()) throw DimensionError("index_select: empty index set");
  Eigen::VectorXd out(static_cast<Eigen::Index>(indices.size()));
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= a.numel()) {
      throw DimensionError("index_select: index out of range");
    }
    out[static_cast<Eigen::Index>(i)] = a.at(indices[i]);
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return record("index_select", {idx.size()}, std::move(out), {&a},
                [&idx, n = a.numel()](auto& in) {
                  return [in, idx, n](const Eigen::VectorXd& g) {
                    Eigen::VectorXd ga =
                        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
                    for (std::size_t i = 0; i < idx.size(); ++i) {
                      ga[static_cast<Eigen::Index>(idx[i])] +=
                          g[static_cast<Eigen::Index>(i)];
                    }
                    push(in[0], ga);
                  };
                });
}

// Gradient checking -----------------------------------------------------------

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<Tensor> params, double epsilon,
                           double tolerance, double floor) {
  if (!(epsilon >= 1e-6 && epsilon <= 1e-3)) {
    throw ParameterError("grad_check: epsilon must lie in [1e-6, 1e-3]");
  }
  for (auto& p : params) p.zero_grad();
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw EvaluationError("grad_check: loss is not finite");
  }
  loss.backward();

  GradCheckReport report;
  report.tolerance = tolerance;
  NoGradGuard no_grad;
  auto evaluate = [&] {
    const double v = loss_fn().item();
    if (!std::isfinite(v)) {
      throw EvaluationError("grad_check: perturbed loss is not finite");
    }
    return v;
  };
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = params[pi];
    const Eigen::VectorXd analytic = p.grad();
    auto values = p.values_mut();
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + epsilon;
      const double plus = evaluate();
      values[i] = original - epsilon;
      const double minus = evaluate();
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * epsilon);
      const double abs_err = std::abs(analytic[i] - numeric);
      const double rel_err =
          abs_err /
          std::max({std::abs(analytic[i]), std::abs(numeric), floor});
      ++report.checked;
      report.max_absolute_error = std::max(report.max_absolute_error, abs_err);
      if (rel_err > report.max_relative_error) {
        report.max_relative_error = rel_err;
        report.worst_param = pi;
        report.worst_index = static_cast<std::size_t>(i);
      }
    }
  }
  report.passed = report.max_relative_error < tolerance;
  return report;
}

}  // namespace spread
