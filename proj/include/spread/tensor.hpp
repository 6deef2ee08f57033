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

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spread/errors.hpp"

namespace spread {

using Shape = std::vector<std::size_t>;
using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::string to_string(const Shape& shape);

namespace detail {
struct TensorImpl;
}

// Dense row-major float64 array taking part in reverse-mode differentiation.
//
// A Tensor is a cheap handle; copies alias the same storage. Operations
// whose inputs require gradients record a node on the thread's tape, and
// backward() replays those nodes in reverse creation order.
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  /// Copies a (column-major) Eigen matrix into a 2-D tensor.
  static Tensor from_matrix(const Eigen::Ref<const Eigen::MatrixXd>& m,
                            bool requires_grad = false);
  static Tensor from_vector(const Eigen::Ref<const Eigen::VectorXd>& v,
                            bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t numel() const;
  /// Row count of a 2-D tensor; length of a 1-D tensor.
  std::size_t rows() const;
  /// Column count of a 2-D tensor; 1 for a 1-D tensor.
  std::size_t cols() const;

  Eigen::Map<const Eigen::VectorXd> values() const;
  Eigen::Map<Eigen::VectorXd> values_mut();
  /// Row-major view; 1-D tensors are viewed as a column.
  Eigen::Map<const RowMatrix> matrix() const;
  Eigen::MatrixXd to_matrix() const { return matrix(); }
  double item() const;
  double at(std::size_t flat_index) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool flag);
  bool has_grad() const;
  /// Accumulated gradient; zeros if none has been accumulated yet.
  Eigen::VectorXd grad() const;
  void zero_grad();

  /// New leaf holding a copy of the values, no gradient tracking.
  Tensor detach() const;
  /// Deep copy of the values into a new leaf with the given grad flag.
  Tensor clone(bool requires_grad) const;

  /// Seeds d(this)/d(this) = 1 and propagates to every reachable leaf.
  void backward() const;

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl);

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

namespace detail {

struct Node {
  std::uint64_t sequence = 0;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  // Receives the gradient of the node's output and accumulates into inputs.
  std::function<void(const Eigen::VectorXd&)> backward;
  std::string name;
};

struct TensorImpl {
  Shape shape;
  Eigen::VectorXd data;
  bool requires_grad = false;
  Eigen::VectorXd grad;  // empty until first accumulation
  std::shared_ptr<Node> node;

  void accumulate(const Eigen::Ref<const Eigen::VectorXd>& g);
};

}  // namespace detail

// Per-thread recording of differentiable operations.
class Tape {
 public:
  static std::uint64_t next_sequence();
  /// Recorded results reachable from root, ordered so that every result
  /// precedes the results it was computed from (reverse creation order).
  static std::vector<detail::TensorImpl*> collect(const Tensor& root);
  static bool grad_enabled();

  using BackwardRule = std::function<void(const Eigen::VectorXd&)>;
  using BackwardOverride =
      std::function<void(const Eigen::VectorXd&, const BackwardRule&)>;

  // Test hook: wraps the backward rule of every node named `op_name`
  // recorded afterwards on this thread.
  static void set_backward_override(std::string op_name, BackwardOverride fn);
  static void clear_backward_override();
};

/// Disables tape recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Arithmetic ------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);

enum class ElementwiseOp { Add, Sub, Mul };
Tensor elementwise(const Tensor& a, const Tensor& b, ElementwiseOp op);

enum class Activation { Tanh, Relu };
Tensor activation(const Tensor& a, Activation kind);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);

// Reductions ------------------------------------------------------------------

enum class Reduction { Sum, Mean };
/// Full reduction to a shape-{1} tensor.
Tensor reduce(const Tensor& a, Reduction kind);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Sum of a 2-D tensor along axis 0 (-> [cols]) or axis 1 (-> [rows]).
Tensor sum(const Tensor& a, int axis);
/// Numerically stable log(sum(exp(.))) along an axis. 1-D input with axis 0
/// yields shape {1}; 2-D input drops the reduced axis.
Tensor logsumexp(const Tensor& a, int axis);
Tensor squared_norm(const Tensor& a);

// Shape manipulation ----------------------------------------------------------

Tensor reshape(const Tensor& a, Shape new_shape);
Tensor concat(std::span<const Tensor> tensors, int axis);
Tensor concat(std::initializer_list<Tensor> tensors, int axis);
Tensor transpose(const Tensor& a);
/// Columns [begin, begin + count) of a 2-D tensor.
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Broadcasts a [n] or [1 x n] tensor to [rows x n].
Tensor expand_rows(const Tensor& a, std::size_t rows);
/// Broadcasts a [m] or [m x 1] tensor to [m x cols].
Tensor expand_cols(const Tensor& a, std::size_t cols);
/// Repeats a [m x k] tensor `reps` times along columns: [m x (k * reps)].
Tensor tile_cols(const Tensor& a, std::size_t reps);
/// Entries of a 1-D tensor at the given positions.
Tensor index_select(const Tensor& a, std::span<const std::size_t> indices);

// Gradient checking -----------------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  std::size_t worst_param = 0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double tolerance = 0.0;
  bool passed = false;
};

/// Compares backward() against central differences of loss_fn over every
/// entry of every parameter. The relative error of an entry is
/// |analytic - numeric| / max(|analytic|, |numeric|, floor), so gradients
/// smaller than `floor` are compared in absolute terms.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<Tensor> params, double epsilon = 1e-6,
                           double tolerance = 1e-4, double floor = 1e-3);

}  // namespace spread
