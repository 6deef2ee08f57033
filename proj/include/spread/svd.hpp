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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "spread/errors.hpp"
#include "spread/tensor.hpp"

namespace spread {

struct JacobiOptions {
  int max_sweeps = 60;
  /// Pairs whose cosine |a_p . a_q| / (|a_p| |a_q|) is at most this are
  /// treated as orthogonal.
  double tolerance = 1e-12;
};

/// Left singular vectors and singular values of a D x n matrix, sorted by
/// non-increasing singular value. All D columns are returned; columns past
/// min(D, n) span the left null space.
template <typename Scalar>
struct LeftSingularSystem {
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> vectors;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> values;
  int sweeps = 0;
  Scalar max_cosine = 0;
};

// One-sided (Hestenes) Jacobi on A = f^T. Right rotations orthogonalise
// the D columns of A; their product V is orthogonal and holds the left
// singular vectors of f, while the column norms of A V are the singular
// values. Every column of U is sign-normalised so that its largest-magnitude
// entry is positive.
template <typename Derived>
LeftSingularSystem<typename Derived::Scalar> left_singular_system(
    const Eigen::MatrixBase<Derived>& f, const JacobiOptions& options = {}) {
  using Scalar = typename Derived::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  if (!f.allFinite()) {
    throw NumericalError("svd: input matrix contains non-finite values");
  }
  const Eigen::Index d = f.rows();
  Matrix a = f.transpose();
  Matrix v = Matrix::Identity(d, d);
  Vector norms(d);

  const Scalar eps = std::numeric_limits<Scalar>::epsilon();
  const Scalar negligible = eps * eps * a.squaredNorm();
  const Scalar tol = static_cast<Scalar>(options.tolerance);

  LeftSingularSystem<Scalar> out;
  bool converged = d < 2;
  Scalar worst = 0;
  for (int sweep = 0; sweep < options.max_sweeps && !converged; ++sweep) {
    for (Eigen::Index i = 0; i < d; ++i) norms[i] = a.col(i).squaredNorm();
    bool rotated = false;
    worst = 0;
    for (Eigen::Index p = 0; p + 1 < d; ++p) {
      for (Eigen::Index q = p + 1; q < d; ++q) {
        const Scalar alpha = norms[p];
        const Scalar beta = norms[q];
        if (alpha <= negligible || beta <= negligible) continue;
        const Scalar gamma = a.col(p).dot(a.col(q));
        const Scalar cosine = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, cosine);
        if (cosine <= tol) continue;
        rotated = true;
        const Scalar zeta = (beta - alpha) / (2 * gamma);
        const Scalar t = (zeta >= 0 ? Scalar(1) : Scalar(-1)) /
                         (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const Scalar c = 1 / std::sqrt(1 + t * t);
        const Scalar s = c * t;
        for (Eigen::Index k = 0; k < a.rows(); ++k) {
          const Scalar x = a(k, p), y = a(k, q);
          a(k, p) = c * x - s * y;
          a(k, q) = s * x + c * y;
        }
        for (Eigen::Index k = 0; k < d; ++k) {
          const Scalar x = v(k, p), y = v(k, q);
          v(k, p) = c * x - s * y;
          v(k, q) = s * x + c * y;
        }
        norms[p] = alpha - t * gamma;
        norms[q] = beta + t * gamma;
      }
    }
    out.sweeps = sweep + 1;
    converged = !rotated;
  }
  if (!converged) {
    std::ostringstream msg;
    msg << "svd: one-sided Jacobi did not converge after " << out.sweeps
        << " sweeps (max pair cosine " << worst << ", tolerance "
        << options.tolerance << ", shape " << f.rows() << "x" << f.cols()
        << ")";
    throw NumericalError(msg.str());
  }
  out.max_cosine = worst;

  Vector sigma(d);
  for (Eigen::Index i = 0; i < d; ++i) sigma[i] = a.col(i).norm();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) {
    return sigma[x] > sigma[y];
  });
  out.vectors.resize(d, d);
  out.values.resize(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Eigen::Index src = order[static_cast<std::size_t>(j)];
    out.values[j] = sigma[src];
    out.vectors.col(j) = v.col(src);
    Eigen::Index pivot = 0;
    out.vectors.col(j).cwiseAbs().maxCoeff(&pivot);
    if (out.vectors(pivot, j) < 0) out.vectors.col(j) *= Scalar(-1);
  }
  return out;
}

/// Orthonormal basis of the dominant r-dimensional left subspace of a
/// D x n feature matrix.
template <typename Scalar>
struct SubspaceBasis {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix u;                 // D x r
  Vector singular_values;   // r, non-increasing
  Eigen::Index rank_requested = 0;
  std::pair<Eigen::Index, Eigen::Index> source_shape{0, 0};
  /// sigma_r and sigma_{r+1} coincide to within 1e-10 * sigma_1; the
  /// subspace is then not unique.
  bool degenerate = false;
  int sweeps = 0;

  Eigen::Index dim() const { return u.rows(); }
  Eigen::Index rank() const { return u.cols(); }
  Matrix projector() const { return u * u.transpose(); }
};

template <typename Derived>
SubspaceBasis<typename Derived::Scalar> svd_top_r(
    const Eigen::MatrixBase<Derived>& f, Eigen::Index r,
    const JacobiOptions& options = {}) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index limit = std::min(f.rows(), f.cols());
  if (r < 1 || r > limit) {
    std::ostringstream msg;
    msg << "svd_top_r: rank " << r << " outside [1, " << limit
        << "] for a " << f.rows() << "x" << f.cols() << " matrix";
    throw ParameterError(msg.str());
  }
  auto system = left_singular_system(f, options);
  SubspaceBasis<Scalar> basis;
  basis.u = system.vectors.leftCols(r);
  basis.singular_values = system.values.head(r);
  basis.rank_requested = r;
  basis.source_shape = {f.rows(), f.cols()};
  basis.sweeps = system.sweeps;
  if (r < f.rows()) {
    const Scalar gap = system.values[r - 1] - system.values[r];
    basis.degenerate =
        gap <= Scalar(1e-10) * std::max(system.values[0], Scalar(1e-300));
  }
  return basis;
}

/// U (U^T x): the component of x inside span(U).
template <typename Scalar, typename Derived>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> project(
    const SubspaceBasis<Scalar>& basis, const Eigen::MatrixBase<Derived>& x) {
  if (x.rows() != basis.dim()) {
    std::ostringstream msg;
    msg << "project: matrix has " << x.rows() << " rows, basis dimension is "
        << basis.dim();
    throw DimensionError(msg.str());
  }
  return basis.u * (basis.u.transpose() * x);
}

/// Canonical angles between span(U_a) and span(U_b), non-decreasing.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> principal_angles(
    const SubspaceBasis<Scalar>& a, const SubspaceBasis<Scalar>& b) {
  if (a.dim() != b.dim() || a.rank() != b.rank()) {
    std::ostringstream msg;
    msg << "principal_angles: bases " << a.dim() << "x" << a.rank() << " and "
        << b.dim() << "x" << b.rank() << " differ";
    throw DimensionError(msg.str());
  }
  const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> overlap =
      a.u.transpose() * b.u;
  auto cosines = left_singular_system(overlap).values;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> angles(cosines.size());
  for (Eigen::Index i = 0; i < cosines.size(); ++i) {
    angles[i] = std::acos(std::clamp(cosines[i], Scalar(0), Scalar(1)));
  }
  return angles;
}

// Tensor adapters. Bases are constants: no gradient flows through them.
SubspaceBasis<double> svd_top_r(const Tensor& f, std::size_t r,
                                const JacobiOptions& options = {});
Tensor project(const SubspaceBasis<double>& basis, const Tensor& x);

}  // namespace spread
