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

#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "spread/svd.hpp"
#include "test_util.hpp"

using namespace spread;
using spread::testing::random_matrix;
using spread::testing::random_orthogonal;

namespace {

// Independent oracle: singular values from the symmetric eigensolver of f f^T.
Eigen::VectorXd oracle_singular_values(const Eigen::MatrixXd& f) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(f * f.transpose());
  Eigen::VectorXd ev = eig.eigenvalues().reverse();
  return ev.cwiseMax(0.0).cwiseSqrt();
}

}  // namespace

TEST_CASE("diagonal matrix") {
  Eigen::MatrixXd f = Eigen::Vector3d(3, 2, 1).asDiagonal();
  auto basis = svd_top_r(f, 2);
  CHECK(basis.singular_values[0] == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(basis.singular_values[1] == doctest::Approx(2.0).epsilon(1e-15));
  Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
  expected(0, 0) = expected(1, 1) = 1.0;
  CHECK((basis.projector() - expected).norm() < 1e-14);
  // Sign convention: the largest-magnitude entry of each column is positive.
  CHECK(basis.u(0, 0) == doctest::Approx(1.0));
  CHECK(basis.u(1, 1) == doctest::Approx(1.0));
}

TEST_CASE("rank-one matrix is reproduced by its own projection") {
  std::mt19937_64 rng(11);
  Eigen::VectorXd u = random_matrix(5, 1, rng);
  Eigen::VectorXd v = random_matrix(7, 1, rng);
  Eigen::MatrixXd f = u * v.transpose();
  auto basis = svd_top_r(f, 1);
  CHECK((project(basis, f) - f).norm() < 1e-12 * f.norm());
}

TEST_CASE("singular values match the eigensolver oracle") {
  std::mt19937_64 rng(12);
  Eigen::MatrixXd f = random_matrix(6, 10, rng);
  auto basis = svd_top_r(f, 3);
  Eigen::VectorXd oracle = oracle_singular_values(f);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::abs(basis.singular_values[i] - oracle[i]) <= 1e-8 * oracle[i]);
  }
  const double tail = oracle.tail(3).squaredNorm();
  const double residual = (f - project(basis, f)).squaredNorm();
  CHECK(std::abs(residual - tail) <= 1e-8 * tail);
  CHECK((basis.u.transpose() * basis.u - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-8);
}

TEST_CASE("tall, wide and square shapes") {
  std::mt19937_64 rng(13);
  for (auto [d, n] : {std::pair{12, 5}, std::pair{5, 12}, std::pair{8, 8},
                      std::pair{1, 4}, std::pair{4, 1}}) {
    Eigen::MatrixXd f = random_matrix(d, n, rng);
    const Eigen::Index r = std::min(d, n);
    auto basis = svd_top_r(f, r);
    Eigen::VectorXd oracle = oracle_singular_values(f);
    for (Eigen::Index i = 0; i < r; ++i) {
      CHECK(std::abs(basis.singular_values[i] - oracle[i]) <= 1e-8 * oracle[i]);
    }
    for (Eigen::Index i = 1; i < r; ++i) {
      CHECK(basis.singular_values[i] <= basis.singular_values[i - 1]);
    }
    CHECK((basis.u.transpose() * basis.u -
           Eigen::MatrixXd::Identity(r, r)).norm() < 1e-8);
  }
}

TEST_CASE("parameter and convergence errors") {
  std::mt19937_64 rng(14);
  Eigen::MatrixXd f = random_matrix(4, 6, rng);
  CHECK_THROWS_AS(svd_top_r(f, 0), ParameterError);
  CHECK_THROWS_AS(svd_top_r(f, 5), ParameterError);
  JacobiOptions one_sweep{.max_sweeps = 1, .tolerance = 1e-12};
  CHECK_THROWS_AS(svd_top_r(f, 2, one_sweep), NumericalError);
  f(0, 0) = std::nan("");
  CHECK_THROWS_AS(svd_top_r(f, 2), NumericalError);
}

TEST_CASE("project is idempotent, contracting and kills the complement") {
  std::mt19937_64 rng(15);
  Eigen::MatrixXd f = random_matrix(6, 9, rng);
  auto basis = svd_top_r(f, 3);
  Eigen::MatrixXd x = random_matrix(6, 4, rng);
  Eigen::MatrixXd px = project(basis, x);
  CHECK((project(basis, px) - px).norm() < 1e-10);
  CHECK(px.norm() <= x.norm());
  Eigen::MatrixXd inside = basis.u * random_matrix(3, 4, rng);
  CHECK((project(basis, inside) - inside).norm() < 1e-10);
  Eigen::MatrixXd complement =
      (Eigen::MatrixXd::Identity(6, 6) - basis.projector()) * x;
  CHECK(project(basis, complement).norm() < 1e-10);
  CHECK_THROWS_AS(project(basis, random_matrix(5, 2, rng)), DimensionError);
}

TEST_CASE("principal angles") {
  std::mt19937_64 rng(16);
  Eigen::MatrixXd f = random_matrix(6, 9, rng);
  auto a = svd_top_r(f, 3);
  CHECK(principal_angles(a, a).cwiseAbs().maxCoeff() < 1e-7);

  Eigen::MatrixXd e1 = Eigen::Vector2d(1, 0), e2 = Eigen::Vector2d(0, 1);
  auto angle = principal_angles(svd_top_r(e1, 1), svd_top_r(e2, 1));
  CHECK(angle[0] == doctest::Approx(std::numbers::pi / 2));

  auto b = svd_top_r(random_matrix(6, 9, rng), 3);
  Eigen::VectorXd angles = principal_angles(a, b);
  Eigen::JacobiSVD<Eigen::MatrixXd> oracle(a.u.transpose() * b.u);
  for (int i = 0; i < 3; ++i) {
    const double expected = std::acos(std::clamp(oracle.singularValues()[i], 0.0, 1.0));
    CHECK(std::abs(angles[i] - expected) < 1e-8);
    if (i > 0) CHECK(angles[i] >= angles[i - 1]);
  }
  CHECK_THROWS_AS(principal_angles(a, svd_top_r(f, 2)), DimensionError);
}

TEST_CASE("best rank-r approximation beats random rank-r projectors") {
  std::mt19937_64 rng(17);
  Eigen::MatrixXd f = random_matrix(8, 12, rng);
  const Eigen::Index r = 3;
  auto basis = svd_top_r(f, r);
  const double best = (f - project(basis, f)).norm();
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd q = random_orthogonal(8, rng).leftCols(r);
    const double other = (f - q * (q.transpose() * f)).norm();
    CHECK(best <= other + 1e-8);
  }
}

TEST_CASE("projector is scale invariant and left-orthogonally equivariant") {
  std::mt19937_64 rng(18);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd f = random_matrix(7, 10, rng);
    auto base = svd_top_r(f, 4).projector();
    auto scaled = svd_top_r(f * 37.5, 4).projector();
    CHECK((base - scaled).norm() < 1e-8);
    Eigen::MatrixXd q = random_orthogonal(7, rng);
    auto rotated = svd_top_r(q * f, 4).projector();
    CHECK((rotated - q * base * q.transpose()).norm() < 1e-8);
  }
}

TEST_CASE("degenerate singular values are flagged") {
  Eigen::MatrixXd f = Eigen::Vector3d(2, 1, 1).asDiagonal();
  CHECK(svd_top_r(f, 2).degenerate);
  CHECK_FALSE(svd_top_r(f, 1).degenerate);
}

TEST_CASE("tensor adapters") {
  Tensor f = Tensor::from({2, 3}, {1, 0, 0, 0, 2, 0});
  auto basis = svd_top_r(f, 1);
  CHECK(basis.singular_values[0] == doctest::Approx(2.0));
  Tensor p = project(basis, f);
  CHECK(p.matrix()(1, 1) == doctest::Approx(2.0));
  CHECK(p.matrix()(0, 0) == doctest::Approx(0.0));
}
