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
#include "spread/gmm.hpp"
#include "test_util.hpp"

using namespace spread;
using spread::testing::random_tensor;

namespace {

// Direct density: sum_c w_c prod_j N(a_j; mu_cj, sigma_cj), no logsumexp.
double naive_density(const Eigen::VectorXd& logits, const Eigen::MatrixXd& means,
                     const Eigen::MatrixXd& log_scales, const Eigen::VectorXd& a) {
  Eigen::VectorXd w = logits.array().exp();
  w /= w.sum();
  double total = 0.0;
  for (Eigen::Index c = 0; c < means.rows(); ++c) {
    double dens = 1.0;
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
      const double s = std::exp(log_scales(c, j));
      const double z = (a[j] - means(c, j)) / s;
      dens *= std::exp(-0.5 * z * z) / (s * std::sqrt(2 * std::numbers::pi));
    }
    total += w[c] * dens;
  }
  return total;
}

GmmParams make_single(const Eigen::VectorXd& logits, const Eigen::MatrixXd& means,
                      const Eigen::MatrixXd& log_scales, bool grad = false) {
  return GmmParams::single(Tensor::from_vector(logits, grad),
                           Tensor::from_matrix(means, grad),
                           Tensor::from_matrix(log_scales, grad));
}

}  // namespace

TEST_CASE("standard normal at its mode") {
  auto p = make_single(Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Zero(1, 2),
                       Eigen::MatrixXd::Zero(1, 2));
  Tensor lp = log_prob(p, Tensor::zeros({1, 2}));
  CHECK(lp.item() == doctest::Approx(-std::log(2 * std::numbers::pi)).epsilon(1e-14));
  CHECK(lp.item() == doctest::Approx(-1.8379).epsilon(1e-4));
}

TEST_CASE("identical components collapse to a single component") {
  std::mt19937_64 rng(21);
  Eigen::MatrixXd mu = spread::testing::random_matrix(1, 2, rng);
  Eigen::MatrixXd ls = 0.3 * spread::testing::random_matrix(1, 2, rng);
  auto one = make_single(Eigen::VectorXd::Zero(1), mu, ls);
  Eigen::MatrixXd mu2(2, 2), ls2(2, 2);
  mu2 << mu, mu;
  ls2 << ls, ls;
  auto two = make_single(Eigen::Vector2d(0.7, -1.9), mu2, ls2);
  Tensor a = random_tensor({6, 2}, rng, false);
  CHECK((log_prob(one, a).values() - log_prob(two, a).values()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("log_prob matches the naive density oracle") {
  std::mt19937_64 rng(22);
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd logits = spread::testing::random_matrix(3, 1, rng);
    Eigen::MatrixXd mu = spread::testing::random_matrix(3, 2, rng);
    Eigen::MatrixXd ls = 0.4 * spread::testing::random_matrix(3, 2, rng);
    auto p = make_single(logits, mu, ls);
    Eigen::MatrixXd a = spread::testing::random_matrix(5, 2, rng);
    Tensor lp = log_prob(p, Tensor::from_matrix(a));
    for (int i = 0; i < 5; ++i) {
      const double expected = std::log(naive_density(logits, mu, ls, a.row(i).transpose()));
      CHECK(std::abs(lp.at(i) - expected) < 1e-10);
    }
  }
}

TEST_CASE("log_prob rejects mismatched and non-finite inputs") {
  auto p = make_single(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2),
                       Eigen::MatrixXd::Zero(2, 2));
  CHECK_THROWS_AS(log_prob(p, Tensor::zeros({3, 3})), DimensionError);
  auto bad = p.detached();
  bad.means.values_mut()[0] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(log_prob(bad, Tensor::zeros({1, 2})), EvaluationError);
}

TEST_CASE("density integrates to one") {
  std::mt19937_64 rng(23);
  auto p = make_single(Eigen::Vector3d(0.2, -0.5, 1.0),
                       (Eigen::MatrixXd(3, 2) << -1, 0.5, 0.8, -0.3, 0.1, 1.2).finished(),
                       (Eigen::MatrixXd(3, 2) << -0.5, -0.2, -0.8, 0.1, -0.3, -0.6).finished());
  const double half = 6.0;
  const std::size_t n = 200000;
  Tensor pts = random_tensor({n, 2}, rng, false, -half, half);
  NoGradGuard guard;
  const double integral =
      log_prob(p, pts).values().array().exp().mean() * (2 * half) * (2 * half);
  CHECK(std::abs(integral - 1.0) < 0.02);
}

TEST_CASE("log_prob is invariant under component permutation") {
  std::mt19937_64 rng(24);
  Eigen::VectorXd logits = spread::testing::random_matrix(4, 1, rng);
  Eigen::MatrixXd mu = spread::testing::random_matrix(4, 2, rng);
  Eigen::MatrixXd ls = 0.3 * spread::testing::random_matrix(4, 2, rng);
  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  auto p = make_single(logits, mu, ls);
  auto q = make_single(perm * logits, perm * mu, perm * ls);
  Tensor a = random_tensor({8, 2}, rng, false, -2, 2);
  CHECK((log_prob(p, a).values() - log_prob(q, a).values()).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("gradient of mean log_prob passes grad_check") {
  std::mt19937_64 rng(25);
  Tensor logits = random_tensor({3}, rng);
  Tensor mu = random_tensor({3, 2}, rng);
  Tensor ls = random_tensor({3, 2}, rng, true, -0.5, 0.5);
  Tensor a = random_tensor({6, 2}, rng);
  std::vector<Tensor> params{logits, mu, ls, a};
  auto report = grad_check(
      [&] { return mean(log_prob(GmmParams::single(logits, mu, ls), a)); }, params);
  CHECK(report.passed);
}

TEST_CASE("MLP feeding a conditioned GMM head passes grad_check") {
  std::mt19937_64 rng(26);
  const std::size_t b = 5, in = 4, hidden = 6, c = 3, d = 2;
  Tensor x = random_tensor({b, in}, rng, false);
  Tensor actions = random_tensor({b, d}, rng, false);
  Tensor w1 = random_tensor({in, hidden}, rng);
  Tensor b1 = random_tensor({hidden}, rng);
  Tensor w2 = random_tensor({hidden, c + 2 * c * d}, rng);
  Tensor b2 = random_tensor({c + 2 * c * d}, rng);
  auto nll = [&] {
    Tensor h = tanh(add(matmul(x, w1), expand_rows(b1, b)));
    Tensor out = add(matmul(h, w2), expand_rows(b2, b));
    GmmParams p;
    p.components = c;
    p.action_dim = d;
    p.logits = slice_cols(out, 0, c);
    p.means = slice_cols(out, c, c * d);
    p.log_scales = scale(tanh(slice_cols(out, c + c * d, c * d)), 0.5);
    return scale(mean(log_prob(p, actions)), -1.0);
  };
  std::vector<Tensor> params{w1, b1, w2, b2};
  auto report = grad_check(nll, params, 1e-6, 1e-4);
  CHECK(report.passed);
  CHECK(report.max_relative_error < 1e-4);
}

TEST_CASE("sampling a near-deterministic component returns its mean") {
  Rng rng(27);
  auto p = make_single(Eigen::VectorXd::Zero(1), Eigen::RowVector2d(0.3, -0.7),
                       Eigen::MatrixXd::Constant(1, 2, -20.0));
  auto batch = sample(p, 4, rng);
  for (int i = 0; i < 4; ++i) {
    CHECK(std::abs(batch.actions.matrix()(i, 0) - 0.3) < 1e-6);
    CHECK(std::abs(batch.actions.matrix()(i, 1) + 0.7) < 1e-6);
  }
  CHECK(batch.log_probs_teacher.values().allFinite());
}

TEST_CASE("sampling is reproducible from the seed") {
  auto p = make_single(Eigen::Vector2d(0.1, 0.4), Eigen::MatrixXd::Identity(2, 2),
                       Eigen::MatrixXd::Zero(2, 2));
  Rng r1(28), r2(28);
  auto a = sample(p, 32, r1), b = sample(p, 32, r2);
  CHECK(a.actions.values() == b.actions.values());
  CHECK(a.log_probs_teacher.values() == b.log_probs_teacher.values());
}

TEST_CASE("component frequencies follow the mixture weights") {
  // Well separated components: the sign of the first coordinate identifies
  // the component that generated a draw.
  auto p = make_single(Eigen::Vector2d(std::log(0.9), std::log(0.1)),
                       (Eigen::MatrixXd(2, 1) << -10.0, 10.0).finished(),
                       Eigen::MatrixXd::Zero(2, 1));
  Rng rng(29);
  const std::size_t n = 10000;
  auto batch = sample(p, n, rng);
  const double first = (batch.actions.values().array() < 0).cast<double>().sum();
  const double sd = std::sqrt(n * 0.9 * 0.1);
  CHECK(std::abs(first - 0.9 * n) < 3 * sd);
}

TEST_CASE("per-row sampling draws one action per condition") {
  GmmParams p;
  p.components = 1;
  p.action_dim = 1;
  p.logits = Tensor::zeros({3, 1});
  p.means = Tensor::from({3, 1}, {-5.0, 0.0, 5.0});
  p.log_scales = Tensor::full({3, 1}, -20.0);
  Rng rng(30);
  auto batch = sample(p, 3, rng);
  CHECK(batch.actions.at(0) == doctest::Approx(-5.0));
  CHECK(batch.actions.at(2) == doctest::Approx(5.0));
  CHECK_THROWS_AS(sample(p, 4, rng), DimensionError);
}

TEST_CASE("top-M selection") {
  CHECK(top_m_count(10, 0.9) == 9);
  CHECK(top_m_count(100, 0.9) == 90);
  CHECK(top_m_count(1000, 0.9) == 900);
  CHECK(top_m_count(1, 0.9) == 1);
  CHECK_THROWS_AS(top_m_count(10, 0.0), ParameterError);
  CHECK_THROWS_AS(top_m_count(10, 1.5), ParameterError);

  ActionBatch batch{Tensor::zeros({3, 1}), Tensor::from({3}, {3.0, 1.0, 2.0})};
  CHECK(top_m_select(batch, 2.0 / 3.0) == std::vector<std::size_t>{0, 2});
  ActionBatch ties{Tensor::zeros({4, 1}), Tensor::from({4}, {1.0, 2.0, 1.0, 1.0})};
  CHECK(top_m_select(ties, 0.5) == std::vector<std::size_t>{0, 1});
}
