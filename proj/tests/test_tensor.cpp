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
#include <cstring>
#include <random>

#include "doctest.h"
#include "spread/tensor.hpp"
#include "test_util.hpp"

using namespace spread;
using spread::testing::random_tensor;

namespace {

// Central differences of a scalar function of one tensor, independent of
// the tape.
Eigen::VectorXd finite_difference(const std::function<double()>& f, Tensor& x,
                                  double h = 1e-6) {
  Eigen::VectorXd g(x.numel());
  auto v = x.values_mut();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double orig = v[i];
    v[i] = orig + h;
    const double plus = f();
    v[i] = orig - h;
    const double minus = f();
    v[i] = orig;
    g[i] = (plus - minus) / (2 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  std::mt19937_64 rng(1);
  Tensor a = random_tensor({3, 3}, rng, false);
  Tensor eye = Tensor::from_matrix(Eigen::MatrixXd::Identity(3, 3));
  CHECK(matmul(eye, a).values().isApprox(a.values(), 0.0));
  Tensor zero = Tensor::zeros({3, 2});
  CHECK(matmul(a, zero).values().isZero(0.0));
  CHECK_THROWS_AS(matmul(a, Tensor::zeros({2, 2})), DimensionError);
}

TEST_CASE("matmul backward matches central differences") {
  std::mt19937_64 rng(2);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);
  sum(matmul(a, b)).backward();
  NoGradGuard guard;
  auto f = [&] { return sum(matmul(a, b)).item(); };
  Eigen::VectorXd fa = finite_difference(f, a);
  Eigen::VectorXd fb = finite_difference(f, b);
  for (Eigen::Index i = 0; i < fa.size(); ++i) {
    CHECK(std::abs(a.grad()[i] - fa[i]) <= 1e-6 * std::max(1.0, std::abs(fa[i])));
  }
  for (Eigen::Index i = 0; i < fb.size(); ++i) {
    CHECK(std::abs(b.grad()[i] - fb[i]) <= 1e-6 * std::max(1.0, std::abs(fb[i])));
  }
}

TEST_CASE("logsumexp and tanh elementary values") {
  CHECK(logsumexp(Tensor::from({2}, {0.0, 0.0}), 0).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-15));
  Tensor x = Tensor::scalar(0.0, true);
  Tensor y = tanh(x);
  CHECK(y.item() == 0.0);
  y.backward();
  CHECK(x.grad()[0] == 1.0);
}

TEST_CASE("logsumexp agrees with the naive formula and does not overflow") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor v = random_tensor({5}, rng, false, -5.0, 5.0);
    double naive = 0.0;
    for (int i = 0; i < 5; ++i) naive += std::exp(v.at(i));
    CHECK(std::abs(logsumexp(v, 0).item() - std::log(naive)) < 1e-12);
  }
  Tensor big = Tensor::from({3}, {1e4, 1e4 - 1.0, -1e4});
  const double expected = 1e4 + std::log(1.0 + std::exp(-1.0));
  CHECK(logsumexp(big, 0).item() == doctest::Approx(expected).epsilon(1e-14));

  Tensor m = Tensor::from({2, 2}, {1e4, 1e4, 0.0, 1.0});
  Tensor rows = logsumexp(m, 1);
  CHECK(rows.at(0) == doctest::Approx(1e4 + std::log(2.0)));
  Tensor cols = logsumexp(m, 0);
  CHECK(cols.shape() == Shape{2});
  CHECK(cols.at(1) == doctest::Approx(1e4));
}

TEST_CASE("grad_check on a quadratic is exact up to rounding") {
  std::mt19937_64 rng(4);
  Tensor x = random_tensor({8}, rng);
  std::vector<Tensor> params{x};
  auto report = grad_check([&] { return squared_norm(x); }, params, 1e-4, 1e-8);
  CHECK(report.passed);
  CHECK(report.max_relative_error < 1e-8);
  CHECK(x.grad().isApprox(2.0 * x.values(), 1e-14));
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  std::mt19937_64 rng(5);
  Tensor x = random_tensor({4, 3}, rng);
  std::vector<Tensor> params{x};
  Tape::set_backward_override(
      "tanh", [](const Eigen::VectorXd& g, const Tape::BackwardRule& rule) {
        rule(1.5 * g);
      });
  auto report = grad_check([&] { return sum(tanh(x)); }, params);
  Tape::clear_backward_override();
  CHECK_FALSE(report.passed);
  CHECK(report.max_relative_error > 1e-2);

  auto healthy = grad_check([&] { return sum(tanh(x)); }, params);
  CHECK(healthy.passed);
}

TEST_CASE("grad_check rejects bad epsilon and non-finite losses") {
  Tensor x = Tensor::from({1}, {1.0}, true);
  std::vector<Tensor> params{x};
  CHECK_THROWS_AS(grad_check([&] { return sum(x); }, params, 1e-2),
                  ParameterError);
  CHECK_THROWS_AS(grad_check([&] { return exp(scale(x, 1e4)); }, params),
                  EvaluationError);
}

TEST_CASE("every differentiable op passes grad_check on small random shapes") {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 8);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    Tensor a = random_tensor({m, k}, rng);
    Tensor b = random_tensor({k, n}, rng);
    Tensor c = random_tensor({m, k}, rng);
    Tensor v = random_tensor({k}, rng);
    Tensor w = random_tensor({m}, rng);
    // relu is checked away from its kink.
    Tensor r = random_tensor({m, k}, rng, true, 0.1, 1.0);
    std::vector<Tensor> params{a, b, c, v, w};
    std::vector<size_t> idx{0, k - 1, 0};
    struct Case {
      const char* name;
      std::function<Tensor()> fn;
    };
    std::vector<Case> cases{
        {"matmul", [&] { return sum(tanh(matmul(a, b))); }},
        {"add/sub/mul", [&] { return sum(mul(add(a, c), sub(a, c))); }},
        {"scale/add_scalar", [&] { return sum(mul(scale(a, 1.7), add_scalar(c, 0.3))); }},
        {"exp", [&] { return mean(exp(a)); }},
        {"relu", [&] {
           Tensor neg = scale(r, -1.0);
           return sum(add(mul(relu(r), c), relu(neg)));
         }},
        {"sum axis", [&] { return squared_norm(add(sum(a, 0), v)); }},
        {"sum axis 1", [&] { return squared_norm(mul(sum(c, 1), w)); }},
        {"logsumexp", [&] {
           return add(sum(mul(logsumexp(a, 1), w)), sum(mul(logsumexp(c, 0), v)));
         }},
        {"logsumexp 1-D", [&] { return logsumexp(mul(v, v), 0); }},
        {"reshape/transpose", [&] {
           return sum(mul(reshape(transpose(a), {m * k}), reshape(c, {m * k})));
         }},
        {"concat", [&] {
           Tensor cat0 = concat({a, c}, 0);
           Tensor cat1 = concat({a, c}, 1);
           Tensor flat = concat({v, w}, 0);
           return add(add(squared_norm(tanh(cat0)), squared_norm(cat1)),
                      squared_norm(mul(flat, flat)));
         }},
        {"slice/expand/tile", [&] {
           Tensor s = slice_cols(a, 0, std::max<std::size_t>(1, k / 2));
           Tensor e = add(expand_rows(v, m), expand_cols(w, k));
           Tensor t = tile_cols(s, 3);
           return add(squared_norm(mul(e, c)), squared_norm(tanh(t)));
         }},
        {"index_select", [&] { return squared_norm(index_select(mul(v, v), idx)); }},
    };
    for (auto& cs : cases) {
      std::vector<Tensor> ps = params;
      ps.push_back(r);
      auto report = grad_check(cs.fn, ps, 1e-6, 1e-4);
      INFO(cs.name, " m=", m, " k=", k, " n=", n);
      CHECK(report.passed);
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(7);
  Tensor x = random_tensor({4, 3}, rng);
  Tensor w = random_tensor({3, 2}, rng, false);
  auto l1 = [&] { return sum(tanh(matmul(x, w))); };
  auto l2 = [&] { return squared_norm(x); };
  l1().backward();
  Eigen::VectorXd g1 = x.grad();
  x.zero_grad();
  l2().backward();
  Eigen::VectorXd g2 = x.grad();
  x.zero_grad();
  const double alpha = 0.7, beta = -2.3;
  add(scale(l1(), alpha), scale(l2(), beta)).backward();
  CHECK((x.grad() - (alpha * g1 + beta * g2)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("identical inputs give bitwise identical values and gradients") {
  auto run = [] {
    std::mt19937_64 rng(8);
    Tensor x = random_tensor({5, 4}, rng);
    Tensor w = random_tensor({4, 3}, rng);
    Tensor y = mean(logsumexp(tanh(matmul(x, w)), 1));
    y.backward();
    Eigen::VectorXd out(1 + x.numel() + w.numel());
    out << y.item(), x.grad(), w.grad();
    return out;
  };
  Eigen::VectorXd a = run(), b = run();
  CHECK(std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0);
}

TEST_CASE("tape replays in reverse creation order") {
  Tensor x = Tensor::from({2}, {0.3, -0.2}, true);
  Tensor y = tanh(x);
  Tensor z = mul(y, x);
  Tensor l = sum(z);
  auto order = Tape::collect(l);
  REQUIRE(order.size() == 3);
  CHECK(order[0] == l.impl().get());
  CHECK(order[1] == z.impl().get());
  CHECK(order[2] == y.impl().get());
}

TEST_CASE("shape validation") {
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(add(Tensor::zeros({2}), Tensor::zeros({3})), DimensionError);
  CHECK_THROWS_AS(reshape(Tensor::zeros({2, 3}), {4}), DimensionError);
  CHECK_THROWS_AS(exp(Tensor::scalar(1e6)), EvaluationError);
}
