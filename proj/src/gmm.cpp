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

#include "spread/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace spread {

GmmParams GmmParams::single(const Tensor& logits, const Tensor& means,
                            const Tensor& log_scales) {
  if (logits.dim() != 1 || means.dim() != 2 ||
      means.shape() != log_scales.shape() || means.rows() != logits.numel()) {
    throw DimensionError("GmmParams::single: expected logits [C], means and "
                         "log_scales [C x d_a], got " + to_string(logits.shape()) +
                         ", " + to_string(means.shape()) + ", " +
                         to_string(log_scales.shape()));
  }
  GmmParams p;
  p.components = logits.numel();
  p.action_dim = means.cols();
  p.logits = reshape(logits, {1, p.components});
  p.means = reshape(means, {1, means.numel()});
  p.log_scales = reshape(log_scales, {1, log_scales.numel()});
  return p;
}

bool GmmParams::requires_grad() const {
  return logits.requires_grad() || means.requires_grad() ||
         log_scales.requires_grad();
}

void GmmParams::validate() const {
  if (components == 0 || action_dim == 0) {
    throw DimensionError("GmmParams: need at least one component and one "
                         "action dimension");
  }
  const Shape head{rows(), components};
  const Shape body{rows(), components * action_dim};
  if (logits.shape() != head || means.shape() != body ||
      log_scales.shape() != body) {
    throw DimensionError("GmmParams: inconsistent shapes " +
                         to_string(logits.shape()) + ", " +
                         to_string(means.shape()) + ", " +
                         to_string(log_scales.shape()));
  }
  if (!logits.values().allFinite() || !means.values().allFinite() ||
      !log_scales.values().allFinite()) {
    throw EvaluationError("GmmParams: non-finite parameters");
  }
}

GmmParams GmmParams::detached() const {
  GmmParams p = *this;
  p.logits = logits.detach();
  p.means = means.detach();
  p.log_scales = log_scales.detach();
  return p;
}

Eigen::VectorXd GmmParams::weights(std::size_t row) const {
  Eigen::VectorXd l = logits.matrix().row(static_cast<Eigen::Index>(row)).transpose();
  Eigen::VectorXd w = (l.array() - l.maxCoeff()).exp();
  return w / w.sum();
}

Eigen::VectorXd GmmParams::mode_mean(std::size_t row) const {
  Eigen::Index best = 0;
  logits.matrix().row(static_cast<Eigen::Index>(row)).maxCoeff(&best);
  return means.matrix()
      .row(static_cast<Eigen::Index>(row))
      .segment(best * static_cast<Eigen::Index>(action_dim),
               static_cast<Eigen::Index>(action_dim))
      .transpose();
}

namespace {

GmmParams broadcast_rows(const GmmParams& p, std::size_t rows) {
  if (p.rows() == rows) return p;
  if (p.rows() != 1) {
    throw DimensionError("GMM with " + std::to_string(p.rows()) +
                         " rows cannot serve a batch of " +
                         std::to_string(rows));
  }
  GmmParams out = p;
  out.logits = expand_rows(p.logits, rows);
  out.means = expand_rows(p.means, rows);
  out.log_scales = expand_rows(p.log_scales, rows);
  return out;
}

}  // namespace

Tensor log_prob(const GmmParams& params, const Tensor& actions) {
  params.validate();
  if (actions.dim() != 2 || actions.cols() != params.action_dim) {
    throw DimensionError("log_prob: actions " + to_string(actions.shape()) +
                         " do not match action dimension " +
                         std::to_string(params.action_dim));
  }
  const std::size_t b = actions.rows();
  const std::size_t c = params.components;
  const std::size_t d = params.action_dim;
  const GmmParams p = broadcast_rows(params, b);

  Tensor diff = sub(tile_cols(actions, c), p.means);
  Tensor z = mul(diff, exp(scale(p.log_scales, -1.0)));
  Tensor quad = reshape(sum(reshape(mul(z, z), {b * c, d}), 1), {b, c});
  Tensor log_det = reshape(sum(reshape(p.log_scales, {b * c, d}), 1), {b, c});
  const double norm_const = 0.5 * static_cast<double>(d) *
                            std::log(2.0 * std::numbers::pi);
  Tensor component = add_scalar(sub(scale(quad, -0.5), log_det), -norm_const);
  Tensor log_w = sub(p.logits, expand_cols(logsumexp(p.logits, 1), c));
  return logsumexp(add(log_w, component), 1);
}

ActionBatch sample(const GmmParams& params, std::size_t count, Rng& rng) {
  params.validate();
  if (count == 0) throw ParameterError("sample: count must be positive");
  if (params.rows() != 1 && params.rows() != count) {
    throw DimensionError("sample: GMM with " + std::to_string(params.rows()) +
                         " rows cannot produce " + std::to_string(count) +
                         " draws");
  }
  const std::size_t d = params.action_dim;
  const auto means = params.means.matrix();
  const auto log_scales = params.log_scales.matrix();
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  RowMatrix actions(count, d);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t row = params.rows() == 1 ? 0 : i;
    const Eigen::VectorXd w = params.weights(row);
    const double u = uniform(rng);
    std::size_t comp = 0;
    double cumulative = w[0];
    while (u >= cumulative && comp + 1 < params.components) {
      cumulative += w[static_cast<Eigen::Index>(++comp)];
    }
    for (std::size_t j = 0; j < d; ++j) {
      const auto col = static_cast<Eigen::Index>(comp * d + j);
      const auto r = static_cast<Eigen::Index>(row);
      actions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          means(r, col) + std::exp(log_scales(r, col)) * normal(rng);
    }
  }
  ActionBatch batch;
  batch.actions = Tensor::from_matrix(actions);
  NoGradGuard no_grad;
  batch.log_probs_teacher = log_prob(params, batch.actions).detach();
  return batch;
}

std::size_t top_m_count(std::size_t batch_size, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw ParameterError("top-M fraction must lie in (0, 1]");
  }
  if (batch_size == 0) throw ParameterError("top-M of an empty batch");
  // The small slack absorbs representation error in products such as
  // 0.9 * 10 without moving any genuinely fractional value across an integer.
  const double scaled = fraction * static_cast<double>(batch_size);
  const auto m = static_cast<std::size_t>(std::floor(scaled + 1e-9 * scaled));
  return std::clamp<std::size_t>(m, 1, batch_size);
}

std::vector<std::size_t> top_m_select(const ActionBatch& batch,
                                      double fraction) {
  const std::size_t b = batch.log_probs_teacher.numel();
  const std::size_t m = top_m_count(b, fraction);
  std::vector<std::size_t> order(b);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto lp = batch.log_probs_teacher.values();
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    return lp[static_cast<Eigen::Index>(x)] > lp[static_cast<Eigen::Index>(y)];
  });
  order.resize(m);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace spread
