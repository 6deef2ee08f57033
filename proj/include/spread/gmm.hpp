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
#include <vector>

#include "spread/random.hpp"
#include "spread/tensor.hpp"

namespace spread {

// Diagonal-covariance Gaussian mixture over actions, possibly conditioned
// per row: row i of every field parameterises the distribution for
// condition i. A single unconditioned mixture has one row.
struct GmmParams {
  Tensor logits;      // [R x C], unnormalised mixture weights
  Tensor means;       // [R x C*d_a], component c occupies columns c*d_a..
  Tensor log_scales;  // [R x C*d_a], log standard deviations
  std::size_t components = 0;
  std::size_t action_dim = 0;

  /// One mixture from logits [C], means [C x d_a] and log_scales [C x d_a].
  static GmmParams single(const Tensor& logits, const Tensor& means,
                          const Tensor& log_scales);

  std::size_t rows() const { return logits.rows(); }
  bool requires_grad() const;
  /// Throws DimensionError on inconsistent shapes and EvaluationError on
  /// non-finite entries.
  void validate() const;
  /// Copies without gradient tracking.
  GmmParams detached() const;

  Eigen::VectorXd weights(std::size_t row) const;
  /// Mean of the highest-weight component (lowest index wins ties).
  Eigen::VectorXd mode_mean(std::size_t row) const;
};

struct ActionBatch {
  Tensor actions;            // [B x d_a]
  Tensor log_probs_teacher;  // [B]
};

/// log sum_c w_c N(a; mu_c, diag(sigma_c^2)) for each row of `actions`.
/// Parameters with one row are shared by all actions; otherwise the row
/// counts must agree.
Tensor log_prob(const GmmParams& params, const Tensor& actions);

/// Draws B actions. One-row parameters are sampled B times; B-row
/// parameters contribute one draw per row. Never differentiable.
ActionBatch sample(const GmmParams& params, std::size_t count, Rng& rng);

/// max(1, floor(fraction * B)).
std::size_t top_m_count(std::size_t batch_size, double fraction);

/// Indices of the M draws with the largest teacher log-probability, in
/// ascending index order. Ties go to the lower index.
std::vector<std::size_t> top_m_select(const ActionBatch& batch,
                                      double fraction);

}  // namespace spread
