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

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "spread/gmm.hpp"
#include "spread/suite.hpp"
#include "spread/tensor.hpp"

namespace spread {

struct Linear {
  Tensor weight;  // [in x out]
  Tensor bias;    // [1 x out]

  /// x [B x in] -> [B x out].
  Tensor forward(const Tensor& x) const;
  std::size_t in_features() const { return weight.rows(); }
  std::size_t out_features() const { return weight.cols(); }

  /// Glorot-uniform weights and zero bias.
  static Linear init(std::size_t in, std::size_t out, Rng& rng,
                     double gain = 1.0);
};

/// raw -> hidden (tanh) -> latent (linear).
struct Encoder {
  Linear hidden;
  Linear out;

  Tensor forward(const Tensor& x) const { return out.forward(tanh(hidden.forward(x))); }
};

struct ModelConfig {
  std::array<std::size_t, 5> input_widths{24, 24, 16, 2, 1};
  std::size_t hidden_width = 64;
  std::size_t latent_width = 64;
  std::size_t fusion_width = 64;
  std::size_t components = 5;
  std::size_t action_dim = kActionDim;
  /// log sigma = log_scale_center + log_scale_range * tanh(raw).
  double log_scale_center = -2.0;
  double log_scale_range = 3.0;

  static ModelConfig for_suite(const SuiteConfig& suite);
};

struct PolicyOutput {
  std::array<Tensor, 5> latents;  // [B x latent_width] per modality
  GmmParams gmm;                  // one mixture per row
};

// Multimodal observation encoder with a Gaussian-mixture action head.
class PolicyModel {
 public:
  PolicyModel() = default;
  PolicyModel(const ModelConfig& config, std::uint64_t seed);

  PolicyOutput forward(const ObservationBatch& obs) const;
  /// Latents only; skips the fusion and head layers.
  std::array<Tensor, 5> encode(const ObservationBatch& obs) const;
  /// Mean of the most probable component for every row, without taping.
  Eigen::MatrixXd act(const ObservationBatch& obs) const;

  /// Deep copy with gradient tracking off.
  PolicyModel snapshot() const;
  /// Deep copy with the same gradient flags as this model.
  PolicyModel clone() const;
  std::vector<Tensor> parameters() const;
  std::size_t parameter_count() const;
  /// FNV-1a over the bytes of every parameter value.
  std::uint64_t checksum() const;

  const ModelConfig& config() const { return config_; }
  Encoder& encoder(Modality m) { return encoders_[index_of(m)]; }
  const Encoder& encoder(Modality m) const { return encoders_[index_of(m)]; }
  Linear& fusion() { return fusion_; }
  Linear& head() { return head_; }

 private:
  ModelConfig config_;
  std::array<Encoder, 5> encoders_;
  Linear fusion_;
  Linear head_;
};

/// Closed-loop adapter used for rollouts.
class ModelPolicy final : public Policy {
 public:
  explicit ModelPolicy(const PolicyModel& model) : model_(model) {}
  Eigen::MatrixXd act(const ObservationBatch& obs,
                      const Eigen::MatrixXd& states) override;

 private:
  const PolicyModel& model_;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamOptions options);

  /// Applies one update from the accumulated gradients. Parameters without
  /// a gradient are left untouched.
  void step();
  void zero_grad();
  std::size_t steps() const { return steps_; }

 private:
  std::vector<Tensor> params_;
  AdamOptions options_;
  std::vector<Eigen::VectorXd> m_;
  std::vector<Eigen::VectorXd> v_;
  std::size_t steps_ = 0;
};

}  // namespace spread
