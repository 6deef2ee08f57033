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

#include "spread/model.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "spread/errors.hpp"

namespace spread {

namespace {

Linear copy_linear(const Linear& l, bool requires_grad) {
  return Linear{l.weight.clone(requires_grad), l.bias.clone(requires_grad)};
}

Encoder copy_encoder(const Encoder& e, bool requires_grad) {
  return Encoder{copy_linear(e.hidden, requires_grad),
                 copy_linear(e.out, requires_grad)};
}

}  // namespace

Tensor Linear::forward(const Tensor& x) const {
  return add(matmul(x, weight), expand_rows(bias, x.rows()));
}

Linear Linear::init(std::size_t in, std::size_t out, Rng& rng, double gain) {
  const double limit = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-limit, limit);
  std::vector<double> w(in * out);
  for (auto& x : w) x = u(rng);
  return Linear{Tensor::from({in, out}, std::move(w), true),
                Tensor::zeros({1, out}, true)};
}

ModelConfig ModelConfig::for_suite(const SuiteConfig& suite) {
  ModelConfig c;
  for (auto m : kModalities) c.input_widths[index_of(m)] = modality_width(m, suite);
  return c;
}

PolicyModel::PolicyModel(const ModelConfig& config, std::uint64_t seed)
    : config_(config) {
  if (config.components < 1 || config.action_dim < 1 ||
      config.latent_width < 1 || config.hidden_width < 1 ||
      config.fusion_width < 1) {
    throw ParameterError("model widths must be positive");
  }
  Rng rng(seed);
  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    encoders_[m].hidden = Linear::init(config.input_widths[m], config.hidden_width, rng);
    encoders_[m].out = Linear::init(config.hidden_width, config.latent_width, rng);
  }
  fusion_ = Linear::init(encoders_.size() * config.latent_width,
                         config.fusion_width, rng);
  const std::size_t head_width =
      config.components + 2 * config.components * config.action_dim;
  head_ = Linear::init(config.fusion_width, head_width, rng, 0.1);
}

std::array<Tensor, 5> PolicyModel::encode(const ObservationBatch& obs) const {
  std::array<Tensor, 5> latents;
  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    const auto& raw = obs.channels[m];
    if (raw.cols() != static_cast<Eigen::Index>(config_.input_widths[m])) {
      throw DimensionError(std::string("observation width mismatch for ") +
                           std::string(modality_name(kModalities[m])));
    }
    latents[m] = encoders_[m].forward(Tensor::from_matrix(raw));
  }
  return latents;
}

PolicyOutput PolicyModel::forward(const ObservationBatch& obs) const {
  PolicyOutput out;
  out.latents = encode(obs);
  Tensor fused = tanh(fusion_.forward(concat(std::span<const Tensor>(out.latents), 1)));
  Tensor head = head_.forward(fused);
  const std::size_t C = config_.components;
  const std::size_t width = C * config_.action_dim;
  out.gmm.components = C;
  out.gmm.action_dim = config_.action_dim;
  out.gmm.logits = slice_cols(head, 0, C);
  out.gmm.means = slice_cols(head, C, width);
  out.gmm.log_scales =
      add_scalar(scale(tanh(slice_cols(head, C + width, width)),
                       config_.log_scale_range),
                 config_.log_scale_center);
  return out;
}

Eigen::MatrixXd PolicyModel::act(const ObservationBatch& obs) const {
  NoGradGuard guard;
  const PolicyOutput out = forward(obs);
  const std::size_t rows = out.gmm.rows();
  Eigen::MatrixXd actions(static_cast<Eigen::Index>(rows),
                          static_cast<Eigen::Index>(config_.action_dim));
  for (std::size_t r = 0; r < rows; ++r) {
    actions.row(static_cast<Eigen::Index>(r)) = out.gmm.mode_mean(r).transpose();
  }
  return actions;
}

PolicyModel PolicyModel::snapshot() const {
  PolicyModel copy;
  copy.config_ = config_;
  for (std::size_t m = 0; m < encoders_.size(); ++m) {
    copy.encoders_[m] = copy_encoder(encoders_[m], false);
  }
  copy.fusion_ = copy_linear(fusion_, false);
  copy.head_ = copy_linear(head_, false);
  return copy;
}

PolicyModel PolicyModel::clone() const {
  PolicyModel copy = snapshot();
  for (auto& p : copy.parameters()) p.set_requires_grad(true);
  return copy;
}

std::vector<Tensor> PolicyModel::parameters() const {
  std::vector<Tensor> params;
  for (const auto& e : encoders_) {
    params.insert(params.end(), {e.hidden.weight, e.hidden.bias, e.out.weight, e.out.bias});
  }
  params.insert(params.end(), {fusion_.weight, fusion_.bias, head_.weight, head_.bias});
  return params;
}

std::size_t PolicyModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

std::uint64_t PolicyModel::checksum() const {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (const auto& p : parameters()) {
    const auto values = p.values();
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size() * sizeof(double); ++i) {
      hash ^= bytes[i];
      hash *= 0x100000001b3ULL;
    }
  }
  return hash;
}

Eigen::MatrixXd ModelPolicy::act(const ObservationBatch& obs,
                                 const Eigen::MatrixXd&) {
  return model_.act(obs);
}

void AdamOptions::validate() const {
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) {
    throw ParameterError("learning_rate must be positive");
  }
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) {
    throw ParameterError("Adam betas must lie in [0, 1)");
  }
  if (!(epsilon > 0)) throw ParameterError("Adam epsilon must be positive");
}

Adam::Adam(std::vector<Tensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  options_.validate();
  for (const auto& p : params_) {
    m_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.numel())));
    v_.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p.numel())));
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(options_.beta1, t);
  const double c2 = 1.0 - std::pow(options_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    const Eigen::VectorXd g = params_[i].grad();
    m_[i] = options_.beta1 * m_[i] + (1.0 - options_.beta1) * g;
    v_[i] = options_.beta2 * v_[i] + (1.0 - options_.beta2) * g.cwiseAbs2();
    auto w = params_[i].values_mut();
    w.array() -= options_.learning_rate * (m_[i].array() / c1) /
                 ((v_[i].array() / c2).sqrt() + options_.epsilon);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace spread
