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
#include <map>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "spread/gmm.hpp"
#include "spread/random.hpp"
#include "spread/svd.hpp"
#include "spread/tensor.hpp"

namespace spread {

enum class Modality { AgentView, HandEye, Text, Joint, Gripper };

inline constexpr std::array<Modality, 5> kModalities{
    Modality::AgentView, Modality::HandEye, Modality::Text, Modality::Joint,
    Modality::Gripper};

std::string_view modality_name(Modality m);
std::optional<Modality> parse_modality(std::string_view name);
inline std::size_t index_of(Modality m) { return static_cast<std::size_t>(m); }

enum class FeatureSource { Teacher, Student };

/// Latent features of one modality arranged as a D x (N*L) matrix: one
/// column per (sample, time step).
struct ModalityFeatures {
  Modality modality;
  Tensor features;
  FeatureSource source;
};

struct DistillWeights {
  double lambda_i = 0.3;  // image modalities
  double lambda_t = 0.3;  // text
  double lambda_e = 0.3;  // joint and gripper
  double lambda_p = 0.01; // policy
  std::size_t rank_r = 48;
  double top_m_fraction = 0.9;

  /// Throws ParameterError unless the weights are finite and non-negative,
  /// 1 <= rank_r <= latent_width and the fraction lies in (0, 1].
  void validate(std::size_t latent_width) const;
  bool any_feature_term() const {
    return lambda_i != 0.0 || lambda_t != 0.0 || lambda_e != 0.0;
  }

  // Per-suite settings used for the three manipulation suites.
  static DistillWeights goal_preset();
  static DistillWeights object_preset();
  static DistillWeights spatial_preset();
};

struct SpreadBases {
  SubspaceBasis<double> teacher;
  SubspaceBasis<double> student;
};

/// Bases per modality. When handed to modality_loss, missing entries are
/// filled and present ones reused, which freezes the bases across calls
/// (finite-difference checks rely on this).
using BasisCache = std::map<Modality, SpreadBases>;

struct SpreadDiagnostics {
  bool teacher_degenerate = false;
  bool student_degenerate = false;
};

// Symmetric subspace distillation loss
//
//   |P_t f_t - P_s f_s|_F^2 + |P_t f_s - P_s f_t|_F^2,   P = U U^T,
//
// where U_t and U_s are the top-r left singular vectors of f_t and f_s.
// Both bases are constants for the tape: gradient reaches f_s only through
// its two explicit occurrences. f_t must not require gradients.
Tensor spread_loss(const Tensor& f_t, const Tensor& f_s, std::size_t rank,
                   SpreadDiagnostics* diagnostics = nullptr);

/// Same loss with caller-supplied bases.
Tensor spread_loss(const Tensor& f_t, const Tensor& f_s,
                   const SpreadBases& bases);

SpreadBases spread_bases(const Tensor& f_t, const Tensor& f_s,
                         std::size_t rank);

struct ModalityLosses {
  Tensor image;  // HandEye + AgentView
  Tensor text;
  Tensor extra;  // Joint + Gripper
};

/// Per-modality spread losses grouped into image, text and extra terms.
/// Both sets must cover the same modalities (ConfigError otherwise), each
/// exactly once.
ModalityLosses modality_loss(std::span<const ModalityFeatures> teacher,
                             std::span<const ModalityFeatures> student,
                             std::size_t rank,
                             SpreadDiagnostics* diagnostics = nullptr,
                             BasisCache* cache = nullptr);

/// Per-sample terms log pi_teacher(a) - log pi_student(a) over the top-M
/// most teacher-probable of B teacher draws, in ascending draw order.
Tensor policy_distill_terms(const GmmParams& student, const GmmParams& teacher,
                            std::size_t count, double fraction, Rng& rng);

/// Mean of policy_distill_terms: a Monte-Carlo estimate of
/// KL(teacher || student) restricted to confident teacher draws.
Tensor policy_distill_loss(const GmmParams& student, const GmmParams& teacher,
                           std::size_t count, double fraction, Rng& rng);

}  // namespace spread
