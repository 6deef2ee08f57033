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

#include "spread/distill.hpp"

#include <cmath>
#include <map>

namespace spread {

namespace {

constexpr std::array<std::string_view, 5> kNames{"AgentView", "HandEye", "Text",
                                                 "Joint", "Gripper"};

}  // namespace

std::string_view modality_name(Modality m) { return kNames[index_of(m)]; }

std::optional<Modality> parse_modality(std::string_view name) {
  for (auto m : kModalities) {
    if (modality_name(m) == name) return m;
  }
  return std::nullopt;
}

void DistillWeights::validate(std::size_t latent_width) const {
  for (double w : {lambda_i, lambda_t, lambda_e, lambda_p}) {
    if (!std::isfinite(w) || w < 0.0) {
      throw ParameterError("distillation weights must be finite and >= 0");
    }
  }
  if (rank_r < 1 || rank_r > latent_width) {
    throw ParameterError("rank_r must lie in [1, " +
                         std::to_string(latent_width) + "], got " +
                         std::to_string(rank_r));
  }
  if (!(top_m_fraction > 0.0 && top_m_fraction <= 1.0)) {
    throw ParameterError("top_m_fraction must lie in (0, 1]");
  }
}

DistillWeights DistillWeights::goal_preset() {
  return {.lambda_i = 0.3, .lambda_t = 0.3, .lambda_e = 0.3, .lambda_p = 0.01};
}

DistillWeights DistillWeights::object_preset() {
  return {.lambda_i = 0.005, .lambda_t = 0.005, .lambda_e = 0.005,
          .lambda_p = 0.003};
}

DistillWeights DistillWeights::spatial_preset() {
  return {.lambda_i = 0.03, .lambda_t = 0.03, .lambda_e = 0.03,
          .lambda_p = 0.005};
}

namespace {

void check_features(const Tensor& f_t, const Tensor& f_s) {
  if (f_t.requires_grad()) {
    throw ParameterError("spread_loss: teacher features must be gradient-free");
  }
  if (f_t.dim() != 2 || f_t.shape() != f_s.shape()) {
    throw DimensionError("spread_loss: feature shapes " + to_string(f_t.shape()) +
                         " and " + to_string(f_s.shape()) + " differ");
  }
}

}  // namespace

SpreadBases spread_bases(const Tensor& f_t, const Tensor& f_s,
                         std::size_t rank) {
  check_features(f_t, f_s);
  const auto r = static_cast<Eigen::Index>(rank);
  return {svd_top_r(f_t.to_matrix(), r), svd_top_r(f_s.to_matrix(), r)};
}

Tensor spread_loss(const Tensor& f_t, const Tensor& f_s, std::size_t rank,
                   SpreadDiagnostics* diagnostics) {
  const SpreadBases bases = spread_bases(f_t, f_s, rank);
  if (diagnostics) {
    diagnostics->teacher_degenerate |= bases.teacher.degenerate;
    diagnostics->student_degenerate |= bases.student.degenerate;
  }
  return spread_loss(f_t, f_s, bases);
}

Tensor spread_loss(const Tensor& f_t, const Tensor& f_s,
                   const SpreadBases& bases) {
  check_features(f_t, f_s);
  const auto& bt = bases.teacher;
  const auto& bs = bases.student;
  if (bt.dim() != static_cast<Eigen::Index>(f_t.rows()) ||
      bs.dim() != bt.dim()) {
    throw DimensionError("spread_loss: bases do not match feature width");
  }
  const Tensor u_t = Tensor::from_matrix(bt.u);
  const Tensor u_s = Tensor::from_matrix(bs.u);
  const Tensor u_t_T = Tensor::from_matrix(bt.u.transpose());
  const Tensor u_s_T = Tensor::from_matrix(bs.u.transpose());
  // Teacher projections go through the same kernels as the student ones so
  // that identical inputs cancel exactly.
  const Tensor teacher_in_t = matmul(u_t, matmul(u_t_T, f_t));
  const Tensor teacher_in_s = matmul(u_s, matmul(u_s_T, f_t));

  Tensor content = sub(teacher_in_t, matmul(u_s, matmul(u_s_T, f_s)));
  Tensor cross = sub(matmul(u_t, matmul(u_t_T, f_s)), teacher_in_s);
  return add(squared_norm(content), squared_norm(cross));
}

ModalityLosses modality_loss(std::span<const ModalityFeatures> teacher,
                             std::span<const ModalityFeatures> student,
                             std::size_t rank, SpreadDiagnostics* diagnostics,
                             BasisCache* cache) {
  auto index = [](std::span<const ModalityFeatures> set, FeatureSource source,
                  const char* label) {
    std::map<Modality, const ModalityFeatures*> out;
    for (const auto& f : set) {
      if (f.source != source) {
        throw ConfigError(std::string(label) + " set holds features of the "
                          "wrong source for " +
                          std::string(modality_name(f.modality)));
      }
      if (!out.emplace(f.modality, &f).second) {
        throw ConfigError(std::string(label) + " set repeats modality " +
                          std::string(modality_name(f.modality)));
      }
    }
    return out;
  };
  const auto t = index(teacher, FeatureSource::Teacher, "teacher");
  const auto s = index(student, FeatureSource::Student, "student");
  for (auto m : kModalities) {
    if (t.count(m) != s.count(m)) {
      throw ConfigError("modality " + std::string(modality_name(m)) +
                        " missing from the " +
                        (t.count(m) ? "student" : "teacher") + " features");
    }
  }

  auto group = [&](std::initializer_list<Modality> members) {
    Tensor total = Tensor::scalar(0.0);
    for (auto m : members) {
      auto it = t.find(m);
      if (it == t.end()) {
        throw ConfigError("modality " + std::string(modality_name(m)) +
                          " is required for distillation");
      }
      const Tensor& f_t = it->second->features;
      const Tensor& f_s = s.at(m)->features;
      if (cache) {
        auto found = cache->find(m);
        if (found == cache->end()) {
          found = cache->emplace(m, spread_bases(f_t, f_s, rank)).first;
        }
        if (diagnostics) {
          diagnostics->teacher_degenerate |= found->second.teacher.degenerate;
          diagnostics->student_degenerate |= found->second.student.degenerate;
        }
        total = add(total, spread_loss(f_t, f_s, found->second));
      } else {
        total = add(total, spread_loss(f_t, f_s, rank, diagnostics));
      }
    }
    return total;
  };
  return {group({Modality::HandEye, Modality::AgentView}),
          group({Modality::Text}),
          group({Modality::Joint, Modality::Gripper})};
}

Tensor policy_distill_terms(const GmmParams& student, const GmmParams& teacher,
                            std::size_t count, double fraction, Rng& rng) {
  if (teacher.requires_grad()) {
    throw ParameterError("policy distillation: teacher must be gradient-free");
  }
  if (count == 0) throw ParameterError("policy distillation: B must be >= 1");
  const ActionBatch batch = sample(teacher, count, rng);
  if (!batch.log_probs_teacher.values().allFinite()) {
    throw EvaluationError("policy distillation: non-finite teacher log-probs");
  }
  const auto selected = top_m_select(batch, fraction);
  Eigen::VectorXd teacher_lp(static_cast<Eigen::Index>(selected.size()));
  for (std::size_t i = 0; i < selected.size(); ++i) {
    teacher_lp[static_cast<Eigen::Index>(i)] =
        batch.log_probs_teacher.at(selected[i]);
  }
  Tensor student_lp = index_select(log_prob(student, batch.actions), selected);
  return sub(Tensor::from_vector(teacher_lp), student_lp);
}

Tensor policy_distill_loss(const GmmParams& student, const GmmParams& teacher,
                           std::size_t count, double fraction, Rng& rng) {
  return mean(policy_distill_terms(student, teacher, count, fraction, rng));
}

}  // namespace spread
