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
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "spread/distill.hpp"
#include "spread/random.hpp"

namespace spread {

inline constexpr std::size_t kStateDim = 2;
inline constexpr std::size_t kActionDim = 2;

using State = Eigen::Vector2d;

struct SuiteConfig {
  double goal_radius = 0.1;
  std::size_t horizon = 60;
  double max_action = 0.2;
  double obs_noise_sigma = 0.01;
  double expert_gain = 0.5;
  double expert_noise = 0.01;
  /// Goals are drawn from [-goal_extent, goal_extent]^2.
  double goal_extent = 0.8;
  double min_goal_separation = 0.45;
  double start_half_width = 0.2;
  double min_start_goal_distance = 0.8;
  std::size_t visual_width = 24;
  std::size_t embedding_width = 16;
  double visual_weight_scale = 1.5;

  void validate() const;
};

void to_json(nlohmann::json& j, const SuiteConfig& c);
void from_json(const nlohmann::json& j, SuiteConfig& c);

/// tanh(W s + b): a fixed nonlinear camera stand-in.
struct ObservationMap {
  Eigen::MatrixXd weight;  // width x kStateDim
  Eigen::VectorXd bias;

  Eigen::VectorXd apply(const State& s) const {
    return (weight * s + bias).array().tanh();
  }
};

// One goal-reaching task on the 2-D point mass s' = clip_box(s + clip(a)).
struct TaskSpec {
  std::size_t task_id = 1;  // 1-based position in the suite
  State start_center = State::Zero();
  double start_half_width = 0.2;
  State goal = State::Zero();
  double goal_radius = 0.1;
  Eigen::VectorXd task_embedding;  // unit norm
  std::size_t horizon = 60;
  ObservationMap agent_view;
  ObservationMap hand_eye;
  double obs_noise_sigma = 0.0;
  double max_action = 0.2;
  double expert_gain = 0.5;
  double expert_noise = 0.0;

  bool is_success(const State& s) const {
    return (s - goal).norm() <= goal_radius;
  }
  State sample_initial_state(Rng& rng) const;
  /// Deterministic dynamics; the action is clipped to the action box and
  /// the state to [-1, 1]^2.
  State step(const State& s, const Eigen::Vector2d& action) const;
  Eigen::Vector2d clip_action(const Eigen::Vector2d& a) const;
  /// Noise-free proportional controller.
  Eigen::Vector2d expert_action(const State& s) const;
};

std::size_t modality_width(Modality m, const SuiteConfig& config);

/// Per-modality observation rows; channel i holds modality i.
struct ObservationBatch {
  std::array<Eigen::MatrixXd, 5> channels;

  std::size_t rows() const {
    return static_cast<std::size_t>(channels[0].rows());
  }
  const Eigen::MatrixXd& operator[](Modality m) const {
    return channels[index_of(m)];
  }
  Eigen::MatrixXd& operator[](Modality m) { return channels[index_of(m)]; }
};

/// Observations of several states of one task. Noise is drawn for every
/// entry in a fixed order regardless of sigma, so the rng stream does not
/// depend on the noise level.
ObservationBatch observe_batch(const TaskSpec& task,
                               const Eigen::Ref<const Eigen::MatrixXd>& states,
                               Rng& rng);
ObservationBatch observe(const TaskSpec& task, const State& state, Rng& rng);

/// Stacks batches row-wise.
ObservationBatch concat_rows(const std::vector<ObservationBatch>& parts);

struct Demonstration {
  Eigen::MatrixXd states;   // L x kStateDim, states before each action
  Eigen::MatrixXd actions;  // L x kActionDim
  std::size_t task_id = 1;

  std::size_t length() const { return static_cast<std::size_t>(states.rows()); }
  /// State reached after the last action.
  State final_state(const TaskSpec& task) const;
};

std::vector<TaskSpec> generate_suite(std::uint64_t suite_seed,
                                     std::size_t num_tasks,
                                     const SuiteConfig& config);

/// N successful proportional-controller demonstrations with exploration
/// noise. Throws GenerationError if a demonstration keeps failing.
std::vector<Demonstration> expert_demos(const TaskSpec& task, std::size_t count,
                                        Rng& rng);

// Closed-loop controllers evaluated by rollout_success_rate.
class Policy {
 public:
  virtual ~Policy() = default;
  /// One action per row. `states` is the true state, available to
  /// privileged controllers only.
  virtual Eigen::MatrixXd act(const ObservationBatch& obs,
                              const Eigen::MatrixXd& states) = 0;
};

class ExpertPolicy final : public Policy {
 public:
  explicit ExpertPolicy(const TaskSpec& task) : task_(task) {}
  Eigen::MatrixXd act(const ObservationBatch& obs,
                      const Eigen::MatrixXd& states) override;

 private:
  const TaskSpec& task_;
};

class RandomPolicy final : public Policy {
 public:
  RandomPolicy(double max_action, std::uint64_t seed)
      : max_action_(max_action), rng_(seed) {}
  Eigen::MatrixXd act(const ObservationBatch& obs,
                      const Eigen::MatrixXd& states) override;

 private:
  double max_action_;
  Rng rng_;
};

/// Fraction of `episodes` closed-loop runs that enter the goal region
/// within the horizon. Episodes run in lock-step; every episode is
/// simulated for the full horizon so the draws do not depend on outcomes.
double rollout_success_rate(Policy& policy, const TaskSpec& task,
                            std::size_t episodes, Rng& rng);

nlohmann::json suite_to_json(const std::vector<TaskSpec>& suite,
                             std::uint64_t suite_seed,
                             const SuiteConfig& config);
std::vector<TaskSpec> suite_from_json(const nlohmann::json& j);
void save_suite(const std::filesystem::path& path,
                const std::vector<TaskSpec>& suite, std::uint64_t suite_seed,
                const SuiteConfig& config);
std::vector<TaskSpec> load_suite(const std::filesystem::path& path);

}  // namespace spread
