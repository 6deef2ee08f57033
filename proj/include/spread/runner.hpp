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
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "spread/distill.hpp"
#include "spread/metrics.hpp"
#include "spread/model.hpp"
#include "spread/suite.hpp"

namespace spdlog {
class logger;
}

namespace spread {

enum class Method { Sequential, ER, Spread };

std::string method_name(Method m);
std::optional<Method> parse_method(const std::string& name);

struct RunConfig {
  std::uint64_t suite_seed = 0;
  std::uint64_t train_seed = 0;
  std::size_t num_tasks = 5;
  std::size_t demos_per_task = 50;
  std::size_t epochs = 12;
  std::size_t windows_per_batch = 8;
  std::size_t window_length = 8;
  AdamOptions optimizer;
  DistillWeights weights;
  Method method = Method::Spread;
  std::size_t eval_episodes = 20;
  bool eval_every_epoch = true;
  std::size_t replay_capacity = 10;
  bool nbt_exclude_last = false;
  std::size_t probe_size = 64;
  SuiteConfig suite;

  /// Throws ConfigError on inconsistent settings.
  void validate() const;
  /// Weights after applying the method: zero for Sequential and ER.
  DistillWeights effective_weights() const;
  bool replay_enabled() const { return method != Method::Sequential; }
  std::size_t rows_per_batch() const { return windows_per_batch * window_length; }
};

/// Canonical JSON form; the config hash is computed from its dump.
nlohmann::json config_to_json(const RunConfig& config);
/// Unknown keys, bad types and invalid values raise ConfigError. A
/// "preset" key ("goal", "object", "spatial") sets the four lambdas before
/// any explicit lambda keys are applied.
RunConfig config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
std::string config_hash(const RunConfig& config);

// Stored exemplar demonstrations of finished tasks.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity_per_task)
      : capacity_(capacity_per_task) {}

  /// Stores up to capacity demonstrations chosen uniformly without
  /// replacement. Adding a task twice raises ParameterError.
  void add_task(std::size_t task_id, const std::vector<Demonstration>& demos,
                Rng& rng);
  bool empty() const { return store_.empty(); }
  bool contains(std::size_t task_id) const { return store_.count(task_id) > 0; }
  std::vector<std::size_t> tasks() const;
  std::size_t size(std::size_t task_id) const;
  std::size_t capacity() const { return capacity_; }

  struct Draw {
    std::size_t task_id;
    const Demonstration* demo;
  };
  /// Uniform task, then uniform stored demonstration of that task.
  Draw sample(Rng& rng) const;

 private:
  std::size_t capacity_;
  std::map<std::size_t, std::vector<Demonstration>> store_;
};

struct TrainingBatch {
  ObservationBatch obs;
  Eigen::MatrixXd actions;           // rows x kActionDim
  std::vector<std::size_t> task_ids;  // per row

  std::size_t rows() const { return static_cast<std::size_t>(actions.rows()); }
};

/// L contiguous steps of a demonstration starting at `start`; indices past
/// the end repeat the final step.
std::vector<std::size_t> window_indices(const Demonstration& demo,
                                        std::size_t start, std::size_t length);

/// Observes every window state of the given task. Windows of one task
/// share a single observe_batch call.
TrainingBatch make_batch(const std::vector<TaskSpec>& suite,
                         const std::vector<std::pair<const Demonstration*,
                                                     std::size_t>>& windows,
                         std::size_t window_length, Rng& rng);

/// Mean negative log-likelihood of the batch actions. A non-finite value
/// raises TrainingError.
Tensor bc_loss(const PolicyModel& policy, const TrainingBatch& batch);

struct ObjectiveTerms {
  Tensor total;
  double bc = 0.0;
  double image = 0.0;
  double text = 0.0;
  double extra = 0.0;
  double policy = 0.0;
  bool teacher_degenerate = false;
  bool student_degenerate = false;
};

/// bc_loss plus the weighted distillation terms. Terms with zero weight,
/// or every distillation term when there is no teacher, are left out.
ObjectiveTerms compute_objective(const PolicyModel& student,
                                 const PolicyModel* teacher,
                                 const TrainingBatch& batch,
                                 const DistillWeights& weights, Rng& rng);

struct StepRecord {
  std::size_t task = 0;   // 1-based
  std::size_t epoch = 0;  // 1-based
  std::size_t step = 0;   // within the epoch
  double total = 0.0;
  double bc = 0.0;
  double image = 0.0;
  double text = 0.0;
  double extra = 0.0;
  double policy = 0.0;
  bool skipped = false;
  std::vector<std::size_t> replay_tasks;  // task id per replayed window
};

struct MetricsReport {
  SuccessRecord success;
  DriftRecord drift;
  MetricsSummary summary;
  std::vector<StepRecord> steps;
  std::size_t skipped_steps = 0;
  std::size_t degenerate_bases = 0;
  bool complete = false;
};

struct RunHooks {
  /// Called after every optimizer step (and every skipped step).
  std::function<void(const StepRecord&, const PolicyModel& student,
                     const PolicyModel* teacher)>
      on_step;
  /// Called after each task with the student and the replay buffer.
  std::function<void(std::size_t task, const PolicyModel& student,
                     const ReplayBuffer& buffer)>
      on_task_end;
};

struct RunOptions {
  std::shared_ptr<spdlog::logger> logger;
  RunHooks hooks;
  bool keep_step_log = true;
  /// When set, the report is written here on success. Before a failure
  /// propagates the partial report is flushed along with a FAILED file
  /// holding the error message.
  std::optional<std::filesystem::path> out_dir;
};

MetricsReport run_experiment(const RunConfig& config, const RunOptions& options = {});

/// Writes config.json, success_matrix.csv, success_curve.csv, drift.csv and
/// metrics.json into `dir`.
void write_report(const std::filesystem::path& dir, const RunConfig& config,
                  const MetricsReport& report);

}  // namespace spread
