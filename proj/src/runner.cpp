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

#include "spread/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/sinks/null_sink.h>
#include <spdlog/spdlog.h>

#include "spread/errors.hpp"

namespace spread {

namespace {

// Random stream labels below the train seed.
constexpr std::uint64_t kInitStream = 0;
constexpr std::uint64_t kDemoStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kBatchStream = 3;
constexpr std::uint64_t kDistillStream = 4;
constexpr std::uint64_t kReplayStream = 5;
constexpr std::uint64_t kProbeStream = 6;

constexpr double kMaxSkippedFraction = 0.01;

std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::size_t window_start(const Demonstration& demo, std::size_t length, Rng& rng) {
  const std::size_t L = demo.length();
  return L > length ? uniform_index(rng, L - length + 1) : 0;
}

std::shared_ptr<spdlog::logger> quiet_logger() {
  static auto logger = std::make_shared<spdlog::logger>(
      "spread-quiet", std::make_shared<spdlog::sinks::null_sink_mt>());
  return logger;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::Sequential:
      return "Sequential";
    case Method::ER:
      return "ER";
    case Method::Spread:
      return "SPREAD";
  }
  return "unknown";
}

std::optional<Method> parse_method(const std::string& name) {
  for (auto m : {Method::Sequential, Method::ER, Method::Spread}) {
    if (method_name(m) == name) return m;
  }
  return std::nullopt;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (num_tasks < 1) fail("num_tasks must be at least 1");
  if (demos_per_task < 1) fail("demos_per_task must be at least 1");
  if (epochs < 1) fail("epochs must be at least 1");
  if (windows_per_batch < 2) fail("windows_per_batch must be at least 2");
  if (window_length < 1) fail("window_length must be at least 1");
  if (eval_episodes < 1) fail("eval_episodes must be at least 1");
  if (replay_enabled() && replay_capacity < 1) fail("replay_capacity must be at least 1");
  if (probe_size < 1) fail("probe_size must be at least 1");
  try {
    suite.validate();
    optimizer.validate();
    weights.validate(ModelConfig{}.latent_width);
  } catch (const ParameterError& e) {
    fail(e.what());
  }
  if (weights.rank_r > rows_per_batch()) {
    fail(fmt::format("rank_r = {} exceeds the {} feature columns of a batch",
                     weights.rank_r, rows_per_batch()));
  }
}

DistillWeights RunConfig::effective_weights() const {
  DistillWeights w = weights;
  if (method != Method::Spread) {
    w.lambda_i = w.lambda_t = w.lambda_e = w.lambda_p = 0.0;
  }
  return w;
}

nlohmann::json config_to_json(const RunConfig& c) {
  nlohmann::json suite = c.suite;
  return nlohmann::json{{"suite_seed", c.suite_seed},
                        {"train_seed", c.train_seed},
                        {"num_tasks", c.num_tasks},
                        {"demos_per_task", c.demos_per_task},
                        {"epochs", c.epochs},
                        {"windows_per_batch", c.windows_per_batch},
                        {"window_length", c.window_length},
                        {"learning_rate", c.optimizer.learning_rate},
                        {"beta1", c.optimizer.beta1},
                        {"beta2", c.optimizer.beta2},
                        {"adam_epsilon", c.optimizer.epsilon},
                        {"lambda_i", c.weights.lambda_i},
                        {"lambda_t", c.weights.lambda_t},
                        {"lambda_e", c.weights.lambda_e},
                        {"lambda_p", c.weights.lambda_p},
                        {"rank_r", c.weights.rank_r},
                        {"top_m_fraction", c.weights.top_m_fraction},
                        {"method", method_name(c.method)},
                        {"eval_episodes", c.eval_episodes},
                        {"eval_every_epoch", c.eval_every_epoch},
                        {"replay_capacity", c.replay_capacity},
                        {"nbt_exclude_last", c.nbt_exclude_last},
                        {"probe_size", c.probe_size},
                        {"suite", suite}};
}

namespace {

// Non-negative integer field; JSON allows -1 to convert silently otherwise.
template <typename T>
T unsigned_field(const nlohmann::json& j, const char* key, T fallback,
                 T limit = std::numeric_limits<T>::max()) {
  if (!j.contains(key)) return fallback;
  const auto& v = j.at(key);
  if (!v.is_number_unsigned()) {
    throw ConfigError(fmt::format("{} must be a non-negative integer", key));
  }
  const auto value = v.get<std::uint64_t>();
  if (value > limit) throw ConfigError(fmt::format("{} = {} is too large", key, value));
  return static_cast<T>(value);
}

constexpr std::size_t kMaxCount = 1'000'000;

}  // namespace

RunConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  static const std::vector<std::string> kKeys = {
      "suite_seed", "train_seed", "num_tasks", "demos_per_task", "epochs",
      "windows_per_batch", "window_length", "learning_rate", "beta1", "beta2",
      "adam_epsilon", "preset", "lambda_i", "lambda_t", "lambda_e", "lambda_p",
      "rank_r", "top_m_fraction", "method", "eval_episodes", "eval_every_epoch",
      "replay_capacity", "nbt_exclude_last", "probe_size",
      "differentiate_basis", "suite"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(kKeys.begin(), kKeys.end(), key) == kKeys.end()) {
      throw ConfigError("unknown config key: " + key);
    }
  }
  RunConfig c;
  try {
    c.suite_seed = unsigned_field(j, "suite_seed", c.suite_seed);
    c.train_seed = unsigned_field(j, "train_seed", c.train_seed);
    c.num_tasks = unsigned_field(j, "num_tasks", c.num_tasks, kMaxCount);
    c.demos_per_task = unsigned_field(j, "demos_per_task", c.demos_per_task, kMaxCount);
    c.epochs = unsigned_field(j, "epochs", c.epochs, kMaxCount);
    c.windows_per_batch = unsigned_field(j, "windows_per_batch", c.windows_per_batch, kMaxCount);
    c.window_length = unsigned_field(j, "window_length", c.window_length, kMaxCount);
    c.optimizer.learning_rate = j.value("learning_rate", c.optimizer.learning_rate);
    c.optimizer.beta1 = j.value("beta1", c.optimizer.beta1);
    c.optimizer.beta2 = j.value("beta2", c.optimizer.beta2);
    c.optimizer.epsilon = j.value("adam_epsilon", c.optimizer.epsilon);
    if (j.contains("preset")) {
      const auto preset = j.at("preset").get<std::string>();
      DistillWeights p;
      if (preset == "goal") {
        p = DistillWeights::goal_preset();
      } else if (preset == "object") {
        p = DistillWeights::object_preset();
      } else if (preset == "spatial") {
        p = DistillWeights::spatial_preset();
      } else {
        throw ConfigError("unknown preset: " + preset);
      }
      c.weights.lambda_i = p.lambda_i;
      c.weights.lambda_t = p.lambda_t;
      c.weights.lambda_e = p.lambda_e;
      c.weights.lambda_p = p.lambda_p;
    }
    c.weights.lambda_i = j.value("lambda_i", c.weights.lambda_i);
    c.weights.lambda_t = j.value("lambda_t", c.weights.lambda_t);
    c.weights.lambda_e = j.value("lambda_e", c.weights.lambda_e);
    c.weights.lambda_p = j.value("lambda_p", c.weights.lambda_p);
    c.weights.rank_r = unsigned_field(j, "rank_r", c.weights.rank_r, kMaxCount);
    c.weights.top_m_fraction = j.value("top_m_fraction", c.weights.top_m_fraction);
    if (j.contains("method")) {
      const auto name = j.at("method").get<std::string>();
      auto m = parse_method(name);
      if (!m) throw ConfigError("unknown method: " + name);
      c.method = *m;
    }
    c.eval_episodes = unsigned_field(j, "eval_episodes", c.eval_episodes, kMaxCount);
    c.eval_every_epoch = j.value("eval_every_epoch", c.eval_every_epoch);
    c.replay_capacity = unsigned_field(j, "replay_capacity", c.replay_capacity, kMaxCount);
    c.nbt_exclude_last = j.value("nbt_exclude_last", c.nbt_exclude_last);
    c.probe_size = unsigned_field(j, "probe_size", c.probe_size, kMaxCount);
    if (j.value("differentiate_basis", false)) {
      throw ConfigError("differentiate_basis is not supported: bases are constants");
    }
    if (j.contains("suite")) c.suite = j.at("suite").get<SuiteConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("config {} is not valid JSON: {}", path.string(), e.what()));
  }
  return config_from_json(j);
}

std::string config_hash(const RunConfig& config) {
  return fnv1a_hex(config_to_json(config).dump());
}

void ReplayBuffer::add_task(std::size_t task_id,
                            const std::vector<Demonstration>& demos, Rng& rng) {
  if (contains(task_id)) {
    throw ParameterError(fmt::format("replay buffer already holds task {}", task_id));
  }
  if (demos.empty()) throw ParameterError("replay buffer: no demonstrations");
  std::vector<std::size_t> order(demos.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(capacity_, demos.size()));
  std::sort(order.begin(), order.end());
  auto& stored = store_[task_id];
  for (auto i : order) stored.push_back(demos[i]);
}

std::vector<std::size_t> ReplayBuffer::tasks() const {
  std::vector<std::size_t> ids;
  for (const auto& [id, demos] : store_) ids.push_back(id);
  return ids;
}

std::size_t ReplayBuffer::size(std::size_t task_id) const {
  auto it = store_.find(task_id);
  return it == store_.end() ? 0 : it->second.size();
}

ReplayBuffer::Draw ReplayBuffer::sample(Rng& rng) const {
  if (store_.empty()) throw ParameterError("replay buffer is empty");
  auto it = store_.begin();
  std::advance(it, static_cast<std::ptrdiff_t>(uniform_index(rng, store_.size())));
  const auto& demos = it->second;
  return Draw{it->first, &demos[uniform_index(rng, demos.size())]};
}

std::vector<std::size_t> window_indices(const Demonstration& demo,
                                        std::size_t start, std::size_t length) {
  if (demo.length() == 0) throw DataError("empty demonstration");
  std::vector<std::size_t> idx(length);
  for (std::size_t i = 0; i < length; ++i) {
    idx[i] = std::min(start + i, demo.length() - 1);
  }
  return idx;
}

TrainingBatch make_batch(
    const std::vector<TaskSpec>& suite,
    const std::vector<std::pair<const Demonstration*, std::size_t>>& windows,
    std::size_t window_length, Rng& rng) {
  if (windows.empty()) throw ParameterError("make_batch: no windows");
  // Group consecutive windows of the same task so each group is observed
  // with one call.
  std::vector<ObservationBatch> parts;
  TrainingBatch batch;
  const auto rows = static_cast<Eigen::Index>(windows.size() * window_length);
  batch.actions.resize(rows, kActionDim);
  Eigen::Index row = 0;
  std::size_t w = 0;
  while (w < windows.size()) {
    const std::size_t task_id = windows[w].first->task_id;
    if (task_id < 1 || task_id > suite.size()) {
      throw DataError(fmt::format("demonstration of unknown task {}", task_id));
    }
    std::size_t end = w;
    while (end < windows.size() && windows[end].first->task_id == task_id) ++end;
    Eigen::MatrixXd states(static_cast<Eigen::Index>((end - w) * window_length),
                           kStateDim);
    Eigen::Index local = 0;
    for (std::size_t i = w; i < end; ++i) {
      const auto& [demo, start] = windows[i];
      for (auto t : window_indices(*demo, start, window_length)) {
        const auto ti = static_cast<Eigen::Index>(t);
        states.row(local++) = demo->states.row(ti);
        batch.actions.row(row++) = demo->actions.row(ti);
        batch.task_ids.push_back(task_id);
      }
    }
    parts.push_back(observe_batch(suite[task_id - 1], states, rng));
    w = end;
  }
  batch.obs = concat_rows(parts);
  return batch;
}

Tensor bc_loss(const PolicyModel& policy, const TrainingBatch& batch) {
  if (batch.rows() == 0) throw ParameterError("bc_loss: empty batch");
  try {
    const PolicyOutput out = policy.forward(batch.obs);
    return scale(mean(log_prob(out.gmm, Tensor::from_matrix(batch.actions))), -1.0);
  } catch (const EvaluationError& e) {
    throw TrainingError(fmt::format("non-finite behaviour cloning loss over {} rows: {}",
                                    batch.rows(), e.what()));
  }
}

ObjectiveTerms compute_objective(const PolicyModel& student,
                                 const PolicyModel* teacher,
                                 const TrainingBatch& batch,
                                 const DistillWeights& weights, Rng& rng) {
  if (batch.rows() == 0) throw ParameterError("compute_objective: empty batch");
  ObjectiveTerms terms;
  try {
    const PolicyOutput s = student.forward(batch.obs);
    Tensor total = scale(mean(log_prob(s.gmm, Tensor::from_matrix(batch.actions))), -1.0);
    terms.bc = total.item();

    const bool features = teacher && weights.any_feature_term();
    const bool policy = teacher && weights.lambda_p != 0.0;
    if (features || policy) {
      PolicyOutput t;
      {
        NoGradGuard guard;
        t = teacher->forward(batch.obs);
      }
      if (features) {
        std::vector<ModalityFeatures> tf, sf;
        for (auto m : kModalities) {
          tf.push_back({m, transpose(t.latents[index_of(m)]), FeatureSource::Teacher});
          sf.push_back({m, transpose(s.latents[index_of(m)]), FeatureSource::Student});
        }
        SpreadDiagnostics diag;
        const ModalityLosses losses = modality_loss(tf, sf, weights.rank_r, &diag);
        terms.teacher_degenerate = diag.teacher_degenerate;
        terms.student_degenerate = diag.student_degenerate;
        terms.image = losses.image.item();
        terms.text = losses.text.item();
        terms.extra = losses.extra.item();
        if (weights.lambda_i != 0.0) total = add(total, scale(losses.image, weights.lambda_i));
        if (weights.lambda_t != 0.0) total = add(total, scale(losses.text, weights.lambda_t));
        if (weights.lambda_e != 0.0) total = add(total, scale(losses.extra, weights.lambda_e));
      }
      if (policy) {
        Tensor p = policy_distill_loss(s.gmm, t.gmm.detached(), batch.rows(),
                                       weights.top_m_fraction, rng);
        terms.policy = p.item();
        total = add(total, scale(p, weights.lambda_p));
      }
    }
    terms.total = total;
  } catch (const EvaluationError& e) {
    throw TrainingError(fmt::format("non-finite objective over {} rows: {}",
                                    batch.rows(), e.what()));
  }
  return terms;
}

namespace {

class Experiment {
 public:
  Experiment(const RunConfig& config, const RunOptions& options)
      : config_(config),
        options_(options),
        weights_(config.effective_weights()),
        log_(options.logger ? options.logger : quiet_logger()),
        buffer_(config.replay_capacity) {}

  MetricsReport run();

 private:
  void train_task(std::size_t k);
  double evaluate(const TaskSpec& task, std::size_t tau, std::size_t k,
                  std::size_t epoch) const;
  std::vector<std::pair<const Demonstration*, std::size_t>> draw_windows(
      std::size_t k, Rng& rng, StepRecord& record) const;
  void finish_summary();

  const RunConfig& config_;
  const RunOptions& options_;
  DistillWeights weights_;
  std::shared_ptr<spdlog::logger> log_;

  std::vector<TaskSpec> suite_;
  std::vector<std::vector<Demonstration>> demos_;
  PolicyModel student_;
  std::unique_ptr<Adam> adam_;
  ReplayBuffer buffer_;
  ObservationBatch probe_;
  std::vector<ProbeLatents> probe_history_;
  std::size_t total_steps_ = 0;
  MetricsReport report_;
};

double Experiment::evaluate(const TaskSpec& task, std::size_t tau, std::size_t k,
                            std::size_t epoch) const {
  Rng rng = make_rng(config_.train_seed, {kEvalStream, tau, k, epoch});
  ModelPolicy policy(student_);
  return rollout_success_rate(policy, task, config_.eval_episodes, rng);
}

std::vector<std::pair<const Demonstration*, std::size_t>> Experiment::draw_windows(
    std::size_t k, Rng& rng, StepRecord& record) const {
  const std::size_t total = config_.windows_per_batch;
  const bool replay = config_.replay_enabled() && !buffer_.empty();
  const std::size_t current = replay ? (total + 1) / 2 : total;
  const auto& demos = demos_[k - 1];
  std::vector<std::pair<const Demonstration*, std::size_t>> windows;
  for (std::size_t i = 0; i < current; ++i) {
    const Demonstration& d = demos[uniform_index(rng, demos.size())];
    windows.emplace_back(&d, window_start(d, config_.window_length, rng));
  }
  for (std::size_t i = current; i < total; ++i) {
    const auto draw = buffer_.sample(rng);
    if (draw.task_id >= k) {
      throw TrainingError(fmt::format("replay buffer holds task {} while training task {}",
                                      draw.task_id, k));
    }
    record.replay_tasks.push_back(draw.task_id);
    windows.emplace_back(draw.demo, window_start(*draw.demo, config_.window_length, rng));
  }
  return windows;
}

void Experiment::train_task(std::size_t k) {
  const TaskSpec& task = suite_[k - 1];
  auto& success = report_.success;
  const std::size_t E = config_.epochs;

  std::optional<PolicyModel> teacher;
  std::uint64_t teacher_sum = 0;
  const bool wants_teacher = weights_.any_feature_term() || weights_.lambda_p != 0.0;
  if (k > 1 && wants_teacher) {
    teacher = student_.snapshot();
    teacher_sum = teacher->checksum();
  }

  success.c_diag(k - 1, 0) = evaluate(task, k, k, 0);
  log_->info("task {} epoch 0 success {}", k, success.c_diag(k - 1, 0));

  const bool replay = config_.replay_enabled() && !buffer_.empty();
  const std::size_t current_windows =
      replay ? (config_.windows_per_batch + 1) / 2 : config_.windows_per_batch;
  std::size_t transitions = 0;
  for (const auto& d : demos_[k - 1]) transitions += d.length();
  const std::size_t current_rows = current_windows * config_.window_length;
  const std::size_t steps_per_epoch = (transitions + current_rows - 1) / current_rows;

  Rng batch_rng = make_rng(config_.train_seed, {kBatchStream, k});
  Rng distill_rng = make_rng(config_.train_seed, {kDistillStream, k});
  bool warned_degenerate = false;

  for (std::size_t e = 1; e <= E; ++e) {
    double epoch_loss = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      StepRecord rec;
      rec.task = k;
      rec.epoch = e;
      rec.step = s;
      const auto windows = draw_windows(k, batch_rng, rec);
      const TrainingBatch batch =
          make_batch(suite_, windows, config_.window_length, batch_rng);
      ++total_steps_;
      try {
        ObjectiveTerms terms = compute_objective(
            student_, teacher ? &*teacher : nullptr, batch, weights_, distill_rng);
        if (terms.teacher_degenerate || terms.student_degenerate) {
          ++report_.degenerate_bases;
          if (!warned_degenerate) {
            log_->warn("task {}: rank-{} subspace is not well separated "
                       "(teacher {}, student {})",
                       k, weights_.rank_r, terms.teacher_degenerate,
                       terms.student_degenerate);
            warned_degenerate = true;
          }
        }
        adam_->zero_grad();
        terms.total.backward();
        adam_->step();
        rec.total = terms.total.item();
        rec.bc = terms.bc;
        rec.image = terms.image;
        rec.text = terms.text;
        rec.extra = terms.extra;
        rec.policy = terms.policy;
        epoch_loss += rec.total;
      } catch (const NumericalError& err) {
        rec.skipped = true;
        ++report_.skipped_steps;
        log_->warn("task {} epoch {} step {} skipped: {}", k, e, s, err.what());
      }
      if (teacher && teacher->checksum() != teacher_sum) {
        throw TrainingError(fmt::format("teacher parameters changed during task {}", k));
      }
      if (options_.hooks.on_step) {
        options_.hooks.on_step(rec, student_, teacher ? &*teacher : nullptr);
      }
      if (options_.keep_step_log) report_.steps.push_back(std::move(rec));
    }
    if (config_.eval_every_epoch || e == E) {
      success.c_diag(k - 1, e) = evaluate(task, k, k, e);
    }
    log_->info("task {} epoch {} mean loss {:.6f} success {}", k, e,
               epoch_loss / static_cast<double>(steps_per_epoch),
               success.c_diag(k - 1, e));
  }
  if (static_cast<double>(report_.skipped_steps) >
      kMaxSkippedFraction * static_cast<double>(total_steps_)) {
    throw TrainingError(fmt::format("{} of {} steps skipped after SVD failures",
                                    report_.skipped_steps, total_steps_));
  }

  success.c_cross(k - 1, k - 1) = success.c_diag(k - 1, E);
  for (std::size_t j = 1; j < k; ++j) {
    success.c_cross(k - 1, j - 1) = evaluate(suite_[j - 1], k, j, E);
  }
  if (config_.replay_enabled()) {
    Rng rng = make_rng(config_.train_seed, {kReplayStream, k});
    buffer_.add_task(k, demos_[k - 1], rng);
  }
  probe_history_.push_back(probe_latents(student_, probe_));
  if (options_.hooks.on_task_end) options_.hooks.on_task_end(k, student_, buffer_);
}

void Experiment::finish_summary() {
  report_.drift = drift(probe_history_);
  report_.summary = summarize(report_.success, config_.nbt_exclude_last,
                              config_.train_seed, config_hash(config_));
}

MetricsReport Experiment::run() {
  config_.validate();
  report_.success = SuccessRecord::empty(config_.num_tasks, config_.epochs);
  log_->info("{} run: K={} N={} epochs={} seeds suite={} train={}",
             method_name(config_.method), config_.num_tasks,
             config_.demos_per_task, config_.epochs, config_.suite_seed,
             config_.train_seed);
  try {
    suite_ = generate_suite(config_.suite_seed, config_.num_tasks, config_.suite);
    for (const auto& task : suite_) {
      Rng rng = make_rng(config_.train_seed, {kDemoStream, task.task_id});
      demos_.push_back(expert_demos(task, config_.demos_per_task, rng));
    }
    {
      Rng rng = make_rng(config_.train_seed, {kProbeStream});
      Eigen::MatrixXd states(static_cast<Eigen::Index>(config_.probe_size), kStateDim);
      for (Eigen::Index i = 0; i < states.rows(); ++i) {
        const auto& d = demos_[0][uniform_index(rng, demos_[0].size())];
        states.row(i) = d.states.row(static_cast<Eigen::Index>(uniform_index(rng, d.length())));
      }
      probe_ = observe_batch(suite_[0], states, rng);
    }
    student_ = PolicyModel(ModelConfig::for_suite(config_.suite),
                           derive_seed(config_.train_seed, {kInitStream}));
    adam_ = std::make_unique<Adam>(student_.parameters(), config_.optimizer);
    probe_history_.push_back(probe_latents(student_, probe_));

    for (std::size_t k = 1; k <= config_.num_tasks; ++k) train_task(k);
  } catch (const Error& e) {
    log_->error("run failed: {}", e.what());
    if (options_.out_dir) {
      try {
        finish_summary();
      } catch (const Error&) {
        report_.summary = MetricsSummary{};
      }
      write_report(*options_.out_dir, config_, report_);
      std::ofstream marker(*options_.out_dir / "FAILED");
      marker << e.what() << '\n';
    }
    throw;
  }
  finish_summary();
  report_.complete = true;
  log_->info("finished: fwt {} nbt {} auc {}",
             report_.summary.fwt ? fmt::format("{:.4f}", *report_.summary.fwt) : "null",
             report_.summary.nbt ? fmt::format("{:.4f}", *report_.summary.nbt) : "null",
             report_.summary.auc ? fmt::format("{:.4f}", *report_.summary.auc) : "null");
  if (options_.out_dir) {
    write_report(*options_.out_dir, config_, report_);
    std::filesystem::remove(*options_.out_dir / "FAILED");
  }
  return std::move(report_);
}

}  // namespace

MetricsReport run_experiment(const RunConfig& config, const RunOptions& options) {
  Experiment experiment(config, options);
  return experiment.run();
}

void write_report(const std::filesystem::path& dir, const RunConfig& config,
                  const MetricsReport& report) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "config.json", std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / "config.json").string());
    out << config_to_json(config).dump(2) << '\n';
  }
  write_success_matrix(dir / "success_matrix.csv", report.success);
  write_success_curve(dir / "success_curve.csv", report.success);
  write_drift(dir / "drift.csv", report.drift);
  write_metrics_json(dir / "metrics.json", report.summary);
}

}  // namespace spread
