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

#include "spread/suite.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "spread/errors.hpp"

namespace spread {

namespace {

constexpr int kPlacementAttempts = 10000;
constexpr int kExpertRetries = 20;

Eigen::Vector2d clip_box(const Eigen::Vector2d& v, double bound) {
  return v.cwiseMax(-bound).cwiseMin(bound);
}

double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

ObservationMap random_map(Rng& rng, std::size_t width, double scale) {
  std::normal_distribution<double> normal(0.0, 1.0);
  ObservationMap map;
  map.weight.resize(static_cast<Eigen::Index>(width), kStateDim);
  map.bias.resize(static_cast<Eigen::Index>(width));
  for (Eigen::Index i = 0; i < map.weight.size(); ++i) {
    map.weight.data()[i] = scale * normal(rng);
  }
  for (Eigen::Index i = 0; i < map.bias.size(); ++i) {
    map.bias[i] = 0.5 * normal(rng);
  }
  return map;
}

Eigen::VectorXd random_unit_vector(Rng& rng, std::size_t width) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(width));
  do {
    for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  } while (v.norm() < 1e-8);
  return v / v.norm();
}

std::vector<State> place_goals(Rng& rng, std::size_t count,
                               const SuiteConfig& config) {
  for (int restart = 0; restart < 100; ++restart) {
    std::vector<State> goals;
    int attempts = 0;
    while (goals.size() < count && attempts < kPlacementAttempts) {
      ++attempts;
      State g(uniform(rng, -config.goal_extent, config.goal_extent),
              uniform(rng, -config.goal_extent, config.goal_extent));
      bool ok = std::all_of(goals.begin(), goals.end(), [&](const State& o) {
        return (o - g).norm() >= config.min_goal_separation;
      });
      if (ok) goals.push_back(g);
    }
    if (goals.size() == count) return goals;
  }
  throw GenerationError("cannot place " + std::to_string(count) +
                        " goals with separation " +
                        std::to_string(config.min_goal_separation));
}

State place_start(Rng& rng, const State& goal, const SuiteConfig& config) {
  const double bound = 1.0 - config.start_half_width;
  for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
    State c(uniform(rng, -bound, bound), uniform(rng, -bound, bound));
    if ((c - goal).norm() >= config.min_start_goal_distance) return c;
  }
  throw GenerationError("cannot place a start region away from the goal");
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const auto rows = j.size();
  const auto cols = rows == 0 ? 0 : j[0].size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    if (j[r].size() != cols) throw DataError("ragged matrix in suite file");
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
  auto out = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    out.push_back(std::move(row));
  }
  return out;
}

Eigen::VectorXd json_vector(const nlohmann::json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v[i] = j[i].get<double>();
  return v;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

void SuiteConfig::validate() const {
  auto fail = [](const std::string& what) {
    throw ParameterError("suite config: " + what);
  };
  if (!(goal_radius > 0)) fail("goal_radius must be positive");
  if (horizon < 1) fail("horizon must be at least 1");
  if (!(max_action > 0)) fail("max_action must be positive");
  if (!(obs_noise_sigma >= 0)) fail("obs_noise_sigma must be non-negative");
  if (!(expert_gain > 0 && expert_gain <= 1)) fail("expert_gain must be in (0, 1]");
  if (!(expert_noise >= 0)) fail("expert_noise must be non-negative");
  if (!(goal_extent > 0 && goal_extent <= 1)) fail("goal_extent must be in (0, 1]");
  if (!(min_goal_separation >= 2 * goal_radius)) {
    fail("min_goal_separation must be at least 2 * goal_radius");
  }
  if (!(start_half_width >= 0 && start_half_width < 1)) {
    fail("start_half_width must be in [0, 1)");
  }
  if (!(min_start_goal_distance >= 0)) fail("min_start_goal_distance must be non-negative");
  if (visual_width < 1 || embedding_width < 1) fail("widths must be positive");
}

void to_json(nlohmann::json& j, const SuiteConfig& c) {
  j = nlohmann::json{{"goal_radius", c.goal_radius},
                     {"horizon", c.horizon},
                     {"max_action", c.max_action},
                     {"obs_noise_sigma", c.obs_noise_sigma},
                     {"expert_gain", c.expert_gain},
                     {"expert_noise", c.expert_noise},
                     {"goal_extent", c.goal_extent},
                     {"min_goal_separation", c.min_goal_separation},
                     {"start_half_width", c.start_half_width},
                     {"min_start_goal_distance", c.min_start_goal_distance},
                     {"visual_width", c.visual_width},
                     {"embedding_width", c.embedding_width},
                     {"visual_weight_scale", c.visual_weight_scale}};
}

void from_json(const nlohmann::json& j, SuiteConfig& c) {
  static const char* const kKeys[] = {
      "goal_radius",        "horizon",          "max_action",
      "obs_noise_sigma",    "expert_gain",      "expert_noise",
      "goal_extent",        "min_goal_separation", "start_half_width",
      "min_start_goal_distance", "visual_width", "embedding_width",
      "visual_weight_scale"};
  if (!j.is_object()) throw ConfigError("suite config must be an object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) {
          return key == k;
        }) == std::end(kKeys)) {
      throw ConfigError("unknown suite config key: " + key);
    }
  }
  try {
    c.goal_radius = j.value("goal_radius", c.goal_radius);
    if (j.contains("horizon")) {
      if (!j.at("horizon").is_number_unsigned() || j.at("horizon").get<std::uint64_t>() > 100000) {
        throw ConfigError("suite config: horizon must be a non-negative integer");
      }
      c.horizon = j.at("horizon").get<std::size_t>();
    }
    c.max_action = j.value("max_action", c.max_action);
    c.obs_noise_sigma = j.value("obs_noise_sigma", c.obs_noise_sigma);
    c.expert_gain = j.value("expert_gain", c.expert_gain);
    c.expert_noise = j.value("expert_noise", c.expert_noise);
    c.goal_extent = j.value("goal_extent", c.goal_extent);
    c.min_goal_separation = j.value("min_goal_separation", c.min_goal_separation);
    c.start_half_width = j.value("start_half_width", c.start_half_width);
    c.min_start_goal_distance =
        j.value("min_start_goal_distance", c.min_start_goal_distance);
    if (j.contains("visual_width")) {
      if (!j.at("visual_width").is_number_unsigned() || j.at("visual_width").get<std::uint64_t>() > 100000) {
        throw ConfigError("suite config: visual_width must be a non-negative integer");
      }
      c.visual_width = j.at("visual_width").get<std::size_t>();
    }
    if (j.contains("embedding_width")) {
      if (!j.at("embedding_width").is_number_unsigned() || j.at("embedding_width").get<std::uint64_t>() > 100000) {
        throw ConfigError("suite config: embedding_width must be a non-negative integer");
      }
      c.embedding_width = j.at("embedding_width").get<std::size_t>();
    }
    c.visual_weight_scale = j.value("visual_weight_scale", c.visual_weight_scale);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("suite config: ") + e.what());
  }
}

State TaskSpec::sample_initial_state(Rng& rng) const {
  return State(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)) *
             start_half_width +
         start_center;
}

Eigen::Vector2d TaskSpec::clip_action(const Eigen::Vector2d& a) const {
  return clip_box(a, max_action);
}

State TaskSpec::step(const State& s, const Eigen::Vector2d& action) const {
  return clip_box(s + clip_action(action), 1.0);
}

Eigen::Vector2d TaskSpec::expert_action(const State& s) const {
  return clip_action(expert_gain * (goal - s));
}

std::size_t modality_width(Modality m, const SuiteConfig& config) {
  switch (m) {
    case Modality::AgentView:
    case Modality::HandEye:
      return config.visual_width;
    case Modality::Text:
      return config.embedding_width;
    case Modality::Joint:
      return kStateDim;
    case Modality::Gripper:
      return 1;
  }
  throw ParameterError("unknown modality");
}

ObservationBatch observe_batch(const TaskSpec& task,
                               const Eigen::Ref<const Eigen::MatrixXd>& states,
                               Rng& rng) {
  if (states.cols() != static_cast<Eigen::Index>(kStateDim)) {
    throw DimensionError("observe_batch: states must have " +
                         std::to_string(kStateDim) + " columns");
  }
  const Eigen::Index n = states.rows();
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sigma = task.obs_noise_sigma;
  auto noisy = [&](Eigen::MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) += sigma * normal(rng);
    }
  };

  ObservationBatch out;
  auto& agent = out[Modality::AgentView];
  auto& hand = out[Modality::HandEye];
  agent.resize(n, task.agent_view.weight.rows());
  hand.resize(n, task.hand_eye.weight.rows());
  for (Eigen::Index r = 0; r < n; ++r) {
    const State s = states.row(r).transpose();
    agent.row(r) = task.agent_view.apply(s).transpose();
    hand.row(r) = task.hand_eye.apply(s).transpose();
  }
  noisy(agent);
  noisy(hand);

  out[Modality::Text] =
      task.task_embedding.transpose().replicate(n, 1);

  out[Modality::Joint] = states;
  noisy(out[Modality::Joint]);

  auto& grip = out[Modality::Gripper];
  grip.resize(n, 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    grip(r, 0) = (task.goal - states.row(r).transpose()).norm();
  }
  noisy(grip);
  return out;
}

ObservationBatch observe(const TaskSpec& task, const State& state, Rng& rng) {
  Eigen::MatrixXd row = state.transpose();
  return observe_batch(task, row, rng);
}

ObservationBatch concat_rows(const std::vector<ObservationBatch>& parts) {
  if (parts.empty()) throw ParameterError("concat_rows: no batches");
  ObservationBatch out;
  for (std::size_t m = 0; m < out.channels.size(); ++m) {
    Eigen::Index rows = 0;
    const Eigen::Index cols = parts.front().channels[m].cols();
    for (const auto& p : parts) {
      if (p.channels[m].cols() != cols) {
        throw DimensionError("concat_rows: channel widths differ");
      }
      rows += p.channels[m].rows();
    }
    out.channels[m].resize(rows, cols);
    Eigen::Index at = 0;
    for (const auto& p : parts) {
      out.channels[m].middleRows(at, p.channels[m].rows()) = p.channels[m];
      at += p.channels[m].rows();
    }
  }
  return out;
}

State Demonstration::final_state(const TaskSpec& task) const {
  if (length() == 0) throw DataError("empty demonstration");
  const auto last = states.rows() - 1;
  return task.step(states.row(last).transpose(), actions.row(last).transpose());
}

std::vector<TaskSpec> generate_suite(std::uint64_t suite_seed,
                                     std::size_t num_tasks,
                                     const SuiteConfig& config) {
  if (num_tasks < 1) throw ParameterError("generate_suite: K must be >= 1");
  config.validate();
  Rng layout = make_rng(suite_seed, {0});
  const auto goals = place_goals(layout, num_tasks, config);

  std::vector<TaskSpec> suite;
  suite.reserve(num_tasks);
  for (std::size_t k = 1; k <= num_tasks; ++k) {
    Rng rng = make_rng(suite_seed, {1, k});
    TaskSpec t;
    t.task_id = k;
    t.goal = goals[k - 1];
    t.start_center = place_start(rng, t.goal, config);
    t.start_half_width = config.start_half_width;
    t.goal_radius = config.goal_radius;
    t.horizon = config.horizon;
    t.task_embedding = random_unit_vector(rng, config.embedding_width);
    t.agent_view = random_map(rng, config.visual_width, config.visual_weight_scale);
    t.hand_eye = random_map(rng, config.visual_width, config.visual_weight_scale);
    t.obs_noise_sigma = config.obs_noise_sigma;
    t.max_action = config.max_action;
    t.expert_gain = config.expert_gain;
    t.expert_noise = config.expert_noise;
    suite.push_back(std::move(t));
  }
  return suite;
}

std::vector<Demonstration> expert_demos(const TaskSpec& task, std::size_t count,
                                        Rng& rng) {
  if (count < 1) throw ParameterError("expert_demos: N must be >= 1");
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t max_len = task.horizon > 1 ? task.horizon - 1 : 1;
  const int budget = kExpertRetries;

  std::vector<Demonstration> demos;
  demos.reserve(count);
  std::vector<State> states;
  std::vector<Eigen::Vector2d> actions;
  for (std::size_t i = 0; i < count; ++i) {
    bool done = false;
    for (int attempt = 0; attempt <= budget && !done; ++attempt) {
      states.clear();
      actions.clear();
      State s = task.sample_initial_state(rng);
      while (states.size() < max_len) {
        Eigen::Vector2d a = task.expert_action(s);
        a += task.expert_noise * Eigen::Vector2d(normal(rng), normal(rng));
        a = task.clip_action(a);
        states.push_back(s);
        actions.push_back(a);
        s = task.step(s, a);
        if (task.is_success(s)) {
          done = true;
          break;
        }
      }
    }
    if (!done) {
      throw GenerationError("expert failed to reach the goal of task " +
                            std::to_string(task.task_id) + " after " +
                            std::to_string(budget + 1) + " attempts");
    }
    Demonstration d;
    d.task_id = task.task_id;
    d.states.resize(static_cast<Eigen::Index>(states.size()), kStateDim);
    d.actions.resize(static_cast<Eigen::Index>(actions.size()), kActionDim);
    for (std::size_t t = 0; t < states.size(); ++t) {
      d.states.row(static_cast<Eigen::Index>(t)) = states[t].transpose();
      d.actions.row(static_cast<Eigen::Index>(t)) = actions[t].transpose();
    }
    demos.push_back(std::move(d));
  }
  return demos;
}

Eigen::MatrixXd ExpertPolicy::act(const ObservationBatch&,
                                  const Eigen::MatrixXd& states) {
  Eigen::MatrixXd out(states.rows(), kActionDim);
  for (Eigen::Index r = 0; r < states.rows(); ++r) {
    out.row(r) = task_.expert_action(states.row(r).transpose()).transpose();
  }
  return out;
}

Eigen::MatrixXd RandomPolicy::act(const ObservationBatch&,
                                  const Eigen::MatrixXd& states) {
  Eigen::MatrixXd out(states.rows(), kActionDim);
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out.data()[i] = uniform(rng_, -max_action_, max_action_);
  }
  return out;
}

double rollout_success_rate(Policy& policy, const TaskSpec& task,
                            std::size_t episodes, Rng& rng) {
  if (episodes < 1) throw ParameterError("rollout_success_rate: episodes must be >= 1");
  const auto n = static_cast<Eigen::Index>(episodes);
  Eigen::MatrixXd states(n, kStateDim);
  for (Eigen::Index e = 0; e < n; ++e) {
    states.row(e) = task.sample_initial_state(rng).transpose();
  }
  std::vector<char> reached(episodes, 0);
  for (std::size_t t = 0; t < task.horizon; ++t) {
    const ObservationBatch obs = observe_batch(task, states, rng);
    const Eigen::MatrixXd actions = policy.act(obs, states);
    if (actions.rows() != n || actions.cols() != static_cast<Eigen::Index>(kActionDim)) {
      throw DimensionError("policy returned actions of the wrong shape");
    }
    if (!actions.allFinite()) throw EvaluationError("policy returned a non-finite action");
    for (Eigen::Index e = 0; e < n; ++e) {
      const State next =
          task.step(states.row(e).transpose(), actions.row(e).transpose());
      states.row(e) = next.transpose();
      if (task.is_success(next)) reached[static_cast<std::size_t>(e)] = 1;
    }
  }
  const auto hits = std::count(reached.begin(), reached.end(), 1);
  return static_cast<double>(hits) / static_cast<double>(episodes);
}

nlohmann::json suite_to_json(const std::vector<TaskSpec>& suite,
                             std::uint64_t suite_seed,
                             const SuiteConfig& config) {
  nlohmann::json tasks = nlohmann::json::array();
  for (const auto& t : suite) {
    tasks.push_back({{"task_id", t.task_id},
                     {"start_center", vector_json(t.start_center)},
                     {"start_half_width", t.start_half_width},
                     {"goal", vector_json(t.goal)},
                     {"goal_radius", t.goal_radius},
                     {"task_embedding", vector_json(t.task_embedding)},
                     {"horizon", t.horizon},
                     {"agent_view", {{"weight", matrix_json(t.agent_view.weight)},
                                     {"bias", vector_json(t.agent_view.bias)}}},
                     {"hand_eye", {{"weight", matrix_json(t.hand_eye.weight)},
                                   {"bias", vector_json(t.hand_eye.bias)}}},
                     {"obs_noise_sigma", t.obs_noise_sigma},
                     {"max_action", t.max_action},
                     {"expert_gain", t.expert_gain},
                     {"expert_noise", t.expert_noise}});
  }
  return {{"suite_seed", suite_seed}, {"config", config}, {"tasks", tasks}};
}

std::vector<TaskSpec> suite_from_json(const nlohmann::json& j) {
  std::vector<TaskSpec> suite;
  try {
    for (const auto& e : j.at("tasks")) {
      TaskSpec t;
      t.task_id = e.at("task_id").get<std::size_t>();
      t.start_center = json_vector(e.at("start_center"));
      t.start_half_width = e.at("start_half_width").get<double>();
      t.goal = json_vector(e.at("goal"));
      t.goal_radius = e.at("goal_radius").get<double>();
      t.task_embedding = json_vector(e.at("task_embedding"));
      t.horizon = e.at("horizon").get<std::size_t>();
      t.agent_view.weight = json_matrix(e.at("agent_view").at("weight"));
      t.agent_view.bias = json_vector(e.at("agent_view").at("bias"));
      t.hand_eye.weight = json_matrix(e.at("hand_eye").at("weight"));
      t.hand_eye.bias = json_vector(e.at("hand_eye").at("bias"));
      t.obs_noise_sigma = e.at("obs_noise_sigma").get<double>();
      t.max_action = e.at("max_action").get<double>();
      t.expert_gain = e.at("expert_gain").get<double>();
      t.expert_noise = e.at("expert_noise").get<double>();
      suite.push_back(std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed suite: ") + e.what());
  }
  return suite;
}

void save_suite(const std::filesystem::path& path,
                const std::vector<TaskSpec>& suite, std::uint64_t suite_seed,
                const SuiteConfig& config) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << suite_to_json(suite, suite_seed, config).dump(2) << '\n';
}

std::vector<TaskSpec> load_suite(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed suite: ") + e.what());
  }
  return suite_from_json(j);
}

}  // namespace spread
