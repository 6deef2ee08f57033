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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "spread/model.hpp"

namespace spread {

// Success rates of a lifelong run. Tasks and epochs are stored 0-based:
// c_diag(k, e) is task k+1 at epoch e of its own training and
// c_cross(tau, k) is task k+1 after training task tau+1. Unmeasured
// entries are NaN.
struct SuccessRecord {
  std::size_t num_tasks = 0;
  std::size_t epochs = 0;
  Eigen::MatrixXd c_diag;   // K x (E+1)
  Eigen::MatrixXd c_cross;  // K x K, lower triangle

  static SuccessRecord empty(std::size_t num_tasks, std::size_t epochs);

  /// Throws DataError for shape mismatches, values outside [0, 1], or a
  /// final diagonal entry that disagrees with the cross matrix.
  void validate() const;
  bool diag_complete() const;
  bool cross_complete() const;
};

/// Epoch-averaged success of every task. Throws DataError if incomplete.
Eigen::VectorXd per_task_fwt(const SuccessRecord& record);
double fwt(const SuccessRecord& record);
/// Undefined (nullopt) for a single task. With exclude_last the average runs
/// over k < K instead of including the empty k = K term.
std::optional<double> nbt(const SuccessRecord& record, bool exclude_last = false);
double auc(const SuccessRecord& record);

/// series[m][s] is the mean latent distance for modality m between the
/// snapshots before and after incremental step s+1.
struct DriftRecord {
  std::array<std::vector<double>, 5> series;

  std::size_t steps() const { return series[0].size(); }
  /// Mean over steps; 0 when there are none.
  double mean(Modality m) const;
};

/// Mean row-wise Euclidean distance between two latent matrices.
double mean_row_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

using ProbeLatents = std::array<Eigen::MatrixXd, 5>;

ProbeLatents probe_latents(const PolicyModel& model, const ObservationBatch& probe);
/// Drift between consecutive entries of a sequence of probe encodings.
DriftRecord drift(const std::vector<ProbeLatents>& sequence);
DriftRecord drift(const std::vector<PolicyModel>& snapshots,
                  const ObservationBatch& probe);

struct MetricsSummary {
  std::optional<double> fwt;
  std::optional<double> nbt;
  std::optional<double> auc;
  std::vector<double> per_task_fwt;
  std::uint64_t seed = 0;
  std::string config_hash;
};

MetricsSummary summarize(const SuccessRecord& record, bool nbt_exclude_last,
                         std::uint64_t seed, std::string config_hash);

/// 64-bit FNV-1a of the text, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

void write_success_matrix(const std::filesystem::path& path,
                          const SuccessRecord& record);
void write_success_curve(const std::filesystem::path& path,
                         const SuccessRecord& record);
void write_drift(const std::filesystem::path& path, const DriftRecord& record);
nlohmann::json metrics_to_json(const MetricsSummary& summary);
void write_metrics_json(const std::filesystem::path& path,
                        const MetricsSummary& summary);
MetricsSummary read_metrics_json(const std::filesystem::path& path);

}  // namespace spread
