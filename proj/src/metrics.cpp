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

#include "spread/metrics.hpp"

#include <cmath>
#include <limits>
#include <fstream>

#include <fmt/format.h>

#include "spread/errors.hpp"

namespace spread {

namespace {

bool all_finite(const Eigen::MatrixXd& m) { return m.allFinite(); }

std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

void require_complete(const SuccessRecord& r, bool need_diag, bool need_cross) {
  r.validate();
  if (r.num_tasks == 0) throw DataError("success record has no tasks");
  if (need_diag && !r.diag_complete()) throw DataError("success record: missing per-epoch entries");
  if (need_cross && !r.cross_complete()) {
    throw DataError("success record: missing cross-task entries");
  }
}

}  // namespace

SuccessRecord SuccessRecord::empty(std::size_t num_tasks, std::size_t epochs) {
  SuccessRecord r;
  r.num_tasks = num_tasks;
  r.epochs = epochs;
  const auto K = static_cast<Eigen::Index>(num_tasks);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.c_diag = Eigen::MatrixXd::Constant(K, static_cast<Eigen::Index>(epochs + 1), nan);
  r.c_cross = Eigen::MatrixXd::Constant(K, K, nan);
  return r;
}

void SuccessRecord::validate() const {
  const auto K = static_cast<Eigen::Index>(num_tasks);
  if (c_diag.rows() != K || c_diag.cols() != static_cast<Eigen::Index>(epochs + 1) ||
      c_cross.rows() != K || c_cross.cols() != K) {
    throw DataError("success record shape does not match K and E");
  }
  auto check = [](double v) {
    if (!std::isnan(v) && !(v >= 0.0 && v <= 1.0)) {
      throw DataError(fmt::format("success rate {} outside [0, 1]", v));
    }
  };
  for (Eigen::Index i = 0; i < c_diag.size(); ++i) check(c_diag.data()[i]);
  for (Eigen::Index i = 0; i < c_cross.size(); ++i) check(c_cross.data()[i]);
  for (Eigen::Index k = 0; k < K; ++k) {
    const double last = c_diag(k, c_diag.cols() - 1);
    const double final_cross = c_cross(k, k);
    if (!std::isnan(last) && !std::isnan(final_cross) && last != final_cross) {
      throw DataError(fmt::format(
          "task {}: final epoch success {} differs from c_kk {}", k + 1, last,
          final_cross));
    }
  }
}

bool SuccessRecord::diag_complete() const { return all_finite(c_diag); }

bool SuccessRecord::cross_complete() const {
  for (Eigen::Index tau = 0; tau < c_cross.rows(); ++tau) {
    for (Eigen::Index k = 0; k <= tau; ++k) {
      if (std::isnan(c_cross(tau, k))) return false;
    }
  }
  return true;
}

Eigen::VectorXd per_task_fwt(const SuccessRecord& record) {
  require_complete(record, true, false);
  return record.c_diag.rowwise().mean();
}

double fwt(const SuccessRecord& record) { return per_task_fwt(record).mean(); }

std::optional<double> nbt(const SuccessRecord& record, bool exclude_last) {
  require_complete(record, false, true);
  const auto K = static_cast<Eigen::Index>(record.num_tasks);
  if (K < 2) return std::nullopt;
  const auto& c = record.c_cross;
  double total = 0.0;
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    double inner = 0.0;
    for (Eigen::Index tau = k + 1; tau < K; ++tau) inner += c(k, k) - c(tau, k);
    total += inner / static_cast<double>(K - 1 - k);
  }
  return total / static_cast<double>(exclude_last ? K - 1 : K);
}

double auc(const SuccessRecord& record) {
  const Eigen::VectorXd f = per_task_fwt(record);
  require_complete(record, true, true);
  const auto K = static_cast<Eigen::Index>(record.num_tasks);
  double total = 0.0;
  for (Eigen::Index k = 0; k < K; ++k) {
    double inner = f[k];
    for (Eigen::Index tau = k + 1; tau < K; ++tau) inner += record.c_cross(tau, k);
    total += inner / static_cast<double>(K - k);
  }
  return total / static_cast<double>(K);
}

double DriftRecord::mean(Modality m) const {
  const auto& s = series[index_of(m)];
  if (s.empty()) return 0.0;
  double total = 0.0;
  for (double v : s) total += v;
  return total / static_cast<double>(s.size());
}

double mean_row_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError("drift: latent shapes differ");
  }
  if (a.rows() == 0) throw DataError("drift: empty probe set");
  return (a - b).rowwise().norm().mean();
}

ProbeLatents probe_latents(const PolicyModel& model, const ObservationBatch& probe) {
  NoGradGuard guard;
  const auto latents = model.encode(probe);
  ProbeLatents out;
  for (std::size_t m = 0; m < out.size(); ++m) out[m] = latents[m].to_matrix();
  return out;
}

DriftRecord drift(const std::vector<ProbeLatents>& sequence) {
  DriftRecord record;
  for (std::size_t s = 1; s < sequence.size(); ++s) {
    for (std::size_t m = 0; m < record.series.size(); ++m) {
      record.series[m].push_back(mean_row_distance(sequence[s - 1][m], sequence[s][m]));
    }
  }
  return record;
}

DriftRecord drift(const std::vector<PolicyModel>& snapshots,
                  const ObservationBatch& probe) {
  std::vector<ProbeLatents> sequence;
  sequence.reserve(snapshots.size());
  for (const auto& s : snapshots) sequence.push_back(probe_latents(s, probe));
  return drift(sequence);
}

MetricsSummary summarize(const SuccessRecord& record, bool nbt_exclude_last,
                         std::uint64_t seed, std::string config_hash) {
  MetricsSummary s;
  s.seed = seed;
  s.config_hash = std::move(config_hash);
  record.validate();
  if (record.num_tasks > 0 && record.diag_complete()) {
    const Eigen::VectorXd f = per_task_fwt(record);
    s.per_task_fwt.assign(f.data(), f.data() + f.size());
    s.fwt = f.mean();
    if (record.cross_complete()) {
      s.auc = auc(record);
      s.nbt = nbt(record, nbt_exclude_last);
    }
  } else if (record.num_tasks > 0 && record.cross_complete()) {
    s.nbt = nbt(record, nbt_exclude_last);
  }
  return s;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    hash ^= ch;
    hash *= 0x100000001b3ULL;
  }
  return fmt::format("{:016x}", hash);
}

void write_success_matrix(const std::filesystem::path& path,
                          const SuccessRecord& record) {
  auto out = open_for_write(path);
  out << "tau,k,value\n";
  for (Eigen::Index tau = 0; tau < record.c_cross.rows(); ++tau) {
    for (Eigen::Index k = 0; k <= tau; ++k) {
      const double v = record.c_cross(tau, k);
      if (std::isnan(v)) continue;
      out << fmt::format("{},{},{}\n", tau + 1, k + 1, v);
    }
  }
}

void write_success_curve(const std::filesystem::path& path,
                         const SuccessRecord& record) {
  auto out = open_for_write(path);
  out << "k,epoch,value\n";
  for (Eigen::Index k = 0; k < record.c_diag.rows(); ++k) {
    for (Eigen::Index e = 0; e < record.c_diag.cols(); ++e) {
      const double v = record.c_diag(k, e);
      if (std::isnan(v)) continue;
      out << fmt::format("{},{},{}\n", k + 1, e, v);
    }
  }
}

void write_drift(const std::filesystem::path& path, const DriftRecord& record) {
  auto out = open_for_write(path);
  out << "modality,step,value\n";
  for (auto m : kModalities) {
    const auto& s = record.series[index_of(m)];
    for (std::size_t i = 0; i < s.size(); ++i) {
      out << fmt::format("{},{},{}\n", modality_name(m), i + 1, s[i]);
    }
  }
}

nlohmann::json metrics_to_json(const MetricsSummary& s) {
  auto opt = [](const std::optional<double>& v) -> nlohmann::json {
    if (v) return *v;
    return nullptr;
  };
  return nlohmann::json{{"fwt", opt(s.fwt)},
                        {"nbt", opt(s.nbt)},
                        {"auc", opt(s.auc)},
                        {"per_task_fwt", s.per_task_fwt},
                        {"seed", s.seed},
                        {"config_hash", s.config_hash}};
}

void write_metrics_json(const std::filesystem::path& path,
                        const MetricsSummary& summary) {
  auto out = open_for_write(path);
  out << metrics_to_json(summary).dump(2) << '\n';
}

MetricsSummary read_metrics_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  MetricsSummary s;
  try {
    nlohmann::json j;
    in >> j;
    auto opt = [&](const char* key) -> std::optional<double> {
      const auto& v = j.at(key);
      if (v.is_null()) return std::nullopt;
      return v.get<double>();
    };
    s.fwt = opt("fwt");
    s.nbt = opt("nbt");
    s.auc = opt("auc");
    s.per_task_fwt = j.at("per_task_fwt").get<std::vector<double>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.config_hash = j.at("config_hash").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(fmt::format("malformed metrics file {}: {}", path.string(), e.what()));
  }
  return s;
}

}  // namespace spread
