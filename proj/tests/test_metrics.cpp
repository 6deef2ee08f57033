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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "spread/errors.hpp"
#include "spread/metrics.hpp"

using namespace spread;

namespace {

constexpr double kExact = 1e-12;

SuccessRecord make_record(const Eigen::MatrixXd& diag,
                          const Eigen::MatrixXd& cross) {
  SuccessRecord r;
  r.num_tasks = static_cast<std::size_t>(diag.rows());
  r.epochs = static_cast<std::size_t>(diag.cols() - 1);
  r.c_diag = diag;
  r.c_cross = cross;
  return r;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

SuccessRecord random_record(std::mt19937_64& rng, std::size_t K, std::size_t E) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto r = SuccessRecord::empty(K, E);
  for (Eigen::Index i = 0; i < r.c_diag.size(); ++i) r.c_diag.data()[i] = u(rng);
  for (std::size_t tau = 0; tau < K; ++tau) {
    for (std::size_t k = 0; k < tau; ++k) r.c_cross(tau, k) = u(rng);
    r.c_cross(tau, tau) = r.c_diag(tau, E);
  }
  return r;
}

}  // namespace

TEST_CASE("perfect record") {
  auto r = SuccessRecord::empty(4, 3);
  r.c_diag.setOnes();
  for (int tau = 0; tau < 4; ++tau)
    for (int k = 0; k <= tau; ++k) r.c_cross(tau, k) = 1.0;
  CHECK(fwt(r) == 1.0);
  CHECK(auc(r) == 1.0);
  CHECK(*nbt(r) == 0.0);
}

TEST_CASE("single task") {
  Eigen::MatrixXd diag(1, 4);
  diag << 0.0, 0.25, 0.5, 0.75;
  Eigen::MatrixXd cross(1, 1);
  cross << 0.75;
  auto r = make_record(diag, cross);
  CHECK(std::abs(fwt(r) - 0.375) < kExact);
  CHECK(std::abs(auc(r) - fwt(r)) < kExact);
  CHECK_FALSE(nbt(r).has_value());
  CHECK_FALSE(nbt(r, true).has_value());
}

TEST_CASE("two tasks golden values") {
  Eigen::MatrixXd diag(2, 2);
  diag << 0.0, 1.0, 0.5, 0.5;
  Eigen::MatrixXd cross(2, 2);
  cross << 1.0, 0.0, 0.5, 0.5;
  auto r = make_record(diag, cross);
  CHECK(std::abs(fwt(r) - ((0.0 + 1.0) / 2 + (0.5 + 0.5) / 2) / 2) < kExact);
  CHECK(std::abs(fwt(r) - 0.5) < kExact);
  // (1/2) * [(1/1) * (1.0 - 0.5) + 0]
  CHECK(std::abs(*nbt(r) - 0.25) < kExact);
  CHECK(std::abs(*nbt(r, true) - 0.5) < kExact);
  // (1/2) * [(1/2) * (0.5 + 0.5) + (1/1) * 0.5]
  CHECK(std::abs(auc(r) - 0.5) < kExact);
}

TEST_CASE("forgetting and backward gain") {
  Eigen::MatrixXd diag(2, 2);
  diag << 0.3, 0.8, 0.1, 0.9;
  Eigen::MatrixXd cross(2, 2);
  cross << 0.8, 0.0, 0.6, 0.9;
  auto forgetting = make_record(diag, cross);
  CHECK(std::abs(*nbt(forgetting) - 0.1) < kExact);

  diag << 0.3, 0.6, 0.1, 0.9;
  cross << 0.6, 0.0, 0.8, 0.9;
  auto gain = make_record(diag, cross);
  CHECK(*nbt(gain) < 0.0);
  CHECK(std::abs(*nbt(gain) + 0.1) < kExact);
}

TEST_CASE("three tasks golden values") {
  Eigen::MatrixXd diag(3, 3);
  diag << 0.0, 0.5, 0.9,  //
      0.1, 0.4, 0.7,      //
      0.2, 0.6, 1.0;
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(3, 3);
  cross(0, 0) = 0.9;
  cross(1, 0) = 0.6;
  cross(2, 0) = 0.3;
  cross(1, 1) = 0.7;
  cross(2, 1) = 0.8;
  cross(2, 2) = 1.0;
  auto r = make_record(diag, cross);

  const double f1 = 1.4 / 3, f2 = 1.2 / 3, f3 = 1.8 / 3;
  auto per = per_task_fwt(r);
  CHECK(std::abs(per[0] - f1) < kExact);
  CHECK(std::abs(per[1] - f2) < kExact);
  CHECK(std::abs(per[2] - f3) < kExact);
  CHECK(std::abs(fwt(r) - 4.4 / 9) < kExact);

  const double nbt_sum = ((0.9 - 0.6) + (0.9 - 0.3)) / 2 + (0.7 - 0.8) / 1;
  CHECK(std::abs(*nbt(r) - nbt_sum / 3) < kExact);
  CHECK(std::abs(*nbt(r) - 0.35 / 3) < kExact);
  CHECK(std::abs(*nbt(r, true) - 0.35 / 2) < kExact);

  const double auc_sum = (f1 + 0.6 + 0.3) / 3 + (f2 + 0.8) / 2 + f3 / 1;
  CHECK(std::abs(auc(r) - auc_sum / 3) < kExact);
}

TEST_CASE("incomplete or invalid records") {
  auto r = SuccessRecord::empty(2, 2);
  CHECK_THROWS_AS(fwt(r), DataError);
  CHECK_THROWS_AS(auc(r), DataError);
  CHECK_THROWS_AS(nbt(r), DataError);
  r.c_diag.setConstant(0.5);
  CHECK(fwt(r) == 0.5);
  CHECK_THROWS_AS(auc(r), DataError);
  r.c_diag(0, 0) = 1.5;
  CHECK_THROWS_AS(r.validate(), DataError);
  r.c_diag(0, 0) = 0.5;
  r.c_cross(0, 0) = 0.25;  // disagrees with the final epoch entry
  CHECK_THROWS_AS(r.validate(), DataError);
  r.c_cross.resize(1, 1);
  CHECK_THROWS_AS(r.validate(), DataError);
}

TEST_CASE("metric invariants over random records") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t K = 1 + trial % 5, E = 1 + trial % 4;
    auto r = random_record(rng, K, E);
    const double f = fwt(r), a = auc(r);
    CHECK(f >= 0.0);
    CHECK(f <= 1.0);
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);

    // Relabelling epochs before the final one changes nothing.
    auto shuffled = r;
    for (Eigen::Index k = 0; k < shuffled.c_diag.rows(); ++k) {
      Eigen::RowVectorXd row = shuffled.c_diag.row(k).head(E);
      std::reverse(row.data(), row.data() + row.size());
      shuffled.c_diag.row(k).head(E) = row;
    }
    CHECK(std::abs(fwt(shuffled) - f) < kExact);
    CHECK(std::abs(auc(shuffled) - a) < kExact);

    // Forcing every later rate below (above) c_kk makes NBT >= 0 (<= 0).
    auto worse = r, better = r;
    for (std::size_t tau = 0; tau < K; ++tau) {
      for (std::size_t k = 0; k < tau; ++k) {
        worse.c_cross(tau, k) = r.c_cross(k, k) * 0.5;
        better.c_cross(tau, k) = (1.0 + r.c_cross(k, k)) * 0.5;
      }
    }
    if (K > 1) {
      CHECK(*nbt(worse) >= 0.0);
      CHECK(*nbt(better) <= 0.0);
    }
  }
}

TEST_CASE("drift of model snapshots") {
  ModelConfig config;
  PolicyModel a(config, 1);
  ObservationBatch probe;
  for (std::size_t m = 0; m < 5; ++m) {
    probe.channels[m] = Eigen::MatrixXd::Random(
        16, static_cast<Eigen::Index>(config.input_widths[m]));
  }
  auto same = drift(std::vector<PolicyModel>{a.snapshot(), a.snapshot(), a.snapshot()}, probe);
  CHECK(same.steps() == 2);
  for (auto m : kModalities) {
    for (double v : same.series[index_of(m)]) CHECK(v == 0.0);
  }

  PolicyModel b = a.snapshot();
  Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(64, -1.0, 1.0);
  b.encoder(Modality::Joint).out.bias.values_mut() += v;
  auto shifted = drift(std::vector<PolicyModel>{a.snapshot(), b}, probe);
  CHECK(std::abs(shifted.series[index_of(Modality::Joint)][0] - v.norm()) < 1e-12);
  // Encoders that were not touched, the text encoder among them, do not drift.
  CHECK(shifted.series[index_of(Modality::Text)][0] == 0.0);
  CHECK(shifted.series[index_of(Modality::AgentView)][0] == 0.0);
  CHECK(shifted.mean(Modality::Joint) == shifted.series[index_of(Modality::Joint)][0]);

  CHECK_THROWS_AS(mean_row_distance(Eigen::MatrixXd::Zero(3, 2), Eigen::MatrixXd::Zero(2, 2)),
                  DataError);
  CHECK(DriftRecord{}.mean(Modality::Text) == 0.0);
}

TEST_CASE("fnv1a reference vectors") {
  CHECK(fnv1a_hex("") == "cbf29ce484222325");
  CHECK(fnv1a_hex("a") == "af63dc4c8601ec8c");
  CHECK(fnv1a_hex("foobar") == "85944171f73967e8");
}

TEST_CASE("csv and json outputs") {
  Eigen::MatrixXd diag(2, 2);
  diag << 0.0, 1.0, 0.5, 0.5;
  Eigen::MatrixXd cross(2, 2);
  cross << 1.0, 0.0, 0.5, 0.5;
  auto r = make_record(diag, cross);
  auto dir = std::filesystem::temp_directory_path() / "spread_metrics_test";
  std::filesystem::create_directories(dir);

  write_success_matrix(dir / "m.csv", r);
  CHECK(slurp(dir / "m.csv") == "tau,k,value\n1,1,1\n2,1,0.5\n2,2,0.5\n");
  write_success_curve(dir / "c.csv", r);
  CHECK(slurp(dir / "c.csv") == "k,epoch,value\n1,0,0\n1,1,1\n2,0,0.5\n2,1,0.5\n");

  DriftRecord d;
  for (auto& s : d.series) s = {0.125};
  write_drift(dir / "d.csv", d);
  CHECK(slurp(dir / "d.csv") ==
        "modality,step,value\nAgentView,1,0.125\nHandEye,1,0.125\nText,1,0.125\n"
        "Joint,1,0.125\nGripper,1,0.125\n");

  auto s = summarize(r, false, 7, "abc");
  write_metrics_json(dir / "metrics.json", s);
  auto back = read_metrics_json(dir / "metrics.json");
  CHECK(*back.fwt == *s.fwt);
  CHECK(*back.nbt == *s.nbt);
  CHECK(*back.auc == *s.auc);
  CHECK(back.per_task_fwt == s.per_task_fwt);
  CHECK(back.seed == 7);
  CHECK(back.config_hash == "abc");

  Eigen::MatrixXd d1(1, 2);
  d1 << 0.5, 1.0;
  Eigen::MatrixXd c1(1, 1);
  c1 << 1.0;
  auto single = summarize(make_record(d1, c1), false, 0, "x");
  CHECK(metrics_to_json(single).at("nbt").is_null());
  CHECK(*single.auc == *single.fwt);

  std::ofstream(dir / "bad.json") << "{\"fwt\": 1}";
  CHECK_THROWS_AS(read_metrics_json(dir / "bad.json"), DataError);
  std::filesystem::remove_all(dir);
}
