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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spread/runner.hpp"

namespace spread::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kInvalid = 2 };

/// Integer added to every seed; read from SPREAD_LIL_SEED_OFFSET.
/// Throws ConfigError if the variable is set but not an integer.
std::int64_t seed_offset();
RunConfig apply_seed_offset(RunConfig config, std::int64_t offset);

int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir, bool force, std::ostream& out,
            std::ostream& err);

struct SweepAxis {
  std::string name;
  std::vector<nlohmann::json> values;
};

// Grid of runs: every combination of axis values, repeated per seed.
// Axis names are config keys, plus "loss_terms" whose values are strings of
// the letters i, t, e, p naming the lambdas that stay switched on.
struct SweepSpec {
  nlohmann::json base;  // config JSON the axes override
  std::vector<SweepAxis> axes;
  std::vector<std::uint64_t> seeds;
};

struct SweepCell {
  std::string label;  // "axis=value,..." or "base" without axes
  std::vector<std::string> axis_values;
  std::uint64_t seed = 0;
  nlohmann::json config;

  std::filesystem::path relative_dir() const;
};

/// "base_config" is resolved relative to the spec file; "base" may instead
/// hold the config inline. Throws ConfigError when malformed.
SweepSpec parse_sweep_spec(const nlohmann::json& j,
                           const std::filesystem::path& spec_dir);
SweepSpec load_sweep_spec(const std::filesystem::path& path);
/// Cells in axis-major order, seeds innermost. Every cell config is
/// validated (ConfigError).
std::vector<SweepCell> expand_grid(const SweepSpec& spec, std::int64_t offset = 0);

struct Aggregate {
  std::string label;
  std::vector<std::string> axis_values;
  std::size_t runs = 0;
  std::vector<std::uint64_t> missing_seeds;
  std::optional<double> fwt_mean, fwt_se, nbt_mean, nbt_se, auc_mean, auc_se;
};

/// Mean and standard error (sample sd / sqrt(n)) of every configuration,
/// read back from the metrics.json files under out_root. Writes
/// summary.csv and summary.md.
std::vector<Aggregate> aggregate_sweep(const SweepSpec& spec,
                                       const std::filesystem::path& out_root,
                                       std::int64_t offset = 0);

int cmd_sweep(const std::filesystem::path& spec_path,
              const std::filesystem::path& out_root, std::size_t jobs,
              bool force, std::ostream& out, std::ostream& err);

enum class PlotKind { SuccessCurve, FwtBars, NbtBars, DriftRadar };
std::optional<PlotKind> parse_plot_kind(const std::string& name);

int cmd_plot(PlotKind kind, const std::vector<std::filesystem::path>& inputs,
             const std::filesystem::path& out_svg, std::ostream& err);

/// Full command-line entry point.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace spread::cli
