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

#include "spread/cli.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/spdlog.h>

#include "CLI11.hpp"
#include "spread/errors.hpp"

namespace spread::cli {

namespace {

const char* const kArtifacts[] = {"config.json",  "success_matrix.csv",
                                  "success_curve.csv", "drift.csv",
                                  "metrics.json", "run.log", "FAILED"};

std::shared_ptr<spdlog::logger> file_logger(const std::filesystem::path& path,
                                            const std::string& name) {
  auto sink = std::make_shared<spdlog::sinks::basic_file_sink_mt>(path.string(), true);
  auto logger = std::make_shared<spdlog::logger>(name, sink);
  logger->set_level(spdlog::level::info);
  logger->flush_on(spdlog::level::info);
  return logger;
}

std::string axis_text(const nlohmann::json& value) {
  return value.is_string() ? value.get<std::string>() : value.dump();
}

void apply_axis(nlohmann::json& config, const std::string& axis,
                const nlohmann::json& value) {
  if (axis != "loss_terms") {
    config[axis] = value;
    return;
  }
  if (!value.is_string()) throw ConfigError("loss_terms values must be strings");
  const auto terms = value.get<std::string>();
  if (terms.find_first_not_of("itep") != std::string::npos) {
    throw ConfigError("loss_terms may only contain the letters i, t, e, p: " + terms);
  }
  for (char c : std::string("itep")) {
    if (terms.find(c) == std::string::npos) config[std::string("lambda_") + c] = 0.0;
  }
}

std::string number_or_empty(const std::optional<double>& v) {
  return v ? fmt::format("{}", *v) : std::string();
}

std::string percent(const std::optional<double>& mean, const std::optional<double>& se) {
  if (!mean) return "n/a";
  if (!se) return fmt::format("{:.1f}", 100.0 * *mean);
  return fmt::format("{:.1f} ± {:.1f}", 100.0 * *mean, 100.0 * *se);
}

void mean_and_se(const std::vector<double>& values, std::optional<double>& mean,
                 std::optional<double>& se) {
  if (values.empty()) return;
  double sum = 0.0;
  for (double v : values) sum += v;
  const double n = static_cast<double>(values.size());
  mean = sum / n;
  if (values.size() < 2) return;
  double ss = 0.0;
  for (double v : values) ss += (v - *mean) * (v - *mean);
  se = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
}

}  // namespace

std::int64_t seed_offset() {
  const char* raw = std::getenv("SPREAD_LIL_SEED_OFFSET");
  if (raw == nullptr || *raw == '\0') return 0;
  try {
    std::size_t used = 0;
    const long long v = std::stoll(raw, &used);
    if (used != std::string(raw).size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(fmt::format("SPREAD_LIL_SEED_OFFSET='{}' is not an integer", raw));
  }
}

RunConfig apply_seed_offset(RunConfig config, std::int64_t offset) {
  config.suite_seed += static_cast<std::uint64_t>(offset);
  config.train_seed += static_cast<std::uint64_t>(offset);
  return config;
}

int cmd_run(const std::filesystem::path& config_path,
            const std::filesystem::path& out_dir, bool force, std::ostream& out,
            std::ostream& err) {
  RunConfig config;
  try {
    config = apply_seed_offset(load_run_config(config_path), seed_offset());
  } catch (const ConfigError& e) {
    err << "invalid config: " << e.what() << '\n';
    return kInvalid;
  }
  std::error_code ec;
  if (std::filesystem::exists(out_dir) && !std::filesystem::is_empty(out_dir, ec)) {
    if (!force) {
      err << "output directory " << out_dir.string()
          << " is not empty; pass --force to overwrite\n";
      return kInvalid;
    }
    for (const char* name : kArtifacts) std::filesystem::remove(out_dir / name, ec);
  }
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    err << "cannot create " << out_dir.string() << ": " << ec.message() << '\n';
    return kInvalid;
  }
  RunOptions options;
  options.out_dir = out_dir;
  options.keep_step_log = false;
  options.logger = file_logger(out_dir / "run.log", "run");
  try {
    const MetricsReport report = run_experiment(config, options);
    const auto& s = report.summary;
    out << fmt::format("{} finished: fwt {} nbt {} auc {} ({})\n", method_name(config.method),
                       s.fwt ? fmt::format("{:.4f}", *s.fwt) : "null",
                       s.nbt ? fmt::format("{:.4f}", *s.nbt) : "null",
                       s.auc ? fmt::format("{:.4f}", *s.auc) : "null", out_dir.string());
  } catch (const Error& e) {
    err << "run failed: " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}

std::filesystem::path SweepCell::relative_dir() const {
  return std::filesystem::path(label) / fmt::format("seed_{}", seed);
}

SweepSpec parse_sweep_spec(const nlohmann::json& j,
                           const std::filesystem::path& spec_dir) {
  if (!j.is_object()) throw ConfigError("sweep spec must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (key != "base_config" && key != "base" && key != "axes" && key != "seeds") {
      throw ConfigError("unknown sweep key: " + key);
    }
  }
  SweepSpec spec;
  try {
    if (j.contains("base_config") && j.contains("base")) {
      throw ConfigError("give either base_config or base, not both");
    }
    if (j.contains("base_config")) {
      const auto path = spec_dir / j.at("base_config").get<std::string>();
      std::ifstream in(path);
      if (!in) throw ConfigError("cannot read base config " + path.string());
      try {
        in >> spec.base;
      } catch (const nlohmann::json::exception& e) {
        throw ConfigError(fmt::format("base config {}: {}", path.string(), e.what()));
      }
    } else {
      spec.base = j.value("base", nlohmann::json::object());
    }
    if (!spec.base.is_object()) throw ConfigError("base config must be an object");
    if (j.contains("axes")) {
      for (const auto& [name, values] : j.at("axes").items()) {
        if (!values.is_array() || values.empty()) {
          throw ConfigError("axis " + name + " needs a non-empty list of values");
        }
        spec.axes.push_back({name, std::vector<nlohmann::json>(values.begin(), values.end())});
      }
    }
    spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  if (spec.seeds.empty()) throw ConfigError("sweep spec needs at least one seed");
  return spec;
}

SweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read sweep spec " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(fmt::format("sweep spec {}: {}", path.string(), e.what()));
  }
  return parse_sweep_spec(j, path.parent_path());
}

std::vector<SweepCell> expand_grid(const SweepSpec& spec, std::int64_t offset) {
  std::vector<std::vector<std::size_t>> combos{{}};
  for (const auto& axis : spec.axes) {
    std::vector<std::vector<std::size_t>> next;
    for (const auto& c : combos) {
      for (std::size_t i = 0; i < axis.values.size(); ++i) {
        auto extended = c;
        extended.push_back(i);
        next.push_back(std::move(extended));
      }
    }
    combos = std::move(next);
  }
  std::vector<SweepCell> cells;
  for (const auto& combo : combos) {
    nlohmann::json config = spec.base;
    std::vector<std::string> values, parts;
    for (std::size_t a = 0; a < spec.axes.size(); ++a) {
      const auto& value = spec.axes[a].values[combo[a]];
      apply_axis(config, spec.axes[a].name, value);
      values.push_back(axis_text(value));
      parts.push_back(spec.axes[a].name + "=" + values.back());
    }
    const std::string label = parts.empty() ? "base" : fmt::format("{}", fmt::join(parts, ","));
    for (auto seed : spec.seeds) {
      SweepCell cell{label, values, seed, config};
      const auto shifted = seed + static_cast<std::uint64_t>(offset);
      cell.config["suite_seed"] = shifted;
      cell.config["train_seed"] = shifted;
      config_from_json(cell.config);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::vector<Aggregate> aggregate_sweep(const SweepSpec& spec,
                                       const std::filesystem::path& out_root,
                                       std::int64_t offset) {
  const auto cells = expand_grid(spec, offset);
  std::vector<Aggregate> rows;
  std::map<std::string, std::array<std::vector<double>, 3>> samples;
  for (const auto& cell : cells) {
    if (rows.empty() || rows.back().label != cell.label) {
      rows.push_back(Aggregate{cell.label, cell.axis_values, 0, {}, {}, {}, {}, {}, {}, {}});
    }
    Aggregate& agg = rows.back();
    const auto dir = out_root / cell.relative_dir();
    if (!std::filesystem::exists(dir / "metrics.json") ||
        std::filesystem::exists(dir / "FAILED")) {
      agg.missing_seeds.push_back(cell.seed);
      continue;
    }
    MetricsSummary m;
    try {
      m = read_metrics_json(dir / "metrics.json");
    } catch (const DataError&) {
      agg.missing_seeds.push_back(cell.seed);
      continue;
    }
    ++agg.runs;
    auto& s = samples[cell.label];
    if (m.fwt) s[0].push_back(*m.fwt);
    if (m.nbt) s[1].push_back(*m.nbt);
    if (m.auc) s[2].push_back(*m.auc);
  }
  for (auto& agg : rows) {
    auto& s = samples[agg.label];
    mean_and_se(s[0], agg.fwt_mean, agg.fwt_se);
    mean_and_se(s[1], agg.nbt_mean, agg.nbt_se);
    mean_and_se(s[2], agg.auc_mean, agg.auc_se);
  }

  std::vector<std::string> axis_names;
  for (const auto& a : spec.axes) axis_names.push_back(a.name);
  {
    std::ofstream csv(out_root / "summary.csv", std::ios::binary);
    if (!csv) throw DataError("cannot write summary.csv under " + out_root.string());
    csv << "label";
    for (const auto& n : axis_names) csv << ',' << n;
    csv << ",runs,missing_seeds,fwt_mean,fwt_se,nbt_mean,nbt_se,auc_mean,auc_se\n";
    for (const auto& a : rows) {
      // Labels contain commas, so they are written with ';' instead.
      std::string label = a.label;
      std::replace(label.begin(), label.end(), ',', ';');
      csv << label;
      for (const auto& v : a.axis_values) csv << ',' << v;
      csv << fmt::format(",{},{},{},{},{},{},{},{}\n", a.runs,
                         fmt::join(a.missing_seeds, ";"), number_or_empty(a.fwt_mean),
                         number_or_empty(a.fwt_se), number_or_empty(a.nbt_mean),
                         number_or_empty(a.nbt_se), number_or_empty(a.auc_mean),
                         number_or_empty(a.auc_se));
    }
  }
  {
    std::ofstream md(out_root / "summary.md", std::ios::binary);
    if (!md) throw DataError("cannot write summary.md under " + out_root.string());
    std::vector<std::string> head = axis_names;
    if (head.empty()) head.push_back("configuration");
    md << "| " << fmt::format("{}", fmt::join(head, " | "))
       << " | FWT (%) | NBT (%) | AUC (%) | runs |\n|";
    for (std::size_t i = 0; i < head.size() + 4; ++i) md << "---|";
    md << '\n';
    for (const auto& a : rows) {
      const auto& first = a.axis_values.empty() ? std::vector<std::string>{a.label} : a.axis_values;
      md << "| " << fmt::format("{}", fmt::join(first, " | ")) << " | "
         << percent(a.fwt_mean, a.fwt_se) << " | " << percent(a.nbt_mean, a.nbt_se) << " | "
         << percent(a.auc_mean, a.auc_se) << " | " << a.runs;
      if (!a.missing_seeds.empty()) {
        md << fmt::format(" (missing seeds {})", fmt::join(a.missing_seeds, ", "));
      }
      md << " |\n";
    }
  }
  return rows;
}

int cmd_sweep(const std::filesystem::path& spec_path,
              const std::filesystem::path& out_root, std::size_t jobs,
              bool force, std::ostream& out, std::ostream& err) {
  if (jobs < 1) {
    err << "--jobs must be at least 1\n";
    return kInvalid;
  }
  SweepSpec spec;
  std::vector<SweepCell> cells;
  std::int64_t offset = 0;
  try {
    offset = seed_offset();
    spec = load_sweep_spec(spec_path);
    cells = expand_grid(spec, offset);
  } catch (const ConfigError& e) {
    err << "invalid sweep: " << e.what() << '\n';
    return kInvalid;
  }
  std::error_code ec;
  if (std::filesystem::exists(out_root) && !std::filesystem::is_empty(out_root, ec) && !force) {
    err << "output directory " << out_root.string()
        << " is not empty; pass --force to overwrite\n";
    return kInvalid;
  }
  std::filesystem::create_directories(out_root, ec);
  if (ec) {
    err << "cannot create " << out_root.string() << ": " << ec.message() << '\n';
    return kInvalid;
  }

  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> failed{0};
  std::mutex io;
  auto worker = [&] {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const auto& cell = cells[i];
      const auto dir = out_root / cell.relative_dir();
      std::error_code local;
      for (const char* name : kArtifacts) std::filesystem::remove(dir / name, local);
      std::filesystem::create_directories(dir, local);
      try {
        const RunConfig config = config_from_json(cell.config);
        RunOptions options;
        options.out_dir = dir;
        options.keep_step_log = false;
        options.logger = file_logger(dir / "run.log", fmt::format("cell{}", i));
        run_experiment(config, options);
        std::lock_guard lock(io);
        out << fmt::format("[{}/{}] {} seed {} done\n", i + 1, cells.size(), cell.label,
                           cell.seed);
      } catch (const std::exception& e) {
        ++failed;
        std::lock_guard lock(io);
        err << fmt::format("[{}/{}] {} seed {} failed: {}\n", i + 1, cells.size(), cell.label,
                           cell.seed, e.what());
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < std::min(jobs, cells.size()); ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  try {
    aggregate_sweep(spec, out_root, offset);
  } catch (const Error& e) {
    err << "aggregation failed: " << e.what() << '\n';
    return kFailure;
  }
  out << fmt::format("{} runs, {} failed; summary in {}\n", cells.size(), failed.load(),
                     (out_root / "summary.csv").string());
  return failed.load() == 0 ? kOk : kFailure;
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lifelong imitation learning with subspace representation distillation"};
  app.name("spread_lil");
  app.require_subcommand(1);

  std::string config_path, run_out;
  bool run_force = false;
  auto* run = app.add_subcommand("run", "Train one lifelong experiment");
  run->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run->add_option("--out", run_out, "Output directory")->required();
  run->add_flag("--force", run_force, "Overwrite an existing output directory");

  std::string spec_path, sweep_out;
  std::size_t jobs = 1;
  bool sweep_force = false;
  auto* sweep = app.add_subcommand("sweep", "Run a grid of experiments and aggregate seeds");
  sweep->add_option("--spec", spec_path, "Sweep specification (JSON)")->required();
  sweep->add_option("--out", sweep_out, "Output root directory")->required();
  sweep->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
  sweep->add_flag("--force", sweep_force, "Write into a non-empty output directory");

  std::string kind_name, plot_out;
  std::vector<std::string> plot_in;
  auto* plot = app.add_subcommand("plot", "Render result files as SVG");
  plot->add_option("--kind", kind_name, "success_curve, fwt_bars, nbt_bars or drift_radar")
      ->required()
      ->check(CLI::IsMember({"success_curve", "fwt_bars", "nbt_bars", "drift_radar"}));
  plot->add_option("--in", plot_in, "Input files")->required()->expected(1, -1);
  plot->add_option("--out", plot_out, "Output SVG file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kInvalid;
  }

  if (run->parsed()) return cmd_run(config_path, run_out, run_force, out, err);
  if (sweep->parsed()) return cmd_sweep(spec_path, sweep_out, jobs, sweep_force, out, err);
  std::vector<std::filesystem::path> inputs(plot_in.begin(), plot_in.end());
  return cmd_plot(*parse_plot_kind(kind_name), inputs, plot_out, err);
}

}  // namespace spread::cli
