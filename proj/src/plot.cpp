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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "spread/cli.hpp"
#include "spread/errors.hpp"
#include "spread/metrics.hpp"

namespace spread::cli {

namespace {

constexpr double kWidth = 720, kHeight = 440;
constexpr double kLeft = 70, kRight = 180, kTop = 40, kBottom = 60;
const char* const kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
                                "#bcbd22", "#17becf"};

const char* colour(std::size_t i) { return kPalette[i % std::size(kPalette)]; }

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

std::string series_label(const std::filesystem::path& p) {
  auto parent = p.parent_path().filename().string();
  return parent.empty() ? p.stem().string() : parent;
}

using Row = std::vector<std::string>;

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_number(const std::string& text, const std::filesystem::path& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size() || !std::isfinite(v)) {
    throw DataError(fmt::format("{}: '{}' is not a finite number", path.string(), text));
  }
  return v;
}

// Rows of a CSV whose header must start with `expected` columns.
std::vector<Row> read_csv(const std::filesystem::path& path,
                          const std::vector<std::string>& expected,
                          std::vector<std::string>* header_out = nullptr) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  std::string line;
  std::vector<std::string> header;
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header.empty()) {
      header = split(line);
      if (header.size() < expected.size() ||
          !std::equal(expected.begin(), expected.end(), header.begin())) {
        throw DataError(fmt::format("{}: expected columns starting with '{}'",
                                    path.string(), fmt::join(expected, ",")));
      }
      continue;
    }
    Row row = split(line);
    if (row.size() != header.size()) {
      throw DataError(fmt::format("{}: row '{}' has {} fields, expected {}",
                                  path.string(), line, row.size(), header.size()));
    }
    rows.push_back(std::move(row));
  }
  if (header.empty()) throw DataError(path.string() + ": empty file");
  if (rows.empty()) throw DataError(path.string() + ": no data rows");
  if (header_out) *header_out = header;
  return rows;
}

struct Series {
  std::string label;
  std::vector<double> values;
};

class Svg {
 public:
  Svg() {
    body_ << fmt::format(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
        "viewBox=\"0 0 {} {}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
        kWidth, kHeight, kWidth, kHeight);
  }
  void line(double x1, double y1, double x2, double y2, const std::string& stroke,
            double width = 1.0, const char* dash = nullptr) {
    body_ << fmt::format(
        "<line x1=\"{:.2f}\" y1=\"{:.2f}\" x2=\"{:.2f}\" y2=\"{:.2f}\" stroke=\"{}\" "
        "stroke-width=\"{}\"{}/>\n",
        x1, y1, x2, y2, stroke, width,
        dash ? fmt::format(" stroke-dasharray=\"{}\"", dash) : "");
  }
  void polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& stroke, bool closed = false) {
    std::string points;
    for (const auto& [x, y] : pts) points += fmt::format("{:.2f},{:.2f} ", x, y);
    body_ << fmt::format(
        "<{} points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
        closed ? "polygon" : "polyline", points, stroke);
  }
  void rect(double x, double y, double w, double h, const std::string& fill) {
    body_ << fmt::format(
        "<rect x=\"{:.2f}\" y=\"{:.2f}\" width=\"{:.2f}\" height=\"{:.2f}\" fill=\"{}\"/>\n",
        x, y, w, h, fill);
  }
  void text(double x, double y, const std::string& s, const char* anchor = "start",
            double rotate = 0.0) {
    body_ << fmt::format("<text x=\"{:.2f}\" y=\"{:.2f}\" text-anchor=\"{}\"", x, y, anchor);
    if (rotate != 0.0) {
      body_ << fmt::format(" transform=\"rotate({} {:.2f} {:.2f})\"", rotate, x, y);
    }
    body_ << ">" << escape(s) << "</text>\n";
  }
  void legend(const std::vector<std::string>& labels) {
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const double y = kTop + 16.0 * static_cast<double>(i);
      rect(kWidth - kRight + 16, y - 9, 10, 10, colour(i));
      text(kWidth - kRight + 32, y, labels[i]);
    }
  }
  void save(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << body_.str() << "</svg>\n";
  }

 private:
  std::ostringstream body_;
};

struct Frame {
  double x_min, x_max, y_min, y_max;
  double px(double x) const {
    const double span = x_max > x_min ? x_max - x_min : 1.0;
    return kLeft + (x - x_min) / span * (kWidth - kLeft - kRight);
  }
  double py(double y) const {
    const double span = y_max > y_min ? y_max - y_min : 1.0;
    return kHeight - kBottom - (y - y_min) / span * (kHeight - kTop - kBottom);
  }
};

void axes(Svg& svg, const Frame& f, const std::string& title,
          const std::string& xlabel, const std::string& ylabel) {
  svg.text(kWidth / 2, kTop - 16, title, "middle");
  svg.line(kLeft, f.py(f.y_min), kWidth - kRight, f.py(f.y_min), "black");
  svg.line(kLeft, kTop, kLeft, kHeight - kBottom, "black");
  for (int i = 0; i <= 4; ++i) {
    const double v = f.y_min + (f.y_max - f.y_min) * i / 4.0;
    svg.line(kLeft - 4, f.py(v), kLeft, f.py(v), "black");
    svg.text(kLeft - 8, f.py(v) + 4, fmt::format("{:.2f}", v), "end");
  }
  svg.text((kLeft + kWidth - kRight) / 2, kHeight - 18, xlabel, "middle");
  svg.text(20, (kTop + kHeight - kBottom) / 2, ylabel, "middle", -90);
}

void plot_success_curve(const std::vector<std::filesystem::path>& inputs,
                        const std::filesystem::path& out) {
  std::vector<Series> series;
  std::size_t longest = 0;
  std::vector<std::size_t> boundaries;
  for (const auto& path : inputs) {
    auto rows = read_csv(path, {"k", "epoch", "value"});
    std::vector<std::tuple<double, double, double>> points;
    for (const auto& r : rows) {
      points.emplace_back(parse_number(r[0], path), parse_number(r[1], path),
                          parse_number(r[2], path));
    }
    std::sort(points.begin(), points.end());
    Series s{series_label(path), {}};
    std::vector<std::size_t> starts;
    for (std::size_t i = 0; i < points.size(); ++i) {
      if (i > 0 && std::get<0>(points[i]) != std::get<0>(points[i - 1])) starts.push_back(i);
      s.values.push_back(std::get<2>(points[i]));
    }
    if (s.values.size() > longest) {
      longest = s.values.size();
      boundaries = starts;
    }
    series.push_back(std::move(s));
  }
  Frame f{0.0, static_cast<double>(longest > 1 ? longest - 1 : 1), 0.0, 1.0};
  Svg svg;
  axes(svg, f, "Success rate across incremental tasks", "evaluation (epochs of each task in order)",
       "success rate");
  for (auto b : boundaries) {
    const double x = f.px(static_cast<double>(b) - 0.5);
    svg.line(x, kTop, x, kHeight - kBottom, "#bbbbbb", 1.0, "4,3");
  }
  std::vector<std::string> labels;
  for (std::size_t i = 0; i < series.size(); ++i) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t j = 0; j < series[i].values.size(); ++j) {
      pts.emplace_back(f.px(static_cast<double>(j)), f.py(series[i].values[j]));
    }
    svg.polyline(pts, colour(i));
    labels.push_back(series[i].label);
  }
  svg.legend(labels);
  svg.save(out);
}

struct Bar {
  std::string label;
  double value;
  std::optional<double> error;
};

std::vector<Bar> read_bars(const std::filesystem::path& path, const std::string& metric) {
  std::vector<Bar> bars;
  if (path.extension() == ".json") {
    const MetricsSummary m = read_metrics_json(path);
    const auto v = metric == "fwt" ? m.fwt : m.nbt;
    if (!v) throw DataError(fmt::format("{}: {} is null", path.string(), metric));
    bars.push_back({series_label(path), *v, std::nullopt});
    return bars;
  }
  std::vector<std::string> header;
  auto rows = read_csv(path, {"label"}, &header);
  auto column = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(fmt::format("{}: no column {}", path.string(), name));
    }
    return static_cast<std::size_t>(it - header.begin());
  };
  const auto mean_col = column(metric + "_mean");
  const auto se_col = column(metric + "_se");
  for (const auto& r : rows) {
    if (r[mean_col].empty()) continue;
    Bar b{r[0], parse_number(r[mean_col], path), std::nullopt};
    if (!r[se_col].empty()) b.error = parse_number(r[se_col], path);
    bars.push_back(std::move(b));
  }
  if (bars.empty()) throw DataError(path.string() + ": no values for " + metric);
  return bars;
}

void plot_bars(const std::vector<std::filesystem::path>& inputs,
               const std::filesystem::path& out, const std::string& metric) {
  std::vector<Bar> bars;
  for (const auto& path : inputs) {
    auto more = read_bars(path, metric);
    bars.insert(bars.end(), more.begin(), more.end());
  }
  double lo = 0.0, hi = 0.0;
  for (const auto& b : bars) {
    const double e = b.error.value_or(0.0);
    lo = std::min(lo, b.value - e);
    hi = std::max(hi, b.value + e);
  }
  if (hi == lo) hi = lo + 1.0;
  Frame f{0.0, static_cast<double>(bars.size()), lo, hi};
  Svg svg;
  const std::string name = metric == "fwt" ? "FWT" : "NBT";
  axes(svg, f, name + " by configuration", "configuration", name);
  const double slot = (kWidth - kLeft - kRight) / static_cast<double>(bars.size());
  for (std::size_t i = 0; i < bars.size(); ++i) {
    const double x = kLeft + slot * (static_cast<double>(i) + 0.15);
    const double y0 = f.py(0.0), y1 = f.py(bars[i].value);
    svg.rect(x, std::min(y0, y1), slot * 0.7, std::abs(y1 - y0), colour(i));
    if (bars[i].error) {
      const double cx = x + slot * 0.35;
      svg.line(cx, f.py(bars[i].value - *bars[i].error), cx,
               f.py(bars[i].value + *bars[i].error), "black", 1.5);
    }
  }
  svg.line(kLeft, f.py(0.0), kWidth - kRight, f.py(0.0), "black");
  std::vector<std::string> labels;
  for (const auto& b : bars) labels.push_back(b.label);
  svg.legend(labels);
  svg.save(out);
}

void plot_drift_radar(const std::vector<std::filesystem::path>& inputs,
                      const std::filesystem::path& out) {
  std::vector<Series> series;
  std::size_t steps = 0;
  double peak = 0.0;
  for (const auto& path : inputs) {
    auto rows = read_csv(path, {"modality", "step", "value"});
    std::map<std::string, std::map<int, double>> by_modality;
    std::vector<std::string> order;
    for (const auto& r : rows) {
      if (!parse_modality(r[0])) {
        throw DataError(fmt::format("{}: unknown modality '{}'", path.string(), r[0]));
      }
      const double step = parse_number(r[1], path);
      const double value = parse_number(r[2], path);
      if (step < 1 || step != std::floor(step)) {
        throw DataError(fmt::format("{}: bad step '{}'", path.string(), r[1]));
      }
      if (!by_modality.count(r[0])) order.push_back(r[0]);
      by_modality[r[0]][static_cast<int>(step)] = value;
    }
    for (const auto& name : order) {
      Series s{inputs.size() > 1 ? series_label(path) + ": " + name : name, {}};
      for (const auto& [step, value] : by_modality[name]) {
        s.values.push_back(value);
        peak = std::max(peak, value);
      }
      steps = std::max(steps, s.values.size());
      series.push_back(std::move(s));
    }
  }
  if (peak <= 0.0) peak = 1.0;
  Svg svg;
  svg.text(kWidth / 2, kTop - 16, "Representation drift per incremental step", "middle");
  const double cx = (kWidth - kRight) / 2 + 20, cy = (kHeight + kTop - 20) / 2;
  const double radius = std::min(kWidth - kRight, kHeight - kTop) / 2 - 40;
  auto angle = [&](std::size_t i) {
    return -M_PI / 2 + 2 * M_PI * static_cast<double>(i) / static_cast<double>(steps);
  };
  for (int ring = 1; ring <= 4; ++ring) {
    std::vector<std::pair<double, double>> pts;
    const double r = radius * ring / 4.0;
    for (std::size_t i = 0; i < steps; ++i) {
      pts.emplace_back(cx + r * std::cos(angle(i)), cy + r * std::sin(angle(i)));
    }
    svg.polyline(pts, "#dddddd", true);
  }
  for (std::size_t i = 0; i < steps; ++i) {
    const double x = cx + radius * std::cos(angle(i)), y = cy + radius * std::sin(angle(i));
    svg.line(cx, cy, x, y, "#bbbbbb");
    svg.text(cx + (radius + 14) * std::cos(angle(i)),
             cy + (radius + 14) * std::sin(angle(i)) + 4, std::to_string(i + 1), "middle");
  }
  svg.text(cx, cy + radius + 36, fmt::format("outer ring = {:.3g}", peak), "middle");
  std::vector<std::string> labels;
  for (std::size_t s = 0; s < series.size(); ++s) {
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = 0; i < series[s].values.size(); ++i) {
      const double r = radius * series[s].values[i] / peak;
      pts.emplace_back(cx + r * std::cos(angle(i)), cy + r * std::sin(angle(i)));
    }
    svg.polyline(pts, colour(s), true);
    labels.push_back(series[s].label);
  }
  svg.legend(labels);
  svg.save(out);
}

}  // namespace

std::optional<PlotKind> parse_plot_kind(const std::string& name) {
  if (name == "success_curve") return PlotKind::SuccessCurve;
  if (name == "fwt_bars") return PlotKind::FwtBars;
  if (name == "nbt_bars") return PlotKind::NbtBars;
  if (name == "drift_radar") return PlotKind::DriftRadar;
  return std::nullopt;
}

int cmd_plot(PlotKind kind, const std::vector<std::filesystem::path>& inputs,
             const std::filesystem::path& out_svg, std::ostream& err) {
  if (inputs.empty()) {
    err << "plot: no input files\n";
    return kInvalid;
  }
  try {
    switch (kind) {
      case PlotKind::SuccessCurve:
        plot_success_curve(inputs, out_svg);
        break;
      case PlotKind::FwtBars:
        plot_bars(inputs, out_svg, "fwt");
        break;
      case PlotKind::NbtBars:
        plot_bars(inputs, out_svg, "nbt");
        break;
      case PlotKind::DriftRadar:
        plot_drift_radar(inputs, out_svg);
        break;
    }
  } catch (const Error& e) {
    err << "plot: " << e.what() << '\n';
    return kInvalid;
  }
  return kOk;
}

}  // namespace spread::cli
