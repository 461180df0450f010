// Copyright 2026 The Comfetch Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#include "comfetch/plots.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "comfetch/errors.h"

namespace comfetch {

namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                    "#9467bd", "#8c564b", "#17becf", "#7f7f7f"};

std::vector<std::string> SplitCsv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

std::string Escape(const std::string& s) {
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

std::string Tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

}  // namespace

MetricsTable ReadMetricsCsv(const std::string& path, const std::vector<std::string>& required) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  MetricsTable t;
  t.label = std::filesystem::path(path).parent_path().filename().string();
  if (t.label.empty()) t.label = std::filesystem::path(path).stem().string();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (t.columns.empty()) {
      t.columns = SplitCsv(line);
      for (const std::string& c : t.columns) t.values[c];
      continue;
    }
    const auto cells = SplitCsv(line);
    if (cells.size() != t.columns.size())
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " +
                    std::to_string(t.columns.size()) + " cells");
    for (std::size_t i = 0; i < cells.size(); ++i) {
      double v = std::numeric_limits<double>::quiet_NaN();
      if (!cells[i].empty()) {
        try {
          v = std::stod(cells[i]);
        } catch (const std::exception&) {
          throw IoError(path + ":" + std::to_string(lineno) + ": bad value in column '" +
                        t.columns[i] + "'");
        }
      }
      t.values[t.columns[i]].push_back(v);
    }
    ++t.rows;
  }
  if (t.columns.empty()) throw IoError(path + ": no header");
  for (const std::string& r : required)
    if (!t.values.count(r)) throw IoError(path + ": missing column '" + r + "'");
  if (t.rows == 0) throw IoError(path + ": no metric rows");
  return t;
}

std::string RenderLineChart(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<ChartSeries>& series,
                            bool log_y) {
  constexpr double kW = 640, kH = 400, kLeft = 70, kRight = 20, kTop = 40, kBottom = 50;
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  auto ty = [&](double y) { return log_y ? std::log10(y) : y; };
  for (const ChartSeries& s : series) {
    for (const auto& [x, y] : s.points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0)) continue;
      x0 = std::min(x0, x);
      x1 = std::max(x1, x);
      y0 = std::min(y0, ty(y));
      y1 = std::max(y1, ty(y));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 == x0) x1 = x0 + 1;
  if (y1 == y0) y0 -= 0.5, y1 += 0.5;
  const double pw = kW - kLeft - kRight, ph = kH - kTop - kBottom;
  auto px = [&](double x) { return kLeft + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return kTop + ph - (y - y0) / (y1 - y0) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
     << "<text x=\"" << kW / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
     << Escape(title) << "</text>\n"
     << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double fx = x0 + (x1 - x0) * i / 4.0;
    os << "<text x=\"" << kLeft - 6 << "\" y=\"" << py(fy) + 4 << "\" text-anchor=\"end\">"
       << (log_y ? "1e" + Tick(fy) : Tick(fy)) << "</text>\n"
       << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + pw << "\" y1=\"" << py(fy) << "\" y2=\""
       << py(fy) << "\" stroke=\"#ddd\"/>\n"
       << "<text x=\"" << px(fx) << "\" y=\"" << kTop + ph + 18
       << "\" text-anchor=\"middle\">" << Tick(fx) << "</text>\n";
  }
  os << "<text x=\"" << kLeft + pw / 2 << "\" y=\"" << kH - 10 << "\" text-anchor=\"middle\">"
     << Escape(x_label) << "</text>\n"
     << "<text transform=\"translate(16," << kTop + ph / 2
     << ") rotate(-90)\" text-anchor=\"middle\">" << Escape(y_label) << "</text>\n";

  for (std::size_t k = 0; k < series.size(); ++k) {
    const char* color = kPalette[k % std::size(kPalette)];
    os << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[k].points) {
      if (!std::isfinite(x) || !std::isfinite(y) || (log_y && y <= 0)) continue;
      os << px(x) << ',' << py(ty(y)) << ' ';
    }
    os << "\"/>\n"
       << "<text x=\"" << kLeft + pw - 8 << "\" y=\"" << kTop + 16 + 16 * k
       << "\" text-anchor=\"end\" fill=\"" << color << "\">" << Escape(series[k].label)
       << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::vector<std::string> EmitPlots(const std::vector<std::string>& csv_paths,
                                   const std::string& out_dir) {
  if (csv_paths.empty()) throw IoError("no metrics files given");
  const std::vector<std::string> metrics = {"loss", "acc", "min_grad_norm", "hh_ratio"};
  std::vector<std::string> required = metrics;
  required.insert(required.begin(), "round");
  std::vector<MetricsTable> tables;
  for (const std::string& p : csv_paths) tables.push_back(ReadMetricsCsv(p, required));
  if (tables.size() > 1) {
    for (std::size_t i = 0; i < tables.size(); ++i)
      if (std::count_if(tables.begin(), tables.end(),
                        [&](const MetricsTable& t) { return t.label == tables[i].label; }) > 1)
        tables[i].label += "#" + std::to_string(i + 1);
  }

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create '" + out_dir + "': " + ec.message());
  std::vector<std::string> written;
  for (const std::string& m : metrics) {
    std::vector<ChartSeries> series;
    bool any = false;
    for (const MetricsTable& t : tables) {
      ChartSeries s;
      s.label = t.label;
      const auto& xs = t.values.at("round");
      const auto& ys = t.values.at(m);
      for (std::size_t i = 0; i < t.rows; ++i) {
        if (std::isfinite(ys[i])) {
          s.points.emplace_back(xs[i], ys[i]);
          any = true;
        }
      }
      series.push_back(std::move(s));
    }
    if (!any) continue;
    const bool log_y = m == "min_grad_norm";
    const std::string path = (std::filesystem::path(out_dir) / (m + ".svg")).string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << RenderLineChart(m + " vs round", "round", log_y ? m + " (log10)" : m, series, log_y);
    written.push_back(path);
  }
  return written;
}

}  // namespace comfetch
