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
//
// Static SVG line charts from metrics CSV files.

#ifndef COMFETCH_PLOTS_H_
#define COMFETCH_PLOTS_H_

#include <map>
#include <string>
#include <utility>
#include <vector>

namespace comfetch {

struct MetricsTable {
  std::string label;
  std::vector<std::string> columns;
  /// Column name -> values per row; empty cells are NaN.
  std::map<std::string, std::vector<double>> values;
  std::size_t rows = 0;
};

/// Reads a metrics CSV. IoError when unreadable, empty, or when one of the
/// `required` columns is missing (the message names it).
MetricsTable ReadMetricsCsv(const std::string& path, const std::vector<std::string>& required);

struct ChartSeries {
  std::string label;
  std::vector<std::pair<double, double>> points;
};

/// One SVG document; `log_y` plots log10 of positive values.
std::string RenderLineChart(const std::string& title, const std::string& x_label,
                            const std::string& y_label, const std::vector<ChartSeries>& series,
                            bool log_y = false);

/// Writes loss.svg, acc.svg, min_grad_norm.svg and hh_ratio.svg into
/// `out_dir`, one line per input CSV. Charts with no finite data (acc on
/// unlabeled runs) are skipped. Returns the written paths.
std::vector<std::string> EmitPlots(const std::vector<std::string>& csv_paths,
                                   const std::string& out_dir);

}  // namespace comfetch

#endif  // COMFETCH_PLOTS_H_
