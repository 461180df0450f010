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
// Dataset sources:
//
//   synthetic:teacher-fc,d=32,n=2000,seed=1[,classes=10][,hidden=32][,draw=0]
//       Inputs x ~ N(0, I_d). A hidden FC teacher d -> hidden -> classes,
//       initialised from `seed`, provides the regression target (its raw
//       output) and the label (argmax). `draw` reseeds the inputs only, so
//       draw=1 gives a fresh sample from the same teacher.
//   synthetic:teacher-linear,d=8,n=200,seed=1[,outputs=1][,draw=0]
//       y = A·x with a Gaussian A; no labels.
//   csv:path
//       Numeric rows, last column is the label (non-negative integers) or
//       the regression target. An optional non-numeric header row is
//       skipped. Features are standardised per column.
//   idx:images,labels[,limit=N]
//       Standard IDX ubyte files. Pixels are scaled by 1/255.

#ifndef COMFETCH_DATA_IO_H_
#define COMFETCH_DATA_IO_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "comfetch/dataset.h"

namespace comfetch {

struct FeatureScaling {
  Vector mean;
  Vector scale;
  bool empty() const { return mean.empty(); }
};

struct LoadedDataset {
  ClientDataset data;
  std::size_t features = 0;
  /// Number of classes; 0 for unlabeled (regression) data.
  std::size_t classes = 0;
  /// Set for CSV sources; reuse it for the matching test split.
  FeatureScaling scaling;
};

/// Parses the source string and loads it. `reuse` replaces the fitted
/// standardisation for CSV sources.
LoadedDataset LoadDataset(const std::string& source, const FeatureScaling* reuse = nullptr);

LoadedDataset TeacherFcDataset(std::size_t d, std::size_t n, std::uint64_t seed,
                               std::size_t classes, std::size_t hidden, std::uint64_t draw);
LoadedDataset TeacherLinearDataset(std::size_t d, std::size_t n, std::uint64_t seed,
                                   std::size_t outputs, std::uint64_t draw);
LoadedDataset ReadCsv(const std::string& path, const FeatureScaling* reuse = nullptr);
LoadedDataset ReadIdx(const std::string& images, const std::string& labels,
                      std::size_t limit = 0);

/// Writes IDX ubyte files (images: count×rows×cols, labels: count).
void WriteIdx(const std::string& images, const std::string& labels,
              const std::vector<std::vector<std::uint8_t>>& pixels,
              const std::vector<std::uint8_t>& label_values, std::size_t rows, std::size_t cols);

/// Sets one-hot targets from labels (classes wide).
void AttachOneHotTargets(ClientDataset& data, std::size_t classes);

}  // namespace comfetch

#endif  // COMFETCH_DATA_IO_H_
