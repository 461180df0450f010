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
// End-to-end checks against independent oracles. Shared by `comfetch verify`
// and the acceptance test binary.

#ifndef COMFETCH_VERIFY_H_
#define COMFETCH_VERIFY_H_

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace comfetch {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
  /// Wall-clock limit the check is expected to meet; 0 means none.
  double budget_seconds = 0.0;
};

struct VerifyOptions {
  /// Directory holding digits-{train,test}-*-ubyte.
  std::string data_dir;
  /// Check ids to run; empty runs all.
  std::vector<int> only;
  std::uint64_t seed = 20260401;
  /// Progress output; may be null.
  std::ostream* log = nullptr;
};

struct CheckInfo {
  int id;
  const char* name;
  double budget_seconds;
};

const std::vector<CheckInfo>& ListChecks();

CheckResult CheckGradientIdentity(const VerifyOptions& opts);
CheckResult CheckTwoSidedBackprop(const VerifyOptions& opts);
CheckResult CheckSketchRecovery(const VerifyOptions& opts);
CheckResult CheckErrorFeedbackDegeneracies(const VerifyOptions& opts);
CheckResult CheckConvergenceTrend(const VerifyOptions& opts);
CheckResult CheckLedgerExactness(const VerifyOptions& opts);
CheckResult CheckCompressionAccuracy(const VerifyOptions& opts);
CheckResult CheckPredictionErrorBound(const VerifyOptions& opts);
CheckResult CheckMultiSketchDegeneracy(const VerifyOptions& opts);

/// Runs the selected checks in id order. Exceptions inside a check are
/// reported as a failure of that check.
std::vector<CheckResult> RunChecks(const VerifyOptions& opts);

/// "[PASS] 3 sketch recovery (12.1 s): ..." style line.
std::string FormatCheck(const CheckResult& r);

}  // namespace comfetch

#endif  // COMFETCH_VERIFY_H_
