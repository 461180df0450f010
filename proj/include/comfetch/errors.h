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

#ifndef COMFETCH_ERRORS_H_
#define COMFETCH_ERRORS_H_

#include <stdexcept>
#include <string>

namespace comfetch {

/// A caller broke a documented precondition (shape mismatch, bad range, ...).
class ContractViolation : public std::invalid_argument {
 public:
  explicit ContractViolation(const std::string& what)
      : std::invalid_argument(what) {}
};

/// A computation produced or was fed non-finite values.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Configuration could not be parsed or validated. `key()` names the
/// offending entry when there is one.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string key, const std::string& what)
      : std::runtime_error(key.empty() ? what : key + ": " + what),
        key_(std::move(key)) {}
  const std::string& key() const { return key_; }

 private:
  std::string key_;
};

/// File could not be read, written or parsed.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

#define COMFETCH_REQUIRE(cond, msg)                                   \
  do {                                                                \
    if (!(cond)) throw ::comfetch::ContractViolation(                 \
        std::string(__func__) + ": " + (msg));                        \
  } while (0)

}  // namespace comfetch

#endif  // COMFETCH_ERRORS_H_
