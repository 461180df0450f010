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

#include "comfetch/config.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "comfetch/errors.h"

namespace comfetch {

namespace {

std::string Trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double ParseReal(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || !std::isfinite(out))
    throw ConfigError(key, "expected a real number, got '" + v + "'");
  return out;
}

std::uint64_t ParseU64(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc() || ptr != end || v.empty())
    throw ConfigError(key, "expected a non-negative integer, got '" + v + "'");
  return out;
}

std::size_t ParseCount(const std::string& key, const std::string& v) {
  return static_cast<std::size_t>(ParseU64(key, v));
}

bool ParseBool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(key, "expected true or false, got '" + v + "'");
}

std::string Fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

LossKind ParseLoss(const std::string& name) {
  if (name == "squared" || name == "squared-error" || name == "mse")
    return LossKind::kSquaredError;
  if (name == "cross-entropy" || name == "softmax-cross-entropy" || name == "ce")
    return LossKind::kSoftmaxCrossEntropy;
  throw ConfigError("loss", "unknown loss '" + name + "' (squared | cross-entropy)");
}

std::string ToString(LossKind loss) {
  return loss == LossKind::kSquaredError ? "squared" : "cross-entropy";
}

std::map<std::string, std::string> ParseKeyList(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = Trim(item);
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos) {
      out[item] = "";
    } else {
      out[Trim(item.substr(0, eq))] = Trim(item.substr(eq + 1));
    }
  }
  return out;
}

NetworkSpec ParseNetworkSpec(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos)
    throw ConfigError("network", "expected 'fc:...' or 'conv:...', got '" + text + "'");
  const std::string kind = Trim(text.substr(0, colon));
  const std::string body = Trim(text.substr(colon + 1));
  NetworkSpec spec;
  if (kind == "fc") {
    std::vector<std::size_t> dims;
    std::stringstream ss(body);
    std::string part;
    while (std::getline(ss, part, '-')) dims.push_back(ParseCount("network", Trim(part)));
    if (dims.size() < 3)
      throw ConfigError("network", "fc needs input, at least one hidden width and outputs");
    const std::size_t outputs = dims.back();
    dims.pop_back();
    spec = NetworkSpec::FullyConnected(dims, outputs);
  } else if (kind == "conv") {
    auto kv = ParseKeyList(body);
    auto take = [&](std::initializer_list<const char*> names, std::optional<std::string> dflt) {
      for (const char* n : names) {
        auto it = kv.find(n);
        if (it != kv.end()) {
          std::string v = it->second;
          kv.erase(it);
          return v;
        }
      }
      if (!dflt) throw ConfigError("network", std::string("conv spec is missing '") +
                                                  *names.begin() + "'");
      return *dflt;
    };
    const std::size_t in = ParseCount("network", take({"in", "s0"}, "1"));
    const std::size_t m = ParseCount("network", take({"m"}, std::nullopt));
    const std::string image = take({"image"}, std::nullopt);
    const auto x = image.find('x');
    if (x == std::string::npos) throw ConfigError("network", "image must be HxW");
    const std::size_t h = ParseCount("network", image.substr(0, x));
    const std::size_t w = ParseCount("network", image.substr(x + 1));
    const std::size_t q = ParseCount("network", take({"q"}, std::nullopt));
    const std::size_t depth = ParseCount("network", take({"L", "depth"}, std::nullopt));
    const double c_sigma = ParseReal("network", take({"c_sigma"}, "2"));
    const double c_res = ParseReal("network", take({"c_res"}, "0.5"));
    const std::size_t outputs = ParseCount("network", take({"out", "outputs"}, "1"));
    if (!kv.empty())
      throw ConfigError("network", "unknown conv parameter '" + kv.begin()->first + "'");
    spec = NetworkSpec::ConvResNet(in, m, h, w, q, depth, c_sigma, c_res, outputs);
  } else {
    throw ConfigError("network", "unknown network kind '" + kind + "'");
  }
  try {
    spec.Validate();
  } catch (const ContractViolation& e) {
    throw ConfigError("network", e.what());
  }
  return spec;
}

void SetConfigValue(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  using Setter = std::function<void(const std::string&)>;
  const std::map<std::string, Setter> setters = {
      {"network", [&](const std::string& v) { cfg.network = v; }},
      {"dataset", [&](const std::string& v) { cfg.dataset = v; }},
      {"test_dataset", [&](const std::string& v) { cfg.test_dataset = v; }},
      {"holdout", [&](const std::string& v) { cfg.holdout = ParseReal(key, v); }},
      {"mode", [&](const std::string& v) { cfg.mode = ParseMode(v); }},
      {"loss",
       [&](const std::string& v) {
         if (v == "auto") {
           cfg.loss.reset();
         } else {
           cfg.loss = ParseLoss(v);
         }
       }},
      {"partition",
       [&](const std::string& v) {
         try {
           cfg.partition = ParsePartitionStrategy(v);
         } catch (const ContractViolation&) {
           throw ConfigError(key, "unknown strategy '" + v + "' (iid | label-shard | single-point)");
         }
       }},
      {"clients", [&](const std::string& v) { cfg.clients = ParseCount(key, v); }},
      {"sample", [&](const std::string& v) { cfg.sample = ParseCount(key, v); }},
      {"rounds", [&](const std::string& v) { cfg.rounds = ParseCount(key, v); }},
      {"batch", [&](const std::string& v) { cfg.batch = ParseCount(key, v); }},
      {"lr", [&](const std::string& v) { cfg.lr = ParseReal(key, v); }},
      {"momentum", [&](const std::string& v) { cfg.momentum = ParseReal(key, v); }},
      {"topk", [&](const std::string& v) { cfg.topk = ParseReal(key, v); }},
      {"sketch_ratio", [&](const std::string& v) { cfg.sketch_ratio = ParseReal(key, v); }},
      {"sketches", [&](const std::string& v) { cfg.sketches = ParseCount(key, v); }},
      {"identity_hash", [&](const std::string& v) { cfg.identity_hash = ParseBool(key, v); }},
      {"train_output", [&](const std::string& v) { cfg.train_output = ParseBool(key, v); }},
      {"weighted", [&](const std::string& v) { cfg.weighted = ParseBool(key, v); }},
      {"full_grad", [&](const std::string& v) { cfg.full_grad = ParseBool(key, v); }},
      {"bound_epsilon", [&](const std::string& v) { cfg.bound_epsilon = ParseReal(key, v); }},
      {"workers", [&](const std::string& v) { cfg.workers = ParseCount(key, v); }},
      {"eval_every", [&](const std::string& v) { cfg.eval_every = ParseCount(key, v); }},
      {"seed", [&](const std::string& v) { cfg.seed = ParseU64(key, v); }},
      {"out", [&](const std::string& v) { cfg.out = v; }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) throw ConfigError(key, "unknown key");
  it->second(value);
}

ExperimentConfig ParseConfig(const std::string& text, const std::string& origin) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::stringstream ss(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("", origin + ":" + std::to_string(lineno) + ": expected key = value");
    const std::string key = Trim(line.substr(0, eq));
    const std::string value = Trim(line.substr(eq + 1));
    if (!seen.insert(key).second)
      throw ConfigError(key, origin + ":" + std::to_string(lineno) + ": duplicate key");
    SetConfigValue(cfg, key, value);
  }
  if (!seen.count("sample") && seen.count("clients")) cfg.sample = cfg.clients;
  cfg.Validate();
  return cfg;
}

ExperimentConfig LoadConfig(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return ParseConfig(buf.str(), path);
}

void ExperimentConfig::Validate() const {
  if (network.empty()) throw ConfigError("network", "required");
  if (dataset.empty()) throw ConfigError("dataset", "required");
  ParseNetworkSpec(network);
  if (clients < 1) throw ConfigError("clients", "must be at least 1");
  if (sample < 1) throw ConfigError("sample", "must be at least 1");
  if (sample > clients) throw ConfigError("sample", "cannot exceed clients");
  if (rounds < 1) throw ConfigError("rounds", "must be at least 1");
  if (!(lr > 0.0)) throw ConfigError("lr", "must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum", "must lie in [0, 1)");
  if (!(topk > 0.0 && topk <= 1.0)) throw ConfigError("topk", "must lie in (0, 1]");
  if (!(sketch_ratio > 0.0 && sketch_ratio <= 1.0))
    throw ConfigError("sketch_ratio", "must lie in (0, 1]");
  if (sketches < 1 || sketches > 65535) throw ConfigError("sketches", "must lie in [1, 65535]");
  if (!(holdout >= 0.0 && holdout < 1.0)) throw ConfigError("holdout", "must lie in [0, 1)");
  if (!(bound_epsilon > 0.0)) throw ConfigError("bound_epsilon", "must be positive");
  if (workers < 1) throw ConfigError("workers", "must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every", "must be at least 1");
}

std::string ExperimentConfig::ToText() const {
  std::ostringstream os;
  os << "network = " << network << "\n"
     << "dataset = " << dataset << "\n";
  if (!test_dataset.empty()) os << "test_dataset = " << test_dataset << "\n";
  os << "holdout = " << Fmt(holdout) << "\n"
     << "mode = " << ToString(mode) << "\n"
     << "loss = " << (loss ? ToString(*loss) : "auto") << "\n"
     << "partition = " << ToString(partition) << "\n"
     << "clients = " << clients << "\n"
     << "sample = " << sample << "\n"
     << "rounds = " << rounds << "\n"
     << "batch = " << batch << "\n"
     << "lr = " << Fmt(lr) << "\n"
     << "momentum = " << Fmt(momentum) << "\n"
     << "topk = " << Fmt(topk) << "\n"
     << "sketch_ratio = " << Fmt(sketch_ratio) << "\n"
     << "sketches = " << sketches << "\n"
     << "identity_hash = " << (identity_hash ? "true" : "false") << "\n"
     << "train_output = " << (train_output ? "true" : "false") << "\n"
     << "weighted = " << (weighted ? "true" : "false") << "\n"
     << "full_grad = " << (full_grad ? "true" : "false") << "\n"
     << "bound_epsilon = " << Fmt(bound_epsilon) << "\n"
     << "workers = " << workers << "\n"
     << "eval_every = " << eval_every << "\n"
     << "seed = " << seed << "\n"
     << "out = " << out << "\n";
  return os.str();
}

ProtocolConfig ExperimentConfig::Protocol(LossKind resolved_loss) const {
  ProtocolConfig p;
  p.mode = mode;
  p.sketch_ratio = sketch_ratio;
  p.sketches = sketches;
  p.identity_hash = identity_hash;
  p.loss = resolved_loss;
  p.lr = lr;
  p.momentum = momentum;
  p.topk_fraction = topk;
  p.train_output = train_output;
  p.weighted_aggregation = weighted;
  p.batch = batch;
  p.workers = workers;
  p.root_seed = seed;
  return p;
}

}  // namespace comfetch
