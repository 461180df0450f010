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

#include "comfetch/verify.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <ostream>
#include <sstream>

#include "comfetch/analysis.h"
#include "comfetch/config.h"
#include "comfetch/data_io.h"
#include "comfetch/errors.h"
#include "comfetch/experiment.h"
#include "comfetch/protocol.h"
#include "comfetch/random.h"
#include "comfetch/sketch.h"

namespace comfetch {

namespace {

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), format, args...);
  return buf;
}

double MaxAbs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

Vector Gaussian(Rng& rng, std::size_t n) {
  Vector v(n);
  for (double& x : v) x = rng.Normal();
  return v;
}

Matrix GaussianMatrix(Rng& rng, std::size_t rows, std::size_t cols) {
  return Matrix(rows, cols, Gaussian(rng, rows * cols));
}

// Kronecker product of dense matrices.
Matrix Kron(const Matrix& a, const Matrix& b) {
  Matrix k(a.rows() * b.rows(), a.cols() * b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j)
      for (std::size_t p = 0; p < b.rows(); ++p)
        for (std::size_t q = 0; q < b.cols(); ++q)
          k(i * b.rows() + p, j * b.cols() + q) = a(i, j) * b(p, q);
  return k;
}

// Column-major vectorisation.
Vector Vec(const Matrix& m) {
  Vector v;
  v.reserve(m.size());
  for (std::size_t j = 0; j < m.cols(); ++j)
    for (std::size_t i = 0; i < m.rows(); ++i) v.push_back(m(i, j));
  return v;
}

// Random clients with Gaussian features. Labels for classification, targets
// for regression.
std::vector<ClientDataset> RandomClients(Rng& rng, std::size_t clients, std::size_t per_client,
                                         std::size_t features, std::size_t outputs) {
  std::vector<ClientDataset> out(clients);
  for (ClientDataset& c : out) {
    for (std::size_t i = 0; i < per_client; ++i) {
      Sample s;
      s.features = Gaussian(rng, features);
      s.target = Gaussian(rng, outputs);
      s.label = static_cast<int>(rng.Index(outputs));
      c.examples.push_back(std::move(s));
    }
  }
  return out;
}

ExperimentData TeacherData(std::size_t d, std::size_t n, std::uint64_t seed, std::size_t classes,
                           const std::string& network, std::size_t clients, LossKind loss) {
  ExperimentData data;
  data.train = TeacherFcDataset(d, n, seed, classes, d, 0);
  data.eval = TeacherFcDataset(d, n / 4, seed, classes, d, 1).data;
  data.spec = ParseNetworkSpec(network);
  data.loss = loss;
  data.clients = Partition(data.train.data, clients, PartitionStrategy::kIid,
                           DeriveSeed(seed, {kPartitionSalt}));
  return data;
}

void Log(const VerifyOptions& opts, const std::string& line) {
  if (opts.log != nullptr) *opts.log << "  " << line << "\n" << std::flush;
}

}  // namespace

const std::vector<CheckInfo>& ListChecks() {
  static const std::vector<CheckInfo> checks = {
      {1, "gradient identity", 10.0},
      {2, "two-sided backprop", 1.0},
      {3, "sketch recovery", 60.0},
      {4, "error-feedback degeneracies", 30.0},
      {5, "convergence trend", 300.0},
      {6, "ledger exactness", 0.0},
      {7, "compression vs accuracy", 900.0},
      {8, "prediction-error bound", 120.0},
      {9, "multi-sketch degeneracy", 0.0},
  };
  return checks;
}

// Hᵀ·(gradient w.r.t. H·W) against central differences of the sketched
// loss with respect to W, layer by layer.
CheckResult CheckGradientIdentity(const VerifyOptions& opts) {
  CheckResult r;
  Rng rng(DeriveSeed(opts.seed, {1}));
  constexpr std::size_t kNets = 50;
  constexpr double kStep = 1e-5, kTol = 1e-5, kKinkMargin = 1e-3;
  double worst = 0.0;
  std::size_t rejected = 0, layers_checked = 0;
  for (std::size_t net_id = 0; net_id < kNets; ++net_id) {
    for (;;) {
      const std::size_t depth = 1 + rng.Index(3);
      std::vector<std::size_t> widths = {2 + rng.Index(15)};
      for (std::size_t l = 0; l < depth; ++l) widths.push_back(2 * (1 + rng.Index(8)));
      const std::size_t outputs = 1 + rng.Index(3);
      const NetworkState net =
          InitNetwork(NetworkSpec::FullyConnected(widths, outputs), rng.Next());
      std::vector<SketchOperator> ops;
      for (std::size_t l = 0; l < depth; ++l)
        ops.emplace_back(widths[l + 1], widths[l + 1] / 2, rng.Next());
      Sample sample;
      sample.features = Gaussian(rng, widths[0]);
      sample.target = Gaussian(rng, outputs);
      sample.label = static_cast<int>(rng.Index(outputs));
      const LossKind loss =
          net_id % 2 == 0 ? LossKind::kSquaredError : LossKind::kSoftmaxCrossEntropy;

      const SketchedNetwork sk = SketchNetwork(net, ops);
      const ForwardTape tape = ForwardSketched(sk, sample.features);
      bool near_kink = false;
      for (const Matrix& p : tape.pre)
        for (double v : p.data()) near_kink |= std::abs(v) < kKinkMargin;
      if (near_kink) {
        ++rejected;
        continue;
      }

      const Gradients g = BackwardSketched(sk, tape, sample, loss);
      for (std::size_t l = 0; l < depth; ++l) {
        const Matrix analytic = RecoverFullGradient(ops[l], g.layers[l]);
        auto f = [&](const Matrix& w) {
          NetworkState moved = net;
          moved.weights[l] = w;
          return LossValue(loss, ForwardSketched(SketchNetwork(moved, ops), sample.features)
                                     .prediction,
                           sample);
        };
        const Matrix fd = FiniteDifferenceGradient(f, net.weights[l], kStep);
        const double scale = std::max(MaxAbs(fd.data()), MaxAbs(analytic.data()));
        const double diff = MaxAbsDiff(fd.data(), analytic.data());
        worst = std::max(worst, scale > 0.0 ? diff / scale : diff);
        ++layers_checked;
      }
      break;
    }
  }
  r.passed = worst <= kTol;
  r.detail = Fmt("%zu nets, %zu layers, max relative error %.3g (tol %.0e), %zu draws "
                 "rejected near ReLU kinks",
                 kNets, layers_checked, worst, kTol, rejected);
  return r;
}

// H₁ᵀ·g̃·H₂ against the Kronecker form vec(H₁ᵀ g̃ H₂) = (H₂ᵀ ⊗ H₁ᵀ)·vec(g̃).
CheckResult CheckTwoSidedBackprop(const VerifyOptions& opts) {
  CheckResult r;
  Rng rng(DeriveSeed(opts.seed, {2}));
  constexpr std::size_t kCases = 100, kD = 4, kC = 2;
  constexpr double kTol = 1e-12;
  double worst = 0.0;
  for (std::size_t i = 0; i < kCases; ++i) {
    const SketchOperator op1(kD, kC, rng.Next());
    const SketchOperator op2(kD, kC, rng.Next());
    const Matrix g = GaussianMatrix(rng, kC, kC);
    const Matrix fast = TwoSidedBackward(op1, op2, g);
    const Matrix kron =
        Kron(Materialize(op2).Transposed(), Materialize(op1).Transposed());
    const Vector expect = MatVec(kron, Vec(g));
    worst = std::max(worst, MaxAbsDiff(Vec(fast), expect));
  }
  r.passed = worst <= kTol;
  r.detail = Fmt("%zu cases at d=%zu, c1=c2=%zu, max abs diff %.3g (tol %.0e)", kCases, kD, kC,
                 worst, kTol);
  return r;
}

CheckResult CheckSketchRecovery(const VerifyOptions& opts) {
  CheckResult r;
  constexpr std::size_t kD = 256, kK = 9, kTrials = 1000;
  constexpr double kEps = 0.1, kMaxRate = 0.05;
  // The test matrices have unit Frobenius norm.
  const std::size_t c = TheoremSketchLength(1.0, kEps, kD);
  const HcsCheckResult h = HcsRecoveryCheck(kD, c, kK, kTrials, kEps, DeriveSeed(opts.seed, {3}));
  r.passed = h.failure_rate <= kMaxRate;
  r.detail = Fmt("d=%zu c=%zu k=%zu, %zu trials: failure rate %.4g (max %.2f), max error %.3g",
                 kD, c, kK, kTrials, h.failure_rate, kMaxRate, h.max_error);
  return r;
}

CheckResult CheckErrorFeedbackDegeneracies(const VerifyOptions& opts) {
  CheckResult r;
  std::ostringstream detail;
  bool ok = true;

  // (a) Full Top-k budget, no momentum: W ← W − η·g every round, with g
  // cross-checked against the dense surrogate's gradient.
  {
    const std::uint64_t seed = DeriveSeed(opts.seed, {4, 1});
    const ExperimentData data =
        TeacherData(12, 60, seed, 4, "fc:12-16-12-4", 4, LossKind::kSoftmaxCrossEntropy);
    ProtocolConfig p;
    p.mode = Mode::kComfetch;
    p.sketch_ratio = 0.5;
    p.loss = data.loss;
    p.lr = 0.05;
    p.momentum = 0.0;
    p.topk_fraction = 1.0;
    p.root_seed = seed;
    Server server(InitNetwork(data.spec, DeriveSeed(seed, {kInitSalt})), p);
    constexpr std::size_t kRounds = 30, kSample = 3;
    std::size_t mismatched = 0;
    double worst_grad = 0.0;
    for (std::size_t t = 1; t <= kRounds; ++t) {
      const NetworkState before = server.model();
      std::vector<SketchOperator> ops;
      for (std::size_t l = 0; l < data.spec.num_layers(); ++l)
        ops.push_back(server.LayerOperators(t, l).front());
      const NetworkState surrogate = DenseSurrogate(before, ops);
      const std::vector<std::size_t> ids =
          server.SampleClients(t, data.clients.size(), kSample);
      std::vector<Matrix> oracle;
      for (std::size_t l = 0; l < ops.size(); ++l)
        oracle.emplace_back(before.weights[l].rows(), before.weights[l].cols());
      for (std::size_t id : ids) {
        const ClientDataset& local = data.clients[id];
        std::vector<Matrix> sum(oracle.size());
        for (const Sample& s : local.examples) {
          const Gradients g = Backward(surrogate, Forward(surrogate, s.features), s, data.loss);
          for (std::size_t l = 0; l < ops.size(); ++l) {
            // d/dW f(HᵀH·W) = HᵀH·G.
            const Matrix dw = UnsketchMatrix(ops[l], SketchMatrix(ops[l], g.layers[l]));
            sum[l] = sum[l].empty() ? dw : sum[l] + dw;
          }
        }
        for (std::size_t l = 0; l < ops.size(); ++l)
          oracle[l] += (1.0 / (static_cast<double>(local.size()) * kSample)) * sum[l];
      }

      server.RunRound(data.clients, kSample);
      const AggregatedGradient& g = server.last_gradient();
      for (std::size_t l = 0; l < ops.size(); ++l) {
        const double scale = std::max(MaxAbs(oracle[l].data()), 1e-300);
        worst_grad = std::max(worst_grad, MaxAbsDiff(oracle[l].data(), g.layers[l].data()) / scale);
        const auto& w0 = before.weights[l].data();
        const auto& w1 = server.model().weights[l].data();
        for (std::size_t i = 0; i < w0.size(); ++i)
          mismatched += w1[i] != w0[i] - p.lr * g.layers[l].data()[i] ? 1 : 0;
      }
      const auto& a0 = before.output.data();
      const auto& a1 = server.model().output.data();
      for (std::size_t i = 0; i < a0.size(); ++i)
        mismatched += a1[i] != a0[i] - p.lr * g.output.data()[i] ? 1 : 0;
    }
    const bool pass = mismatched == 0 && worst_grad <= 1e-10;
    ok &= pass;
    detail << Fmt("full budget: %zu rounds, %zu entries off the SGD step, surrogate gradient "
                  "rel err %.3g; ",
                  kRounds, mismatched, worst_grad);
  }

  // (b) Identity hash at c = d against the uncompressed baseline.
  {
    ExperimentConfig cfg;
    cfg.network = "fc:16-32-32-10";
    cfg.dataset = "synthetic:teacher-fc,d=16,n=400,seed=5";
    cfg.clients = 10;
    cfg.sample = 5;
    cfg.rounds = 100;
    cfg.batch = 16;
    cfg.lr = 0.05;
    cfg.momentum = 0.9;
    cfg.seed = DeriveSeed(opts.seed, {4, 2});
    cfg.identity_hash = true;
    cfg.sketch_ratio = 1.0;
    const ExperimentData data = PrepareExperiment(cfg);
    RunOptions ro;
    ro.write_files = false;
    const ExperimentResult sketched = RunExperiment(cfg, data, ro);
    cfg.mode = Mode::kUncompressed;
    cfg.identity_hash = false;
    const ExperimentResult dense = RunExperiment(cfg, data, ro);
    double worst = std::numeric_limits<double>::infinity();
    if (sketched.rows.size() == cfg.rounds && dense.rows.size() == cfg.rounds) {
      worst = 0.0;
      for (std::size_t t = 0; t < cfg.rounds; ++t)
        worst = std::max(worst, std::abs(sketched.rows[t].loss - dense.rows[t].loss));
    }
    const bool pass = worst <= 1e-9;
    ok &= pass;
    detail << Fmt("identity hash: max loss gap %.3g over %zu rounds (baseline loss %.4f -> %.4f)",
                  worst, cfg.rounds, dense.rows.empty() ? NAN : dense.rows.front().loss,
                  dense.rows.empty() ? NAN : dense.rows.back().loss);
  }
  r.passed = ok;
  r.detail = detail.str();
  return r;
}

CheckResult CheckConvergenceTrend(const VerifyOptions& opts) {
  CheckResult r;
  ExperimentConfig cfg;
  cfg.network = "fc:32-64-64-10";
  cfg.dataset = "synthetic:teacher-fc,d=32,n=2000,seed=1";
  cfg.loss = LossKind::kSoftmaxCrossEntropy;
  cfg.clients = 10;
  cfg.sample = 5;
  cfg.rounds = 500;
  cfg.batch = 16;
  cfg.lr = 0.001;
  cfg.momentum = 0.9;
  cfg.topk = 0.10;
  cfg.sketch_ratio = 0.5;
  cfg.sketches = 1;
  cfg.full_grad = true;
  cfg.seed = DeriveSeed(opts.seed, {5});
  RunOptions ro;
  ro.write_files = false;
  const ExperimentResult res = RunExperiment(cfg, ro);
  if (res.exit_code != kExitOk || res.rows.size() != cfg.rounds) {
    r.detail = "run stopped early: " + res.error;
    return r;
  }
  const double first = res.summary["min_grad_norm_first"].get<double>();
  const double last = res.summary["min_grad_norm_final"].get<double>();
  const double slope = res.summary["convergence_slope"].get<double>();
  r.passed = last <= 0.1 * first && slope < 0.0;
  r.detail = Fmt("T=%zu: running min |grad|^2 %.4g -> %.4g (ratio %.3f, max 0.10), log-log "
                 "slope %.3f; loss %.4f -> %.4f",
                 cfg.rounds, first, last, last / first, slope, res.rows.front().loss,
                 res.rows.back().loss);
  return r;
}

// Ledger counts against the closed form, recomputed here from the layer
// shapes and the sketch-length rule.
CheckResult CheckLedgerExactness(const VerifyOptions& opts) {
  CheckResult r;
  Rng rng(DeriveSeed(opts.seed, {6}));
  constexpr std::size_t kConfigs = 20;
  std::size_t mismatches = 0, rounds_checked = 0;
  std::ostringstream first_bad;
  for (std::size_t cfg_id = 0; cfg_id < kConfigs; ++cfg_id) {
    std::vector<std::size_t> widths;
    std::size_t outputs, clients, sample, rounds, k;
    double ratio;
    Mode mode = Mode::kComfetch;
    if (cfg_id == 0) {
      // Two square 8×8 layers, c = 4, three clients: 2·(4+1)·8·3 = 240 down.
      widths = {8, 8, 8};
      outputs = 2, clients = 3, sample = 3, rounds = 2, k = 1, ratio = 0.5;
    } else {
      const std::size_t depth = 1 + rng.Index(3);
      widths = {2 + rng.Index(39)};
      for (std::size_t l = 0; l < depth; ++l) widths.push_back(2 + rng.Index(39));
      outputs = 1 + rng.Index(5);
      clients = 1 + rng.Index(8);
      sample = 1 + rng.Index(clients);
      rounds = 1 + rng.Index(3);
      k = 1 + rng.Index(3);
      ratio = 0.05 + 0.95 * rng.Uniform();
      if (cfg_id % 5 == 4) mode = Mode::kUncompressed;
    }
    const NetworkSpec spec = NetworkSpec::FullyConnected(widths, outputs);
    ProtocolConfig p;
    p.mode = mode;
    p.sketch_ratio = ratio;
    p.sketches = k;
    p.loss = LossKind::kSquaredError;
    p.lr = 0.01;
    p.batch = 2;
    p.root_seed = rng.Next();
    Server server(InitNetwork(spec, rng.Next()), p);
    const std::vector<ClientDataset> data =
        RandomClients(rng, clients, k > 1 ? 1 : 3, widths.front(), outputs);

    std::uint64_t exp_down = 0, exp_up = 0, exp_down_bytes = 0, exp_up_bytes = 0, exp_base = 0;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
      const std::uint64_t d = widths[l + 1], n = widths[l];
      if (mode == Mode::kUncompressed) {
        exp_down += d * n;
        exp_up += d * n;
        exp_down_bytes += 4 * d * n;
        exp_up_bytes += 4 * d * n;
      } else {
        const auto c = static_cast<std::uint64_t>(
            std::clamp<long long>(std::llround(ratio * static_cast<double>(d)), 1,
                                  static_cast<long long>(d)));
        exp_down += k * (c * n + d);
        exp_up += k * c * n;
        exp_down_bytes += k * (24 + 4 * c * n);
        exp_up_bytes += k * 4 * c * n;
      }
      exp_base += d * n;
    }
    for (std::uint64_t* v : {&exp_down, &exp_up, &exp_down_bytes, &exp_up_bytes, &exp_base})
      *v *= sample;

    for (std::size_t t = 0; t < rounds; ++t) {
      server.RunRound(data, sample);
      const RoundTraffic& rt = server.ledger().rounds().back();
      const bool same = rt.DownVals() == exp_down && rt.UpVals() == exp_up &&
                        rt.DownBytes() == exp_down_bytes && rt.UpBytes() == exp_up_bytes &&
                        rt.BaselineVals() == exp_base;
      if (cfg_id == 0 && rt.DownVals() != 240) ++mismatches;
      if (!same) {
        if (mismatches == 0)
          first_bad << Fmt(" first mismatch: config %zu round %zu down %llu vs %llu", cfg_id,
                           t + 1, static_cast<unsigned long long>(rt.DownVals()),
                           static_cast<unsigned long long>(exp_down));
        ++mismatches;
      }
      ++rounds_checked;
    }
    const LedgerTotals tot = server.ledger().Totals();
    if (tot.down_vals != exp_down * rounds || tot.up_vals != exp_up * rounds) ++mismatches;
  }
  r.passed = mismatches == 0;
  r.detail = Fmt("%zu configurations, %zu rounds, %zu mismatches", kConfigs, rounds_checked,
                 mismatches) +
             first_bad.str();
  return r;
}

CheckResult CheckCompressionAccuracy(const VerifyOptions& opts) {
  CheckResult r;
  namespace fs = std::filesystem;
  const fs::path dir(opts.data_dir);
  const std::string train = "idx:" + (dir / "digits-train-images-idx3-ubyte").string() + "," +
                            (dir / "digits-train-labels-idx1-ubyte").string();
  const std::string test = "idx:" + (dir / "digits-test-images-idx3-ubyte").string() + "," +
                           (dir / "digits-test-labels-idx1-ubyte").string();
  ExperimentConfig cfg;
  cfg.network = "fc:784-64-10";
  cfg.dataset = train;
  cfg.test_dataset = test;
  cfg.clients = 20;
  cfg.sample = 10;
  cfg.rounds = 300;
  cfg.batch = 16;
  cfg.lr = 0.001;
  cfg.momentum = 0.9;
  cfg.topk = 0.10;
  cfg.sketch_ratio = 0.5;
  cfg.eval_every = 300;
  cfg.seed = DeriveSeed(opts.seed, {7});
  const ExperimentData data = PrepareExperiment(cfg);
  RunOptions ro;
  ro.write_files = false;
  const ExperimentResult sketched = RunExperiment(cfg, data, ro);
  Log(opts, Fmt("comfetch done, acc %.4f", Accuracy(sketched.final_model, data.eval)));
  cfg.mode = Mode::kUncompressed;
  const ExperimentResult dense = RunExperiment(cfg, data, ro);
  if (sketched.exit_code != kExitOk || dense.exit_code != kExitOk) {
    r.detail = "run failed: " + sketched.error + dense.error;
    return r;
  }
  const double acc_s = Accuracy(sketched.final_model, data.eval);
  const double acc_d = Accuracy(dense.final_model, data.eval);
  constexpr double kGap = 0.07;
  r.passed = acc_s >= acc_d - kGap;
  r.detail = Fmt("%zu train / %zu test, %zu rounds: comfetch c/d=%.2f acc %.4f, baseline acc "
                 "%.4f, gap %.2f pp (max %.0f), downlink compression %.3f",
                 data.train.data.size(), data.eval.size(), cfg.rounds, cfg.sketch_ratio, acc_s,
                 acc_d, 100.0 * (acc_d - acc_s), 100.0 * kGap,
                 sketched.summary["comp_ratio_down"].get<double>());
  return r;
}

CheckResult CheckPredictionErrorBound(const VerifyOptions& opts) {
  CheckResult r;
  constexpr std::size_t kD = 32, kLayers = 3, kTrials = 500;
  constexpr double kDelta = 0.1, kEps = 0.1;
  const std::size_t k = TheoremSketchCount(kD, kDelta);
  const NetworkSpec spec =
      NetworkSpec::FullyConnected(std::vector<std::size_t>(kLayers + 1, kD), 1);
  std::size_t violations = 0, violations_linear = 0, c_min = kD;
  double worst_ratio = 0.0;
  for (std::size_t t = 0; t < kTrials; ++t) {
    const std::uint64_t trial = DeriveSeed(opts.seed, {8, t});
    const NetworkState net = InitNetwork(spec, DeriveSeed(trial, {0}));
    std::vector<MultiSketch> sketches;
    for (std::size_t l = 0; l < kLayers; ++l) {
      const double frob = FrobeniusNorm(net.weights[l]);
      const std::size_t c = TheoremSketchLength(frob * frob, kEps, kD);
      c_min = std::min(c_min, c);
      sketches.push_back(MultiSketch::Make(kD, c, k, DeriveSeed(trial, {1, l})));
    }
    Rng rng(DeriveSeed(trial, {2}));
    const Vector x = Gaussian(rng, kD);
    const ErrorBoundReport rep = PredictionErrorBound(net, sketches, x, kEps);
    violations += rep.holds ? 0 : 1;
    violations_linear += rep.holds_linear ? 0 : 1;
    if (rep.bound > 0.0) worst_ratio = std::max(worst_ratio, rep.empirical / rep.bound);
  }
  const double p = 1.0 - std::pow(1.0 - kDelta, static_cast<double>(kLayers));
  const double limit = p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(kTrials));
  const double rate = static_cast<double>(violations) / kTrials;
  r.passed = rate <= limit;
  r.detail = Fmt("L=%zu d=%zu k=%zu c>=%zu eps=%.2f, %zu trials: violation rate %.4f (limit "
                 "%.4f), with d*eps^2 terms %.4f, max empirical/bound %.3g",
                 kLayers, kD, k, c_min, kEps, kTrials, rate, limit,
                 static_cast<double>(violations_linear) / kTrials, worst_ratio);
  return r;
}

CheckResult CheckMultiSketchDegeneracy(const VerifyOptions& opts) {
  CheckResult r;
  const std::uint64_t seed = DeriveSeed(opts.seed, {9});
  const ExperimentData data =
      TeacherData(16, 120, seed, 5, "fc:16-24-20-5", 6, LossKind::kSoftmaxCrossEntropy);
  ProtocolConfig p;
  p.mode = Mode::kComfetch;
  p.sketch_ratio = 0.5;
  p.loss = data.loss;
  p.lr = 0.05;
  p.momentum = 0.9;
  p.topk_fraction = 0.1;
  p.batch = 4;
  p.root_seed = seed;
  const NetworkState init = InitNetwork(data.spec, DeriveSeed(seed, {kInitSalt}));
  Server single(init, p);
  p.force_multi_sketch = true;
  Server multi(init, p);
  constexpr std::size_t kRounds = 50;
  std::size_t first_diff = 0;
  for (std::size_t t = 1; t <= kRounds && first_diff == 0; ++t) {
    const RoundReport a = single.RunRound(data.clients, 4);
    const RoundReport b = multi.RunRound(data.clients, 4);
    const bool same = a.loss_mean == b.loss_mean && a.grad_norm_sq == b.grad_norm_sq &&
                      single.model().weights == multi.model().weights &&
                      single.model().output == multi.model().output &&
                      a.traffic.DownVals() == b.traffic.DownVals() &&
                      a.traffic.UpVals() == b.traffic.UpVals();
    if (!same) first_diff = t;
  }
  r.passed = first_diff == 0;
  r.detail = first_diff == 0
                 ? Fmt("%zu rounds, weights, losses and traffic bit-identical", kRounds)
                 : Fmt("diverged in round %zu", first_diff);
  return r;
}

std::vector<CheckResult> RunChecks(const VerifyOptions& opts) {
  using Fn = CheckResult (*)(const VerifyOptions&);
  static const Fn fns[] = {CheckGradientIdentity,       CheckTwoSidedBackprop,
                           CheckSketchRecovery,         CheckErrorFeedbackDegeneracies,
                           CheckConvergenceTrend,       CheckLedgerExactness,
                           CheckCompressionAccuracy,    CheckPredictionErrorBound,
                           CheckMultiSketchDegeneracy};
  std::vector<CheckResult> out;
  for (const CheckInfo& info : ListChecks()) {
    if (!opts.only.empty() &&
        std::find(opts.only.begin(), opts.only.end(), info.id) == opts.only.end())
      continue;
    if (opts.log != nullptr) *opts.log << "running check " << info.id << " (" << info.name
                                       << ")\n" << std::flush;
    const auto start = std::chrono::steady_clock::now();
    CheckResult res;
    try {
      res = fns[info.id - 1](opts);
    } catch (const std::exception& e) {
      res.passed = false;
      res.detail = std::string("exception: ") + e.what();
    }
    res.id = info.id;
    res.name = info.name;
    res.budget_seconds = info.budget_seconds;
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(res));
  }
  return out;
}

std::string FormatCheck(const CheckResult& r) {
  std::string budget;
  if (r.budget_seconds > 0.0) budget = Fmt(", budget %.0f s", r.budget_seconds);
  return Fmt("[%s] %d %s (%.2f s%s): ", r.passed ? "PASS" : "FAIL", r.id, r.name.c_str(),
             r.seconds, budget.c_str()) +
         r.detail;
}

}  // namespace comfetch
