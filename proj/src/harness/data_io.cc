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

#include "comfetch/data_io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "comfetch/config.h"
#include "comfetch/errors.h"
#include "comfetch/network.h"
#include "comfetch/random.h"

namespace comfetch {

namespace {

std::size_t CountParam(const std::map<std::string, std::string>& kv, const std::string& key,
                       std::optional<std::size_t> dflt, const std::string& source) {
  const auto it = kv.find(key);
  if (it == kv.end()) {
    if (!dflt) throw ConfigError("dataset", "'" + source + "' is missing '" + key + "'");
    return *dflt;
  }
  std::size_t v = 0;
  const auto* end = it->second.data() + it->second.size();
  const auto [ptr, ec] = std::from_chars(it->second.data(), end, v);
  if (ec != std::errc() || ptr != end || it->second.empty())
    throw ConfigError("dataset", key + " must be a non-negative integer");
  return v;
}

bool ParseNumber(const std::string& field, double& out) {
  std::size_t b = field.find_first_not_of(" \t\r");
  std::size_t e = field.find_last_not_of(" \t\r");
  if (b == std::string::npos) return false;
  const char* first = field.data() + b;
  const char* last = field.data() + e + 1;
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::uint32_t ReadBe32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw IoError(path + ": truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

void WriteBe32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                     static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

void AttachOneHotTargets(ClientDataset& data, std::size_t classes) {
  for (Sample& s : data.examples) {
    s.target.assign(classes, 0.0);
    if (s.label >= 0 && static_cast<std::size_t>(s.label) < classes) s.target[s.label] = 1.0;
  }
}

LoadedDataset TeacherFcDataset(std::size_t d, std::size_t n, std::uint64_t seed,
                               std::size_t classes, std::size_t hidden, std::uint64_t draw) {
  COMFETCH_REQUIRE(d >= 1 && n >= 1 && classes >= 1 && hidden >= 1, "empty teacher dataset");
  const NetworkState teacher =
      InitNetwork(NetworkSpec::FullyConnected({d, hidden}, classes), DeriveSeed(seed, {0}));
  Rng rng(DeriveSeed(seed, {1, draw}));
  LoadedDataset out;
  out.features = d;
  out.classes = classes;
  out.data.tag = "teacher-fc";
  out.data.examples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.features.resize(d);
    for (double& v : s.features) v = rng.Normal();
    s.target = Forward(teacher, s.features).prediction;
    s.label = Argmax(s.target);
    out.data.examples.push_back(std::move(s));
  }
  return out;
}

LoadedDataset TeacherLinearDataset(std::size_t d, std::size_t n, std::uint64_t seed,
                                   std::size_t outputs, std::uint64_t draw) {
  COMFETCH_REQUIRE(d >= 1 && n >= 1 && outputs >= 1, "empty teacher dataset");
  Rng teacher_rng(DeriveSeed(seed, {0}));
  Matrix a(outputs, d);
  for (double& v : a.data()) v = teacher_rng.Normal() / std::sqrt(static_cast<double>(d));
  Rng rng(DeriveSeed(seed, {1, draw}));
  LoadedDataset out;
  out.features = d;
  out.data.tag = "teacher-linear";
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.features.resize(d);
    for (double& v : s.features) v = rng.Normal();
    s.target = MatVec(a, s.features);
    out.data.examples.push_back(std::move(s));
  }
  return out;
}

LoadedDataset ReadCsv(const std::string& path, const FeatureScaling* reuse) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string field;
    bool numeric = true;
    while (std::getline(ss, field, ',')) {
      double v = 0.0;
      if (!ParseNumber(field, v)) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty() && lineno == 1) continue;  // header
      throw IoError(path + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (row.size() < 2)
      throw IoError(path + ":" + std::to_string(lineno) + ": need features and a label");
    if (width == 0) width = row.size();
    if (row.size() != width)
      throw IoError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(width) +
                    " fields, got " + std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw IoError(path + ": no data rows");

  const std::size_t f = width - 1;
  LoadedDataset out;
  out.features = f;
  out.data.tag = "csv:" + path;

  bool labeled = true;
  int max_label = -1;
  for (const auto& r : rows) {
    const double y = r.back();
    if (y < 0.0 || y != std::floor(y) || y > 1e6) {
      labeled = false;
      break;
    }
    max_label = std::max(max_label, static_cast<int>(y));
  }

  if (reuse != nullptr && !reuse->empty()) {
    if (reuse->mean.size() != f)
      throw IoError(path + ": feature count " + std::to_string(f) +
                    " does not match the training data (" + std::to_string(reuse->mean.size()) +
                    ")");
    out.scaling = *reuse;
  } else {
    out.scaling.mean.assign(f, 0.0);
    out.scaling.scale.assign(f, 1.0);
    for (std::size_t j = 0; j < f; ++j) {
      double mean = 0.0;
      for (const auto& r : rows) mean += r[j];
      mean /= static_cast<double>(rows.size());
      double var = 0.0;
      for (const auto& r : rows) var += (r[j] - mean) * (r[j] - mean);
      var /= static_cast<double>(rows.size());
      out.scaling.mean[j] = mean;
      out.scaling.scale[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
    }
  }

  for (const auto& r : rows) {
    Sample s;
    s.features.resize(f);
    for (std::size_t j = 0; j < f; ++j)
      s.features[j] = (r[j] - out.scaling.mean[j]) * out.scaling.scale[j];
    if (labeled) {
      s.label = static_cast<int>(r.back());
    } else {
      s.target = {r.back()};
    }
    out.data.examples.push_back(std::move(s));
  }
  if (labeled) {
    out.classes = static_cast<std::size_t>(max_label + 1);
    AttachOneHotTargets(out.data, out.classes);
  }
  return out;
}

LoadedDataset ReadIdx(const std::string& images, const std::string& labels, std::size_t limit) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw IoError("cannot read '" + images + "'");
  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw IoError("cannot read '" + labels + "'");

  if (ReadBe32(img, images) != 0x00000803)
    throw IoError(images + ": not an IDX ubyte image file");
  const std::uint32_t count = ReadBe32(img, images);
  const std::uint32_t rows = ReadBe32(img, images);
  const std::uint32_t cols = ReadBe32(img, images);
  if (ReadBe32(lab, labels) != 0x00000801)
    throw IoError(labels + ": not an IDX ubyte label file");
  const std::uint32_t label_count = ReadBe32(lab, labels);
  if (label_count != count)
    throw IoError(images + ": " + std::to_string(count) + " images but " +
                  std::to_string(label_count) + " labels");

  const std::size_t n = limit == 0 ? count : std::min<std::size_t>(limit, count);
  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  LoadedDataset out;
  out.features = pixels;
  out.data.tag = "idx:" + images;
  std::vector<unsigned char> buf(pixels);
  int max_label = -1;
  for (std::size_t i = 0; i < n; ++i) {
    if (!img.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(pixels)))
      throw IoError(images + ": truncated at image " + std::to_string(i));
    char l = 0;
    if (!lab.read(&l, 1)) throw IoError(labels + ": truncated at label " + std::to_string(i));
    Sample s;
    s.features.resize(pixels);
    for (std::size_t p = 0; p < pixels; ++p) s.features[p] = buf[p] / 255.0;
    s.label = static_cast<unsigned char>(l);
    max_label = std::max(max_label, s.label);
    out.data.examples.push_back(std::move(s));
  }
  if (out.data.empty()) throw IoError(images + ": no images");
  out.classes = static_cast<std::size_t>(max_label + 1);
  AttachOneHotTargets(out.data, out.classes);
  return out;
}

void WriteIdx(const std::string& images, const std::string& labels,
              const std::vector<std::vector<std::uint8_t>>& pixels,
              const std::vector<std::uint8_t>& label_values, std::size_t rows, std::size_t cols) {
  COMFETCH_REQUIRE(pixels.size() == label_values.size(), "image / label count mismatch");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw IoError("cannot write IDX files");
  WriteBe32(img, 0x00000803);
  WriteBe32(img, static_cast<std::uint32_t>(pixels.size()));
  WriteBe32(img, static_cast<std::uint32_t>(rows));
  WriteBe32(img, static_cast<std::uint32_t>(cols));
  for (const auto& p : pixels) {
    COMFETCH_REQUIRE(p.size() == rows * cols, "image has the wrong pixel count");
    img.write(reinterpret_cast<const char*>(p.data()), static_cast<std::streamsize>(p.size()));
  }
  WriteBe32(lab, 0x00000801);
  WriteBe32(lab, static_cast<std::uint32_t>(label_values.size()));
  lab.write(reinterpret_cast<const char*>(label_values.data()),
            static_cast<std::streamsize>(label_values.size()));
  if (!img || !lab) throw IoError("failed writing IDX files");
}

LoadedDataset LoadDataset(const std::string& source, const FeatureScaling* reuse) {
  const auto colon = source.find(':');
  if (colon == std::string::npos)
    throw ConfigError("dataset", "expected 'synthetic:', 'csv:' or 'idx:' source, got '" +
                                     source + "'");
  const std::string kind = source.substr(0, colon);
  const std::string body = source.substr(colon + 1);
  if (kind == "csv") return ReadCsv(body, reuse);
  if (kind == "idx") {
    std::vector<std::string> parts;
    std::stringstream ss(body);
    std::string p;
    while (std::getline(ss, p, ',')) parts.push_back(p);
    if (parts.size() < 2) throw ConfigError("dataset", "idx needs 'images,labels'");
    std::size_t limit = 0;
    for (std::size_t i = 2; i < parts.size(); ++i) {
      const auto kv = ParseKeyList(parts[i]);
      limit = CountParam(kv, "limit", std::nullopt, source);
    }
    return ReadIdx(parts[0], parts[1], limit);
  }
  if (kind == "synthetic") {
    auto kv = ParseKeyList(body);
    if (kv.count("teacher-fc")) {
      const std::size_t d = CountParam(kv, "d", std::nullopt, source);
      return TeacherFcDataset(d, CountParam(kv, "n", std::nullopt, source),
                              CountParam(kv, "seed", 0, source),
                              CountParam(kv, "classes", 10, source),
                              CountParam(kv, "hidden", d, source),
                              CountParam(kv, "draw", 0, source));
    }
    if (kv.count("teacher-linear")) {
      return TeacherLinearDataset(CountParam(kv, "d", std::nullopt, source),
                                  CountParam(kv, "n", std::nullopt, source),
                                  CountParam(kv, "seed", 0, source),
                                  CountParam(kv, "outputs", 1, source),
                                  CountParam(kv, "draw", 0, source));
    }
    throw ConfigError("dataset", "unknown synthetic generator in '" + source + "'");
  }
  throw ConfigError("dataset", "unknown source kind '" + kind + "'");
}

}  // namespace comfetch
