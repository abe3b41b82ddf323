/**
 * Copyright 2026 The pumetric Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pumetric/datagen.hpp"

#include <cmath>
#include <sstream>
#include <string>

#include "json.hpp"
#include "pumetric/error.hpp"
#include "pumetric/io.hpp"

namespace pumetric {
namespace {

using json = nlohmann::ordered_json;

// Independent engine per (seed, stream, index) so each sample's draws do not
// depend on how many draws any other sample made.
std::mt19937_64 stream_engine(std::uint64_t seed, std::uint32_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream,
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

constexpr std::uint32_t kPrototypeStream = 1;
constexpr std::uint32_t kSampleStream = 2;
constexpr std::uint32_t kErasureStream = 3;

std::vector<std::vector<double>> draw_prototypes(const GenSpec& spec) {
  auto rng = stream_engine(spec.task_seed, kPrototypeStream, 0);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::vector<double>> protos;
  while (protos.size() < spec.num_classes) {
    std::vector<double> v(spec.d_in);
    for (double& x : v) x = normal(rng);
    // Gram-Schmidt against the accepted prototypes.
    for (const auto& p : protos) {
      double proj = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) proj += v[k] * p[k];
      for (std::size_t k = 0; k < v.size(); ++k) v[k] -= proj * p[k];
    }
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq < 1e-12) continue;
    const double norm = std::sqrt(sq);
    for (double& x : v) x /= norm;
    protos.push_back(std::move(v));
  }
  return protos;
}

json meta_to_json(const GenSpec& spec) {
  return json{{"format_version", kDatasetFormatVersion},
              {"n", spec.n},
              {"d_in", spec.d_in},
              {"K", spec.num_classes},
              {"pi_true", spec.pi_true},
              {"erasure", spec.erasure},
              {"separation", spec.separation},
              {"noise", spec.noise},
              {"seed", spec.seed},
              {"task_seed", spec.task_seed}};
}

template <typename T>
T require_field(const json& obj, const char* key, std::size_t line) {
  if (!obj.contains(key)) throw SchemaError("line " + std::to_string(line) + ": missing field '" + key + "'");
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw SchemaError("line " + std::to_string(line) + ": field '" + key + "' has the wrong type");
  }
}

std::vector<std::int8_t> parse_labels(const json& rec, const char* key, std::size_t expected, std::size_t line) {
  const auto raw = require_field<std::vector<int>>(rec, key, line);
  if (raw.size() != expected) {
    throw SchemaError("line " + std::to_string(line) + ": '" + key + "' has " + std::to_string(raw.size()) +
                      " entries, metadata says K=" + std::to_string(expected));
  }
  std::vector<std::int8_t> out;
  out.reserve(raw.size());
  for (int v : raw) {
    if (v != 1 && v != -1) throw SchemaError("line " + std::to_string(line) + ": label values must be -1 or 1");
    out.push_back(static_cast<std::int8_t>(v));
  }
  return out;
}

}  // namespace

void GenSpec::validate() const {
  if (n == 0) throw UsageError("gen spec: n must be positive");
  if (num_classes == 0) throw UsageError("gen spec: K must be positive");
  if (d_in < num_classes) throw UsageError("gen spec: d_in must be >= K so class prototypes can be separated");
  if (pi_true.size() != num_classes) throw UsageError("gen spec: pi_true needs one entry per class");
  if (erasure.size() != num_classes) throw UsageError("gen spec: erasure needs one entry per class");
  for (double p : pi_true) {
    if (!(p > 0.0 && p < 1.0)) throw UsageError("gen spec: every pi_true must lie in (0, 1)");
  }
  for (double r : erasure) {
    if (!(r >= 0.0 && r <= 1.0)) throw UsageError("gen spec: every erasure rate must lie in [0, 1]");
  }
  if (!(noise >= 0.0) || !std::isfinite(separation)) throw UsageError("gen spec: invalid noise or separation");
}

PuDataset::PuDataset(GenSpec meta, std::vector<double> features, LabelMatrix observed,
                     std::optional<LabelMatrix> truth)
    : meta_(std::move(meta)), features_(std::move(features)), observed_(std::move(observed)), truth_(std::move(truth)) {
  const std::size_t cells = meta_.n * meta_.num_classes;
  if (features_.size() != meta_.n * meta_.d_in) throw SchemaError("dataset: feature matrix shape mismatch");
  if (observed_.size() != cells) throw SchemaError("dataset: observed label matrix shape mismatch");
  if (truth_ && truth_->size() != cells) throw SchemaError("dataset: true label matrix shape mismatch");
  for (std::size_t k = 0; k < cells; ++k) {
    if (observed_[k] != 1 && observed_[k] != -1) throw SchemaError("dataset: labels must be -1 or +1");
    if (truth_ && (*truth_)[k] != 1 && (*truth_)[k] != -1) throw SchemaError("dataset: labels must be -1 or +1");
    if (truth_ && observed_[k] == 1 && (*truth_)[k] != 1) {
      throw SchemaError("dataset: observed positive at sample " + std::to_string(k / meta_.num_classes) +
                        " is not a true positive");
    }
  }
}

std::span<const double> PuDataset::features(std::size_t sample) const {
  return std::span<const double>(features_).subspan(sample * input_dim(), input_dim());
}

std::int8_t PuDataset::truth(std::size_t sample, std::size_t cls) const {
  if (!truth_) throw UsageError("dataset carries no true labels");
  return (*truth_)[sample * num_classes() + cls];
}

PuDataset PuDataset::without_truth() const { return PuDataset(meta_, features_, observed_, std::nullopt); }

PuDataset PuDataset::subset(std::span<const std::size_t> rows) const {
  GenSpec meta = meta_;
  meta.n = rows.size();
  std::vector<double> features;
  LabelMatrix observed;
  std::optional<LabelMatrix> truth;
  if (truth_) truth.emplace();
  for (std::size_t r : rows) {
    if (r >= size()) throw UsageError("subset row out of range");
    auto x = this->features(r);
    features.insert(features.end(), x.begin(), x.end());
    for (std::size_t i = 0; i < num_classes(); ++i) {
      observed.push_back(observed_[r * num_classes() + i]);
      if (truth) truth->push_back((*truth_)[r * num_classes() + i]);
    }
  }
  return PuDataset(std::move(meta), std::move(features), std::move(observed), std::move(truth));
}

std::vector<std::int8_t> erase_labels(std::span<const std::int8_t> truth_column, double rate, std::mt19937_64& rng) {
  if (!(rate >= 0.0 && rate <= 1.0)) throw UsageError("erasure rate must lie in [0, 1]");
  std::bernoulli_distribution keep(1.0 - rate);
  std::vector<std::int8_t> observed(truth_column.size(), -1);
  for (std::size_t j = 0; j < truth_column.size(); ++j) {
    if (truth_column[j] == 1 && keep(rng)) observed[j] = 1;
  }
  return observed;
}

PuDataset generate(const GenSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n;
  const std::size_t K = spec.num_classes;
  const auto protos = draw_prototypes(spec);

  std::vector<double> features(n * spec.d_in, 0.0);
  LabelMatrix truth(n * K, -1);
  for (std::size_t j = 0; j < n; ++j) {
    auto rng = stream_engine(spec.seed, kSampleStream, j);
    double* x = features.data() + j * spec.d_in;
    for (std::size_t i = 0; i < K; ++i) {
      std::bernoulli_distribution positive(spec.pi_true[i]);
      if (!positive(rng)) continue;
      truth[j * K + i] = 1;
      for (std::size_t k = 0; k < spec.d_in; ++k) x[k] += spec.separation * protos[i][k];
    }
    if (spec.noise > 0.0) {
      std::normal_distribution<double> noise(0.0, spec.noise);
      for (std::size_t k = 0; k < spec.d_in; ++k) x[k] += noise(rng);
    }
  }

  LabelMatrix observed(n * K, -1);
  std::vector<std::int8_t> column(n);
  for (std::size_t i = 0; i < K; ++i) {
    for (std::size_t j = 0; j < n; ++j) column[j] = truth[j * K + i];
    auto rng = stream_engine(spec.seed, kErasureStream, i);
    const auto kept = erase_labels(column, spec.erasure[i], rng);
    for (std::size_t j = 0; j < n; ++j) observed[j * K + i] = kept[j];
  }
  return PuDataset(spec, std::move(features), std::move(observed), std::move(truth));
}

void write_dataset(const PuDataset& dataset, const std::filesystem::path& path, bool include_truth) {
  std::ostringstream out;
  out << meta_to_json(dataset.meta()).dump() << '\n';
  const std::size_t K = dataset.num_classes();
  for (std::size_t j = 0; j < dataset.size(); ++j) {
    json rec;
    rec["id"] = j;
    auto x = dataset.features(j);
    rec["x"] = std::vector<double>(x.begin(), x.end());
    std::vector<int> s(K);
    for (std::size_t i = 0; i < K; ++i) s[i] = dataset.observed(j, i);
    rec["s"] = s;
    if (include_truth && dataset.has_truth()) {
      std::vector<int> y(K);
      for (std::size_t i = 0; i < K; ++i) y[i] = dataset.truth(j, i);
      rec["y"] = y;
    }
    out << rec.dump() << '\n';
  }
  atomic_write(path, out.str());
}

PuDataset read_dataset(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;

  auto parse_line = [&](const std::string& text) {
    try {
      json value = json::parse(text);
      if (!value.is_object()) throw ParseError("expected a JSON object", line_no);
      return value;
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("malformed JSON: ") + e.what(), line_no);
    }
  };

  if (!std::getline(in, line)) throw ParseError("empty dataset file", 1);
  ++line_no;
  const json meta_json = parse_line(line);
  GenSpec meta;
  const int version = require_field<int>(meta_json, "format_version", line_no);
  if (version != kDatasetFormatVersion) throw SchemaError("unsupported dataset format_version " + std::to_string(version));
  meta.n = require_field<std::size_t>(meta_json, "n", line_no);
  meta.d_in = require_field<std::size_t>(meta_json, "d_in", line_no);
  meta.num_classes = require_field<std::size_t>(meta_json, "K", line_no);
  meta.pi_true = require_field<std::vector<double>>(meta_json, "pi_true", line_no);
  meta.erasure = require_field<std::vector<double>>(meta_json, "erasure", line_no);
  meta.seed = require_field<std::uint64_t>(meta_json, "seed", line_no);
  meta.task_seed = require_field<std::uint64_t>(meta_json, "task_seed", line_no);
  if (meta_json.contains("separation")) meta.separation = require_field<double>(meta_json, "separation", line_no);
  if (meta_json.contains("noise")) meta.noise = require_field<double>(meta_json, "noise", line_no);
  if (meta.pi_true.size() != meta.num_classes || meta.erasure.size() != meta.num_classes) {
    throw SchemaError("line 1: pi_true/erasure length does not match K");
  }

  std::vector<double> features;
  features.reserve(meta.n * meta.d_in);
  LabelMatrix observed;
  observed.reserve(meta.n * meta.num_classes);
  LabelMatrix truth;
  std::optional<bool> has_truth;
  std::size_t records = 0;

  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (records == meta.n) throw ParseError("more records than the declared n=" + std::to_string(meta.n), line_no);
    const json rec = parse_line(line);
    const auto id = require_field<std::size_t>(rec, "id", line_no);
    if (id != records) throw SchemaError("line " + std::to_string(line_no) + ": expected id " + std::to_string(records));
    const auto x = require_field<std::vector<double>>(rec, "x", line_no);
    if (x.size() != meta.d_in) {
      throw SchemaError("line " + std::to_string(line_no) + ": 'x' has " + std::to_string(x.size()) +
                        " entries, metadata says d_in=" + std::to_string(meta.d_in));
    }
    features.insert(features.end(), x.begin(), x.end());
    const auto s = parse_labels(rec, "s", meta.num_classes, line_no);
    observed.insert(observed.end(), s.begin(), s.end());
    const bool rec_truth = rec.contains("y");
    if (has_truth && *has_truth != rec_truth) {
      throw SchemaError("line " + std::to_string(line_no) + ": 'y' must be present on all records or none");
    }
    has_truth = rec_truth;
    if (rec_truth) {
      const auto y = parse_labels(rec, "y", meta.num_classes, line_no);
      truth.insert(truth.end(), y.begin(), y.end());
    }
    ++records;
  }
  if (records != meta.n) {
    throw ParseError("truncated dataset: declared n=" + std::to_string(meta.n) + ", found " + std::to_string(records) +
                         " records",
                     line_no + 1);
  }
  std::optional<LabelMatrix> truth_opt;
  if (has_truth.value_or(false)) truth_opt = std::move(truth);
  return PuDataset(std::move(meta), std::move(features), std::move(observed), std::move(truth_opt));
}

}  // namespace pumetric
