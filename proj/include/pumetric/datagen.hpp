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

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <vector>

namespace pumetric {

/// Parameters of a synthetic multi-label set with SCAR label erasure.
struct GenSpec {
  std::size_t n = 0;
  std::size_t d_in = 0;
  std::size_t num_classes = 0;
  std::vector<double> pi_true;  // per class, in (0, 1)
  std::vector<double> erasure;  // per class, in [0, 1]
  double separation = 1.0;      // length of each class prototype
  double noise = 0.5;           // per-coordinate std of the isotropic noise
  std::uint64_t seed = 0;       // samples and erasure
  std::uint64_t task_seed = 0;  // class prototypes; shared by a train/test pair

  /// Throws UsageError describing the first violated constraint.
  void validate() const;
  friend bool operator==(const GenSpec&, const GenSpec&) = default;
};

/// Labels are stored as +1 / -1, row-major n x K. Column i is relation class i+1.
using LabelMatrix = std::vector<std::int8_t>;

/**
 * Features plus observed labels s, and optionally the true labels y.
 *
 * Construction checks shapes and that every observed positive is also a true
 * positive.
 */
class PuDataset {
 public:
  PuDataset(GenSpec meta, std::vector<double> features, LabelMatrix observed, std::optional<LabelMatrix> truth);

  const GenSpec& meta() const noexcept { return meta_; }
  std::size_t size() const noexcept { return meta_.n; }
  std::size_t input_dim() const noexcept { return meta_.d_in; }
  std::size_t num_classes() const noexcept { return meta_.num_classes; }
  bool has_truth() const noexcept { return truth_.has_value(); }

  std::span<const double> features(std::size_t sample) const;
  std::int8_t observed(std::size_t sample, std::size_t cls) const { return observed_[sample * num_classes() + cls]; }
  /// Requires has_truth().
  std::int8_t truth(std::size_t sample, std::size_t cls) const;

  const std::vector<double>& feature_matrix() const noexcept { return features_; }
  const LabelMatrix& observed_matrix() const noexcept { return observed_; }
  const std::optional<LabelMatrix>& truth_matrix() const noexcept { return truth_; }

  /// Copy without the true labels, as a real PU training set would be.
  PuDataset without_truth() const;
  /// Copy restricted to the given rows (metadata n updated accordingly).
  PuDataset subset(std::span<const std::size_t> rows) const;

  friend bool operator==(const PuDataset&, const PuDataset&) = default;

 private:
  GenSpec meta_;
  std::vector<double> features_;
  LabelMatrix observed_;
  std::optional<LabelMatrix> truth_;
};

PuDataset generate(const GenSpec& spec);

/// Keeps each true positive with probability 1 - rate; everything else becomes -1.
std::vector<std::int8_t> erase_labels(std::span<const std::int8_t> truth_column, double rate, std::mt19937_64& rng);

inline constexpr int kDatasetFormatVersion = 1;

/// Line-delimited JSON: a metadata line, then one record per sample.
void write_dataset(const PuDataset& dataset, const std::filesystem::path& path, bool include_truth = true);
/// Throws ParseError (with line number) or SchemaError; never returns a partial dataset.
PuDataset read_dataset(const std::filesystem::path& path);

}  // namespace pumetric
