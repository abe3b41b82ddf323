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
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pumetric/autodiff.hpp"
#include "pumetric/datagen.hpp"
#include "pumetric/encoder.hpp"
#include "pumetric/losses.hpp"
#include "pumetric/priors.hpp"

namespace pumetric {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct TrainConfig {
  std::size_t epochs = 10;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.06;
  std::uint64_t seed = 62;
  AdamConfig adam;
  std::vector<std::size_t> hidden_dims{64, 64};
  std::size_t embedding_dim = 32;
  /// Caps the number of optimizer steps; unset runs every epoch.
  std::optional<std::size_t> max_steps;
  PriorConfig priors;

  Variant variant() const noexcept { return priors.globals.variant; }
  /// Throws UsageError on the first violated constraint.
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double mu = 0.0;
  double l_pm_or_p2m = 0.0;
  double l_pmix = 0.0;
  double l_total = 0.0;
  std::vector<bool> clamped;  // per class
  std::size_t active_classes = 0;
};

struct ClassCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
};

struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::vector<ClassCounts> per_class;
  std::vector<StepRecord> step_log;

  /// Fraction of steps on which each class's bracket was clamped.
  std::vector<double> clamp_frequency() const;
};

struct TrainResult {
  ModelParams params;
  MetricsReport report;
};

/// Everything random about one optimizer step, fixed up front so the loss is
/// a deterministic function of the parameters.
struct StepPlan {
  std::vector<std::size_t> rows;
  std::vector<DropoutMask> first_pass;
  std::vector<std::optional<DropoutMask>> second_pass;
  double mu = 1.0;
  std::uint64_t anchor_seed = 0;
};

/// Independent generators for each kind of draw made during training.
struct StepStreams {
  explicit StepStreams(std::uint64_t seed);
  std::mt19937_64 shuffle;
  std::mt19937_64 dropout;
  std::mt19937_64 mixup;
  std::mt19937_64 anchors;
};

StepPlan plan_step(const PuDataset& dataset, std::span<const std::size_t> rows, const PriorConfig& priors,
                   std::span<const std::size_t> hidden_dims, StepStreams& streams);

/// Encodes the planned rows on `tape` (built over params.values()) and returns the variant's loss.
LossBreakdown build_step_loss(autodiff::Tape& tape, const ModelParams& params, const PuDataset& dataset,
                              const StepPlan& plan, const PriorConfig& priors);

/// Linear warmup over the first warmup_steps, then linear decay towards 0.
double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps, std::size_t warmup_steps);

/// Mini-batch Adam on the configured variant. Deterministic given config.seed.
TrainResult train(const TrainConfig& config, const PuDataset& dataset);

/// Micro P/R/F1 of predict() against the true labels.
MetricsReport evaluate(const ModelParams& params, const PuDataset& dataset);

/// Micro metrics from pooled per-class counts (0 for undefined ratios).
MetricsReport micro_metrics(std::vector<ClassCounts> per_class);

struct SweepCell {
  double multiplier = 0.0;
  std::uint64_t seed = 0;
  MetricsReport metrics;
  PriorConfig priors;
};

struct SweepSummary {
  double multiplier = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct SweepTable {
  std::vector<SweepCell> cells;  // multiplier-major, then seed
  std::vector<SweepSummary> summary;
};

/// Trains one model per (multiplier, seed) on `train_set` and scores it on
/// `test_set`. Cells run on up to `threads` workers; results do not depend on it.
SweepTable sweep_prior_multiplier(const TrainConfig& base, std::span<const double> multipliers,
                                  std::span<const std::uint64_t> seeds, const PuDataset& train_set,
                                  const PuDataset& test_set, std::size_t threads = 1);

}  // namespace pumetric
