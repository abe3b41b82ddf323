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
#include <string>
#include <vector>

#include "json.hpp"
#include "pumetric/datagen.hpp"
#include "pumetric/encoder.hpp"
#include "pumetric/grad_check.hpp"
#include "pumetric/priors.hpp"
#include "pumetric/train_eval.hpp"

namespace pumetric {

using ordered_json = nlohmann::ordered_json;

/// Everything needed to reproduce a run; every seed is explicit.
struct ExperimentConfig {
  GenSpec gen;  // gen.n is the training-set size
  std::size_t n_test = 5000;
  std::uint64_t test_seed = 2;
  TrainConfig train;      // train.priors.classes is filled from data at run time
  PriorGlobals priors;    // copied into train.priors.globals
  std::vector<double> sweep_multipliers{1.0, 2.0, 3.0, 4.0, 5.0};
  std::vector<std::uint64_t> sweep_seeds{62, 63, 64, 65, 66};
  GradCheckOptions grad_check;
  std::string output_dir = "out";

  GenSpec test_spec() const;
};

ExperimentConfig default_experiment_config();

ordered_json to_json(const ExperimentConfig& config);
/// Missing fields keep their defaults; unknown or mistyped fields throw
/// SchemaError naming the field.
ExperimentConfig experiment_config_from_json(const ordered_json& doc);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

inline constexpr int kParamsFormatVersion = 1;
inline constexpr int kMetricsFormatVersion = 1;

ordered_json params_to_json(const ModelParams& params);
ModelParams params_from_json(const ordered_json& doc);
void write_params(const ModelParams& params, const std::filesystem::path& path);
ModelParams read_params(const std::filesystem::path& path);

ordered_json prior_config_to_json(const PriorConfig& priors);

/// Machine record of a MetricsReport (step log excluded; see step_record_to_json).
ordered_json metrics_to_json(const MetricsReport& report, const std::string& reference);
/// Throws SchemaError unless `doc` follows the metrics schema.
void validate_metrics_json(const ordered_json& doc);
/// Aligned plain-text table of the same numbers.
std::string metrics_table(const MetricsReport& report);

ordered_json step_record_to_json(const StepRecord& record);

/// CSV: multiplier,seed,precision,recall,f1 with one "mean" row per multiplier.
std::string sweep_csv(const SweepTable& table);

}  // namespace pumetric
