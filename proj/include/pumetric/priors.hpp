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
#include <string_view>
#include <vector>

#include "pumetric/datagen.hpp"

namespace pumetric {

/// Loss variants. kNaivePn is the supervised baseline that treats observed
/// labels as ground truth.
enum class Variant { kPm, kP2mAll, kP2m, kP3mOri, kP3m, kNaivePn };

std::string_view to_string(Variant variant);
/// Accepts the CLI spellings: pm, p2m-all, p2m, p3m-ori, p3m, pn.
Variant parse_variant(std::string_view text);

/// True for variants that encode positives twice (dropout augmentation).
bool augments_positives(Variant variant);
bool uses_mixup(Variant variant);

struct PriorGlobals {
  double lambda = 10.0;
  double alpha = 1.0;
  double nu = 0.05;
  double dropout_rate = 0.2;
  double prior_multiplier = 3.0;
  Variant variant = Variant::kP3m;

  friend bool operator==(const PriorGlobals&, const PriorGlobals&) = default;
};

struct ClassPrior {
  double pi = 0.0;          // class prior
  double pi_labeled = 0.0;  // fraction observed positive
  double pi_u = 0.0;        // positive prior inside the unlabeled part
  double gamma = 0.0;       // class weight on the positive term
  bool active = true;       // false when the class has no observed positives

  /// Derives pi_u and gamma; throws DomainError outside 0 <= pi_labeled <= pi < 1.
  static ClassPrior make(double pi, double pi_labeled);

  /// (1 - pi) / (1 - pi_u)
  double unlabeled_coefficient() const;
  /// (pi_u - pi_u * pi) / (1 - pi_u)
  double correction_coefficient() const;

  friend bool operator==(const ClassPrior&, const ClassPrior&) = default;
};

/// Per-class priors plus the loss hyperparameters. Index k is relation class k+1.
struct PriorConfig {
  std::vector<ClassPrior> classes;
  PriorGlobals globals;

  std::size_t num_classes() const noexcept { return classes.size(); }
  friend bool operator==(const PriorConfig&, const PriorConfig&) = default;
};

/// Fraction of samples observed positive for class column `cls`.
double estimate_labeled_prior(const PuDataset& dataset, std::size_t cls);

/// (pi - pi_labeled) / (1 - pi_labeled)
double shift_prior(double pi, double pi_labeled);

/// sqrt((1 - pi) / pi)
double class_weight(double pi);

/// pi = multiplier * pi_labeled per class. Classes without observed positives
/// are marked inactive. Throws ConfigError naming the class when pi >= 1.
PriorConfig build_prior_config(const PuDataset& dataset, const PriorGlobals& globals);

}  // namespace pumetric
