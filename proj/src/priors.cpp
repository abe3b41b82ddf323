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

#include "pumetric/priors.hpp"

#include <cmath>
#include <string>

#include "pumetric/error.hpp"

namespace pumetric {

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kPm: return "pm";
    case Variant::kP2mAll: return "p2m-all";
    case Variant::kP2m: return "p2m";
    case Variant::kP3mOri: return "p3m-ori";
    case Variant::kP3m: return "p3m";
    case Variant::kNaivePn: return "pn";
  }
  return "unknown";
}

Variant parse_variant(std::string_view text) {
  for (Variant v : {Variant::kPm, Variant::kP2mAll, Variant::kP2m, Variant::kP3mOri, Variant::kP3m, Variant::kNaivePn}) {
    if (to_string(v) == text) return v;
  }
  throw UsageError("unknown variant '" + std::string(text) + "' (expected pm, p2m-all, p2m, p3m-ori, p3m or pn)");
}

bool augments_positives(Variant variant) {
  return variant == Variant::kP2m || variant == Variant::kP2mAll || variant == Variant::kP3mOri ||
         variant == Variant::kP3m;
}

bool uses_mixup(Variant variant) { return variant == Variant::kP3mOri || variant == Variant::kP3m; }

ClassPrior ClassPrior::make(double pi, double pi_labeled) {
  ClassPrior c;
  c.pi = pi;
  c.pi_labeled = pi_labeled;
  c.pi_u = shift_prior(pi, pi_labeled);
  c.gamma = pi > 0.0 ? class_weight(pi) : 0.0;
  c.active = true;
  return c;
}

double ClassPrior::unlabeled_coefficient() const { return (1.0 - pi) / (1.0 - pi_u); }

double ClassPrior::correction_coefficient() const { return (pi_u - pi_u * pi) / (1.0 - pi_u); }

double estimate_labeled_prior(const PuDataset& dataset, std::size_t cls) {
  if (dataset.size() == 0) throw UsageError("estimate_labeled_prior: empty dataset");
  if (cls >= dataset.num_classes()) throw UsageError("estimate_labeled_prior: class out of range");
  std::size_t positives = 0;
  for (std::size_t j = 0; j < dataset.size(); ++j) positives += dataset.observed(j, cls) == 1;
  return static_cast<double>(positives) / static_cast<double>(dataset.size());
}

double shift_prior(double pi, double pi_labeled) {
  if (!(pi_labeled >= 0.0)) throw DomainError("labeled prior must be >= 0");
  if (pi_labeled >= 1.0) throw DomainError("labeled prior of 1 leaves no unlabeled data");
  if (pi_labeled > pi) {
    throw DomainError("labeled prior " + std::to_string(pi_labeled) + " exceeds class prior " + std::to_string(pi));
  }
  if (!(pi < 1.0)) throw DomainError("class prior must be < 1");
  return (pi - pi_labeled) / (1.0 - pi_labeled);
}

double class_weight(double pi) {
  if (!(pi > 0.0 && pi < 1.0)) throw DomainError("class weight needs a prior in (0, 1)");
  return std::sqrt((1.0 - pi) / pi);
}

PriorConfig build_prior_config(const PuDataset& dataset, const PriorGlobals& globals) {
  if (!(globals.prior_multiplier >= 1.0)) throw ConfigError("prior multiplier must be >= 1");
  PriorConfig config;
  config.globals = globals;
  for (std::size_t k = 0; k < dataset.num_classes(); ++k) {
    const double labeled = estimate_labeled_prior(dataset, k);
    if (labeled == 0.0) {
      ClassPrior inactive;
      inactive.active = false;
      config.classes.push_back(inactive);
      continue;
    }
    // The naive baseline takes observed labels at face value, so pi = pi_labeled.
    const double multiplier = globals.variant == Variant::kNaivePn ? 1.0 : globals.prior_multiplier;
    const double pi = multiplier * labeled;
    if (pi >= 1.0) {
      throw ConfigError("class " + std::to_string(k + 1) + ": multiplier " + std::to_string(globals.prior_multiplier) +
                        " x labeled prior " + std::to_string(labeled) + " is not below 1");
    }
    config.classes.push_back(ClassPrior::make(pi, labeled));
  }
  return config;
}

}  // namespace pumetric
