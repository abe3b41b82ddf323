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
#include <functional>
#include <string>
#include <vector>

#include "pumetric/autodiff.hpp"
#include "pumetric/priors.hpp"

namespace pumetric {

struct GradCheckOptions {
  std::size_t instances = 20;  // per variant
  std::size_t max_samples = 8;
  std::size_t max_dim = 16;
  std::size_t max_classes = 4;
  double epsilon = 1e-6;
  double tolerance = 1e-6;
  std::uint64_t seed = 7;
  PriorGlobals globals;
  /// Test hook applied to each analytic gradient before comparison.
  std::function<void(autodiff::Gradient&)> corrupt;
};

struct VariantCheck {
  Variant variant = Variant::kPm;
  std::size_t instances = 0;
  double max_relative_error = 0.0;
  std::size_t clamped_brackets = 0;  // clamped (class, instance) pairs seen
  bool passed = false;
  std::string failure;  // set when a NaN or exception occurred
};

struct GradCheckReport {
  std::vector<VariantCheck> variants;
  bool passed() const;
};

/// Backward vs central differences on random small (params, batch) instances
/// for pm, p2m-all, p2m, p3m-ori and p3m.
GradCheckReport run_grad_check(const GradCheckOptions& options);

}  // namespace pumetric
