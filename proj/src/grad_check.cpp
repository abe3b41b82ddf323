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

#include "pumetric/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pumetric/datagen.hpp"
#include "pumetric/encoder.hpp"
#include "pumetric/error.hpp"
#include "pumetric/train_eval.hpp"

namespace pumetric {
namespace {

// Finite differences are meaningless across the clamp's kink.
constexpr double kKinkMargin = 1e-4;

struct Instance {
  PuDataset data;
  ModelParams params;
  PriorConfig priors;
  std::vector<std::size_t> hidden;
  StepPlan plan;
};

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

// Needs some observed positive, and unlabeled samples in every class so pi_labeled < 1.
bool usable(const PuDataset& data) {
  bool positive = false;
  for (std::size_t k = 0; k < data.num_classes(); ++k) {
    bool unlabeled = false;
    for (std::size_t j = 0; j < data.size(); ++j) {
      positive |= data.observed(j, k) == 1;
      unlabeled |= data.observed(j, k) == -1;
    }
    if (!unlabeled) return false;
  }
  return positive;
}

Instance make_instance(std::mt19937_64& rng, const GradCheckOptions& options, Variant variant) {
  for (;;) {
    const std::size_t K = draw(rng, 1, options.max_classes);
    GenSpec spec;
    spec.n = draw(rng, 4, options.max_samples);
    spec.num_classes = K;
    spec.d_in = draw(rng, std::max<std::size_t>(K, 2), options.max_dim);
    spec.pi_true.assign(K, 0.5);
    spec.erasure.assign(K, 0.3);
    spec.noise = 0.5;
    spec.seed = rng();
    PuDataset data = generate(spec);
    if (!usable(data)) continue;

    std::vector<std::size_t> hidden{draw(rng, 2, options.max_dim), draw(rng, 2, options.max_dim)};
    std::vector<std::size_t> dims{spec.d_in};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(draw(rng, 2, options.max_dim));
    ModelParams params = init_params(rng(), dims, K);

    PriorConfig priors;
    priors.globals = options.globals;
    priors.globals.variant = variant;
    std::uniform_real_distribution<double> lift(0.1, 0.6);
    for (std::size_t k = 0; k < K; ++k) {
      const double labeled = estimate_labeled_prior(data, k);
      if (labeled == 0.0) {
        ClassPrior inactive;
        inactive.active = false;
        priors.classes.push_back(inactive);
      } else {
        priors.classes.push_back(ClassPrior::make(labeled + (1.0 - labeled) * lift(rng), labeled));
      }
    }

    StepStreams streams(rng());
    std::vector<std::size_t> rows(data.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    StepPlan plan = plan_step(data, rows, priors, hidden, streams);
    return {std::move(data), std::move(params), std::move(priors), std::move(hidden), std::move(plan)};
  }
}

bool near_kink(const LossBreakdown& loss) {
  for (const ClassTerms& c : loss.classes) {
    if (!c.active || c.n_positive == 0) continue;
    const double bracket = c.unlabeled_term - c.correction_term;
    const double scale = 1.0 + std::abs(c.unlabeled_term) + std::abs(c.correction_term);
    if (std::abs(bracket) < kKinkMargin * scale) return true;
  }
  return false;
}

}  // namespace

bool GradCheckReport::passed() const {
  return !variants.empty() && std::all_of(variants.begin(), variants.end(), [](const VariantCheck& v) { return v.passed; });
}

GradCheckReport run_grad_check(const GradCheckOptions& options) {
  if (options.instances == 0) throw UsageError("grad check needs at least one instance");
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  for (Variant variant : {Variant::kPm, Variant::kP2mAll, Variant::kP2m, Variant::kP3mOri, Variant::kP3m}) {
    VariantCheck check;
    check.variant = variant;
    try {
      while (check.instances < options.instances) {
        Instance inst = make_instance(rng, options, variant);
        auto loss_at = [&](std::span<const double> values) {
          ModelParams probe = inst.params;
          std::copy(values.begin(), values.end(), probe.values().begin());
          autodiff::Tape tape(probe.values());
          return build_step_loss(tape, probe, inst.data, inst.plan, inst.priors).l_total;
        };

        autodiff::Tape tape(inst.params.values());
        const LossBreakdown loss = build_step_loss(tape, inst.params, inst.data, inst.plan, inst.priors);
        if (near_kink(loss)) continue;
        autodiff::Gradient analytic = tape.backward(loss.total);
        if (options.corrupt) options.corrupt(analytic);
        const autodiff::Gradient numeric = autodiff::finite_difference(loss_at, inst.params.values(), options.epsilon);
        const double err = autodiff::max_relative_error(analytic, numeric);
        if (!std::isfinite(err)) throw NumericError("non-finite gradient", "gradient");
        check.max_relative_error = std::max(check.max_relative_error, err);
        check.clamped_brackets += loss.clamped_count();
        ++check.instances;
      }
      check.passed = check.max_relative_error < options.tolerance;
    } catch (const Error& e) {
      check.passed = false;
      check.failure = std::string(to_string(variant)) + ": " + e.what();
    }
    report.variants.push_back(std::move(check));
  }
  return report;
}

}  // namespace pumetric
