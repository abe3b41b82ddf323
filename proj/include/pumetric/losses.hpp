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
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "pumetric/autodiff.hpp"
#include "pumetric/encoder.hpp"
#include "pumetric/priors.hpp"

namespace pumetric {

struct BatchSample {
  autodiff::Var embedding;
  std::optional<autodiff::Var> augmented;  // second dropout pass
  std::vector<std::int8_t> observed;       // K labels, +1 / -1
  std::vector<std::int8_t> truth;          // empty when unknown
};

/// Embeddings of one mini-batch on a tape. For class i, P_i are the samples
/// observed positive and U_i all the others, so the two always partition the batch.
struct Batch {
  std::vector<autodiff::Var> proxies;  // K+1 unit-norm nodes, row 0 is the none class
  std::vector<BatchSample> samples;

  std::size_t num_classes() const noexcept { return proxies.empty() ? 0 : proxies.size() - 1; }
};

/// Fixed (non-trainable) sample description, for building a Batch from known vectors.
struct SampleEmbeddings {
  EmbeddingVector embedding;
  std::optional<EmbeddingVector> augmented;
  std::vector<std::int8_t> observed;
  std::vector<std::int8_t> truth;
};

/// Puts proxies and samples on `tape` as constant inputs.
Batch make_constant_batch(autodiff::Tape& tape, std::span<const EmbeddingVector> proxies,
                          std::span<const SampleEmbeddings> samples);

struct ClassTerms {
  double positive_term = 0.0;
  double unlabeled_term = 0.0;
  double correction_term = 0.0;
  double mixup_term = 0.0;
  bool clamped = false;  // unlabeled_term - correction_term < 0
  bool active = false;   // contributed to the total
  std::size_t n_positive = 0;
  std::size_t n_unlabeled = 0;
};

struct LossBreakdown {
  std::vector<ClassTerms> classes;
  double l_pm_or_p2m = 0.0;
  double l_pmix = 0.0;
  double l_total = 0.0;
  bool pmix_empty = false;  // mixup had no active class with positives
  autodiff::Var total;      // differentiable node holding l_total

  std::size_t clamped_count() const;
};

struct RiskOptions {
  bool clamp = true;         // max(0, .) around the per-class bracket
  bool class_weight = true;  // gamma_i on the positive term
};

/// -log(e^{l c_pos.f} / (e^{l c_pos.f} + e^{l c_neg.f})) = softplus(l (c_neg - c_pos).f)
autodiff::Var softmax_norm_loss(autodiff::Tape& tape, autodiff::Var f, autodiff::Var c_pos, autodiff::Var c_neg,
                                double lambda);
double softmax_norm_loss(const EmbeddingVector& f, const EmbeddingVector& c_pos, const EmbeddingVector& c_neg,
                         double lambda);

enum class LabelSource { kTruth, kObserved };

/// Supervised risk sum_i pi_i E_P[l(f,c_i,c_0)] + (1 - pi_i) E_N[l(f,c_0,c_i)].
/// kObserved gives the naive baseline that trusts the observed labels.
LossBreakdown pnm_risk(autodiff::Tape& tape, const Batch& batch, const PriorConfig& priors,
                       LabelSource labels = LabelSource::kTruth);

/// Non-negative PU risk with prior shift, one clamp per class.
LossBreakdown pm_risk_empirical(autodiff::Tape& tape, const Batch& batch, const PriorConfig& priors,
                                const RiskOptions& options = {});

/// As pm_risk_empirical, with positive and correction terms averaged over both
/// dropout passes of each positive. `augment_unlabeled` averages the unlabeled
/// term over both passes as well.
LossBreakdown p2m_risk_empirical(autodiff::Tape& tape, const Batch& batch, const PriorConfig& priors,
                                 bool augment_unlabeled = false, const RiskOptions& options = {});

/// normalize(mu f + (1 - mu) anchor); DomainError when the mix is (near) zero.
autodiff::Var mixup_embedding(autodiff::Tape& tape, autodiff::Var f, autodiff::Var anchor, double mu);
EmbeddingVector mixup_embedding(const EmbeddingVector& f, const EmbeddingVector& anchor, double mu);

/// One draw from Beta(alpha, alpha).
double sample_mu(std::mt19937_64& rng, double alpha);

/// Mixing partners for the positive-mixup loss. With `none_class` set every
/// positive mixes with c_0; otherwise per_class[i][k] is the batch index of the
/// unlabeled sample paired with the k-th positive of class i+1.
struct MixupAnchors {
  static constexpr std::size_t kNoneClass = std::numeric_limits<std::size_t>::max();

  bool none_class = true;
  std::vector<std::vector<std::size_t>> per_class;
};

/// Draws one unlabeled partner per positive, without replacement while the
/// class has enough unlabeled samples. Classes with no unlabeled sample fall
/// back to the none-class anchor.
MixupAnchors sample_unlabeled_anchors(const Batch& batch, std::mt19937_64& rng);

/// Positive-mixup loss; l_pmix and per-class mixup_term are filled in.
LossBreakdown pmix_loss(autodiff::Tape& tape, const Batch& batch, double mu, const PriorConfig& priors,
                        const MixupAnchors& anchors = {});

/// Loss selected by priors.globals.variant: l_total = l_pm_or_p2m + nu * l_pmix.
LossBreakdown p3m_total(autodiff::Tape& tape, const Batch& batch, const PriorConfig& priors, double mu,
                        const MixupAnchors& anchors = {});

}  // namespace pumetric
