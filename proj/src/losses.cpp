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

#include "pumetric/losses.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>

#include "pumetric/error.hpp"

namespace pumetric {
namespace {

using autodiff::Tape;
using autodiff::Var;

void require_unit(const Tape& tape, Var v, const char* what) {
  double sq = 0.0;
  for (double x : tape.value(v)) sq += x * x;
  if (std::abs(std::sqrt(sq) - 1.0) > EmbeddingVector::kNormTolerance) {
    throw UsageError(std::string(what) + " is not unit-norm");
  }
}

// Dot products against every proxy, computed once per embedding node.
class Scores {
 public:
  Scores(Tape& tape, const Batch& batch, double lambda) : tape_(tape), batch_(batch), lambda_(lambda) {}

  // l(f, c_i, c_0)
  Var toward_class(Var f, std::size_t i) { return softplus_margin(dot(f, 0), dot(f, i)); }
  // l(f, c_0, c_i)
  Var toward_none(Var f, std::size_t i) { return softplus_margin(dot(f, i), dot(f, 0)); }

 private:
  // softplus(lambda * (neg - pos)), same op order as softmax_norm_loss
  Var softplus_margin(Var neg, Var pos) { return tape_.softplus(tape_.scale(tape_.sub(neg, pos), lambda_)); }

  Var dot(Var f, std::size_t proxy) {
    auto it = cache_.find(f.id);
    if (it == cache_.end()) {
      require_unit(tape_, f, "embedding");
      it = cache_.emplace(f.id, std::vector<std::optional<Var>>(batch_.proxies.size())).first;
    }
    auto& slot = it->second[proxy];
    if (!slot) slot = tape_.dot(batch_.proxies[proxy], f);
    return *slot;
  }

  Tape& tape_;
  const Batch& batch_;
  double lambda_;
  std::unordered_map<std::uint32_t, std::vector<std::optional<Var>>> cache_;
};

void validate_batch(const Tape& tape, const Batch& batch, const PriorConfig& priors) {
  const std::size_t K = batch.num_classes();
  if (K == 0) throw UsageError("batch has no proxies");
  if (priors.num_classes() != K) {
    throw UsageError("prior config has " + std::to_string(priors.num_classes()) + " classes, batch has " +
                     std::to_string(K));
  }
  if (!(priors.globals.lambda > 0.0)) throw UsageError("lambda must be positive");
  for (Var c : batch.proxies) require_unit(tape, c, "proxy");
  for (const BatchSample& s : batch.samples) {
    if (s.observed.size() != K) throw UsageError("sample label count does not match K");
    if (!s.truth.empty() && s.truth.size() != K) throw UsageError("sample truth count does not match K");
  }
}

Var scaled_mean(Tape& tape, std::vector<Var>& first, std::vector<Var>& second, std::size_t count) {
  Var total = tape.sum(first);
  if (!second.empty()) total = tape.add(total, tape.sum(second));
  return tape.scale(total, 1.0 / static_cast<double>(count));
}

LossBreakdown nonnegative_risk(Tape& tape, const Batch& batch, const PriorConfig& priors, const RiskOptions& options,
                               bool augment_positive, bool augment_unlabeled) {
  validate_batch(tape, batch, priors);
  const std::size_t K = batch.num_classes();
  Scores scores(tape, batch, priors.globals.lambda);
  LossBreakdown out;
  out.classes.resize(K);
  std::vector<Var> contributions;
  bool any_unlabeled = false;
  bool any_active = false;

  for (std::size_t k = 0; k < K; ++k) {
    const ClassPrior& cp = priors.classes[k];
    ClassTerms& terms = out.classes[k];
    if (!cp.active) continue;
    any_active = true;
    terms.active = true;
    const std::size_t cls = k + 1;

    std::vector<Var> pos, pos_aug, corr, corr_aug, unl, unl_aug;
    for (const BatchSample& s : batch.samples) {
      if (s.observed[k] == 1) {
        ++terms.n_positive;
        pos.push_back(scores.toward_class(s.embedding, cls));
        corr.push_back(scores.toward_none(s.embedding, cls));
        if (augment_positive) {
          if (!s.augmented) throw UsageError("positive sample lacks its augmented embedding");
          pos_aug.push_back(scores.toward_class(*s.augmented, cls));
          corr_aug.push_back(scores.toward_none(*s.augmented, cls));
        }
      } else {
        ++terms.n_unlabeled;
        unl.push_back(scores.toward_none(s.embedding, cls));
        if (augment_unlabeled) {
          if (!s.augmented) throw UsageError("unlabeled sample lacks its augmented embedding");
          unl_aug.push_back(scores.toward_none(*s.augmented, cls));
        }
      }
    }
    if (terms.n_unlabeled > 0) any_unlabeled = true;

    std::optional<Var> unlabeled_term;
    if (terms.n_unlabeled > 0) {
      const std::size_t count = terms.n_unlabeled * (augment_unlabeled ? 2 : 1);
      unlabeled_term = tape.scale(scaled_mean(tape, unl, unl_aug, count), cp.unlabeled_coefficient());
      terms.unlabeled_term = tape.scalar(*unlabeled_term);
    }
    if (terms.n_positive == 0) {
      // No positives in this batch: only the unlabeled side is estimable.
      if (unlabeled_term) contributions.push_back(*unlabeled_term);
      continue;
    }

    const std::size_t count = terms.n_positive * (augment_positive ? 2 : 1);
    const double weight = (options.class_weight ? cp.gamma : 1.0) * cp.pi;
    Var positive_term = tape.scale(scaled_mean(tape, pos, pos_aug, count), weight);
    Var correction_term = tape.scale(scaled_mean(tape, corr, corr_aug, count), cp.correction_coefficient());
    terms.positive_term = tape.scalar(positive_term);
    terms.correction_term = tape.scalar(correction_term);

    Var bracket = unlabeled_term ? tape.sub(*unlabeled_term, correction_term) : tape.scale(correction_term, -1.0);
    terms.clamped = tape.scalar(bracket) < 0.0;
    if (options.clamp && terms.clamped) {
      contributions.push_back(positive_term);
    } else {
      contributions.push_back(tape.add(positive_term, bracket));
    }
  }
  if (any_active && !any_unlabeled) throw UsageError("degenerate batch: no unlabeled samples for any class");

  out.total = tape.sum(contributions);
  out.l_pm_or_p2m = tape.scalar(out.total);
  out.l_total = out.l_pm_or_p2m;
  return out;
}

}  // namespace

std::size_t LossBreakdown::clamped_count() const {
  return static_cast<std::size_t>(
      std::count_if(classes.begin(), classes.end(), [](const ClassTerms& c) { return c.active && c.clamped; }));
}

Batch make_constant_batch(Tape& tape, std::span<const EmbeddingVector> proxies,
                          std::span<const SampleEmbeddings> samples) {
  Batch batch;
  for (const EmbeddingVector& c : proxies) batch.proxies.push_back(tape.input(c.values()));
  for (const SampleEmbeddings& s : samples) {
    BatchSample bs;
    bs.embedding = tape.input(s.embedding.values());
    if (s.augmented) bs.augmented = tape.input(s.augmented->values());
    bs.observed = s.observed;
    bs.truth = s.truth;
    batch.samples.push_back(std::move(bs));
  }
  return batch;
}

Var softmax_norm_loss(Tape& tape, Var f, Var c_pos, Var c_neg, double lambda) {
  if (!(lambda > 0.0)) throw UsageError("lambda must be positive");
  require_unit(tape, f, "embedding");
  require_unit(tape, c_pos, "positive proxy");
  require_unit(tape, c_neg, "negative proxy");
  return tape.softplus(tape.scale(tape.sub(tape.dot(c_neg, f), tape.dot(c_pos, f)), lambda));
}

double softmax_norm_loss(const EmbeddingVector& f, const EmbeddingVector& c_pos, const EmbeddingVector& c_neg,
                         double lambda) {
  Tape tape;
  return tape.scalar(softmax_norm_loss(tape, tape.input(f.values()), tape.input(c_pos.values()),
                                       tape.input(c_neg.values()), lambda));
}

LossBreakdown pnm_risk(Tape& tape, const Batch& batch, const PriorConfig& priors, LabelSource labels) {
  validate_batch(tape, batch, priors);
  const std::size_t K = batch.num_classes();
  Scores scores(tape, batch, priors.globals.lambda);
  LossBreakdown out;
  out.classes.resize(K);
  std::vector<Var> contributions;
  for (std::size_t k = 0; k < K; ++k) {
    ClassTerms& terms = out.classes[k];
    const double pi = priors.classes[k].pi;
    std::vector<Var> pos, neg, none;
    for (const BatchSample& s : batch.samples) {
      std::int8_t label = 0;
      if (labels == LabelSource::kTruth) {
        if (s.truth.empty()) throw UsageError("pnm_risk needs true labels");
        label = s.truth[k];
      } else {
        label = s.observed[k];
      }
      if (label == 1) {
        pos.push_back(scores.toward_class(s.embedding, k + 1));
      } else {
        neg.push_back(scores.toward_none(s.embedding, k + 1));
      }
    }
    terms.n_positive = pos.size();
    terms.n_unlabeled = neg.size();
    if (pos.empty() && neg.empty()) continue;
    terms.active = true;
    std::vector<Var> parts;
    if (!pos.empty()) {
      Var p = tape.scale(scaled_mean(tape, pos, none, pos.size()), pi);
      terms.positive_term = tape.scalar(p);
      parts.push_back(p);
    }
    if (!neg.empty()) {
      Var n = tape.scale(scaled_mean(tape, neg, none, neg.size()), 1.0 - pi);
      terms.unlabeled_term = tape.scalar(n);
      parts.push_back(n);
    }
    contributions.push_back(tape.sum(parts));
  }
  out.total = tape.sum(contributions);
  out.l_pm_or_p2m = tape.scalar(out.total);
  out.l_total = out.l_pm_or_p2m;
  return out;
}

LossBreakdown pm_risk_empirical(Tape& tape, const Batch& batch, const PriorConfig& priors,
                                const RiskOptions& options) {
  return nonnegative_risk(tape, batch, priors, options, false, false);
}

LossBreakdown p2m_risk_empirical(Tape& tape, const Batch& batch, const PriorConfig& priors, bool augment_unlabeled,
                                 const RiskOptions& options) {
  return nonnegative_risk(tape, batch, priors, options, true, augment_unlabeled);
}

Var mixup_embedding(Tape& tape, Var f, Var anchor, double mu) {
  if (!(mu >= 0.0 && mu <= 1.0)) throw UsageError("mixup coefficient must lie in [0, 1]");
  require_unit(tape, f, "embedding");
  require_unit(tape, anchor, "mixup anchor");
  Var mixed = tape.add(tape.scale(f, mu), tape.scale(anchor, 1.0 - mu));
  double sq = 0.0;
  for (double x : tape.value(mixed)) sq += x * x;
  if (std::sqrt(sq) < 1e-9) throw DomainError("degenerate mix: interpolated embedding has zero length");
  return tape.l2norm(mixed);
}

EmbeddingVector mixup_embedding(const EmbeddingVector& f, const EmbeddingVector& anchor, double mu) {
  Tape tape;
  Var out = mixup_embedding(tape, tape.input(f.values()), tape.input(anchor.values()), mu);
  const auto v = tape.value(out);
  return EmbeddingVector::from_unit({v.begin(), v.end()});
}

double sample_mu(std::mt19937_64& rng, double alpha) {
  if (!(alpha > 0.0)) throw UsageError("Beta parameter alpha must be positive");
  // X/(X+Y) with X, Y ~ Gamma(alpha, 1) is Beta(alpha, alpha).
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (;;) {
    const double x = gamma(rng);
    const double y = gamma(rng);
    if (x + y > 0.0) return x / (x + y);
  }
}

MixupAnchors sample_unlabeled_anchors(const Batch& batch, std::mt19937_64& rng) {
  MixupAnchors anchors;
  anchors.none_class = false;
  const std::size_t K = batch.num_classes();
  anchors.per_class.resize(K);
  for (std::size_t k = 0; k < K; ++k) {
    std::vector<std::size_t> unlabeled;
    std::size_t positives = 0;
    for (std::size_t j = 0; j < batch.samples.size(); ++j) {
      if (batch.samples[j].observed.at(k) == 1) {
        ++positives;
      } else {
        unlabeled.push_back(j);
      }
    }
    auto& out = anchors.per_class[k];
    if (unlabeled.empty()) {
      out.assign(positives, MixupAnchors::kNoneClass);
    } else if (unlabeled.size() >= positives) {
      std::shuffle(unlabeled.begin(), unlabeled.end(), rng);
      out.assign(unlabeled.begin(), unlabeled.begin() + static_cast<std::ptrdiff_t>(positives));
    } else {
      std::uniform_int_distribution<std::size_t> pick(0, unlabeled.size() - 1);
      for (std::size_t p = 0; p < positives; ++p) out.push_back(unlabeled[pick(rng)]);
    }
  }
  return anchors;
}

LossBreakdown pmix_loss(Tape& tape, const Batch& batch, double mu, const PriorConfig& priors,
                        const MixupAnchors& anchors) {
  validate_batch(tape, batch, priors);
  if (!(mu >= 0.0 && mu <= 1.0)) throw UsageError("mixup coefficient must lie in [0, 1]");
  const std::size_t K = batch.num_classes();
  if (!anchors.none_class && anchors.per_class.size() != K) throw UsageError("mixup anchors need one list per class");
  Scores scores(tape, batch, priors.globals.lambda);
  std::map<std::pair<std::uint32_t, std::uint32_t>, Var> mixed;
  auto mix = [&](Var f, Var anchor) {
    auto key = std::make_pair(f.id, anchor.id);
    auto it = mixed.find(key);
    if (it == mixed.end()) it = mixed.emplace(key, mixup_embedding(tape, f, anchor, mu)).first;
    return it->second;
  };

  LossBreakdown out;
  out.classes.resize(K);
  std::vector<Var> contributions;
  for (std::size_t k = 0; k < K; ++k) {
    ClassTerms& terms = out.classes[k];
    if (!priors.classes[k].active) continue;
    const std::size_t cls = k + 1;
    std::vector<Var> toward, toward_aug, away, away_aug;
    std::size_t p = 0;
    for (const BatchSample& s : batch.samples) {
      if (s.observed[k] != 1) {
        ++terms.n_unlabeled;
        continue;
      }
      if (!s.augmented) throw UsageError("positive-mixup needs the augmented embedding of every positive");
      Var anchor = batch.proxies[0];
      if (!anchors.none_class) {
        const auto& list = anchors.per_class[k];
        if (p >= list.size()) throw UsageError("mixup anchors do not cover every positive");
        const std::size_t idx = list[p];
        if (idx != MixupAnchors::kNoneClass) anchor = batch.samples.at(idx).embedding;
      }
      ++p;
      Var fm = mix(s.embedding, anchor);
      Var fm_aug = mix(*s.augmented, anchor);
      toward.push_back(scores.toward_class(fm, cls));
      toward_aug.push_back(scores.toward_class(fm_aug, cls));
      away.push_back(scores.toward_none(fm, cls));
      away_aug.push_back(scores.toward_none(fm_aug, cls));
    }
    terms.n_positive = p;
    if (p == 0) continue;
    terms.active = true;
    const double denom = 2.0 * static_cast<double>(p);
    Var toward_sum = tape.add(tape.sum(toward), tape.sum(toward_aug));
    Var away_sum = tape.add(tape.sum(away), tape.sum(away_aug));
    Var term = tape.add(tape.scale(toward_sum, mu / denom), tape.scale(away_sum, (1.0 - mu) / denom));
    terms.mixup_term = tape.scalar(term);
    contributions.push_back(term);
  }
  out.pmix_empty = contributions.empty();
  out.total = tape.sum(contributions);
  out.l_pmix = tape.scalar(out.total);
  out.l_total = out.l_pmix;
  return out;
}

LossBreakdown p3m_total(Tape& tape, const Batch& batch, const PriorConfig& priors, double mu,
                        const MixupAnchors& anchors) {
  const Variant variant = priors.globals.variant;
  switch (variant) {
    case Variant::kNaivePn:
      return pnm_risk(tape, batch, priors, LabelSource::kObserved);
    case Variant::kPm:
      return pm_risk_empirical(tape, batch, priors);
    case Variant::kP2m:
      return p2m_risk_empirical(tape, batch, priors, false);
    case Variant::kP2mAll:
      return p2m_risk_empirical(tape, batch, priors, true);
    case Variant::kP3mOri:
    case Variant::kP3m:
      break;
  }
  if (variant == Variant::kP3mOri && anchors.none_class) {
    throw UsageError("p3m-ori needs unlabeled mixup anchors");
  }
  LossBreakdown out = p2m_risk_empirical(tape, batch, priors, false);
  const LossBreakdown mix = pmix_loss(tape, batch, mu, priors, variant == Variant::kP3m ? MixupAnchors{} : anchors);
  for (std::size_t k = 0; k < out.classes.size(); ++k) out.classes[k].mixup_term = mix.classes[k].mixup_term;
  out.l_pmix = mix.l_pmix;
  out.pmix_empty = mix.pmix_empty;
  out.total = tape.add(out.total, tape.scale(mix.total, priors.globals.nu));
  out.l_total = tape.scalar(out.total);
  return out;
}

}  // namespace pumetric
