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

#include <doctest.h>

#include <cmath>
#include <random>

#include "pumetric/error.hpp"
#include "pumetric/grad_check.hpp"
#include "pumetric/losses.hpp"
#include "test_util.hpp"

using namespace pumetric;
using autodiff::Tape;
using pumetric::testing::random_unit;
using pumetric::testing::unit;
using pumetric::testing::with_dots;

namespace {

constexpr std::size_t kD = 6;

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

PriorConfig single_class(double pi, double pi_labeled, double lambda) {
  PriorConfig config;
  config.classes.push_back(ClassPrior::make(pi, pi_labeled));
  config.globals.lambda = lambda;
  return config;
}

// c_0 on axis 1, c_i on axis 0 (orthogonal); with_dots(d, c_1.f, c_0.f).
std::vector<EmbeddingVector> orthogonal_proxies(std::size_t K) {
  std::vector<EmbeddingVector> proxies{unit(kD, 1), unit(kD, 0)};
  for (std::size_t k = 2; k <= K; ++k) proxies.push_back(unit(kD, k + 1));
  return proxies;
}

SampleEmbeddings sample(EmbeddingVector f, std::vector<std::int8_t> observed, std::vector<std::int8_t> truth = {}) {
  return {std::move(f), std::nullopt, std::move(observed), std::move(truth)};
}

// Random batch with K classes; every sample carries an augmented embedding.
struct RandomBatch {
  std::vector<EmbeddingVector> proxies;
  std::vector<SampleEmbeddings> samples;
  PriorConfig priors;
};

RandomBatch random_batch(std::mt19937_64& rng, std::size_t n, std::size_t K, bool distinct_augmented) {
  RandomBatch rb;
  for (std::size_t k = 0; k <= K; ++k) rb.proxies.push_back(random_unit(rng, kD));
  std::bernoulli_distribution coin(0.4);
  for (std::size_t j = 0; j < n; ++j) {
    SampleEmbeddings s{random_unit(rng, kD), std::nullopt, {}, {}};
    s.augmented = distinct_augmented ? random_unit(rng, kD) : s.embedding;
    for (std::size_t k = 0; k < K; ++k) {
      const bool pos = coin(rng);
      s.truth.push_back(pos ? 1 : -1);
      s.observed.push_back(pos && j % 2 == 0 ? 1 : -1);
    }
    rb.samples.push_back(std::move(s));
  }
  // Make sure every class has a positive and an unlabeled sample.
  for (std::size_t k = 0; k < K; ++k) {
    rb.samples[0].observed[k] = rb.samples[0].truth[k] = 1;
    rb.samples[1].observed[k] = -1;
  }
  std::uniform_real_distribution<double> u(0.1, 0.3);
  for (std::size_t k = 0; k < K; ++k) {
    const double labeled = u(rng);
    rb.priors.classes.push_back(ClassPrior::make(labeled * 2.0, labeled));
  }
  return rb;
}

}  // namespace

TEST_CASE("softmax_norm_loss examples") {
  const auto c_pos = unit(kD, 0);
  const auto c_neg = unit(kD, 1);
  const auto f_equal = with_dots(kD, 0.3, 0.3);
  CHECK(softmax_norm_loss(f_equal, c_pos, c_neg, 10.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(softmax_norm_loss(c_pos, c_pos, c_neg, 10.0) - 4.5399e-5) < 1e-9);
  CHECK(std::abs(softmax_norm_loss(c_neg, c_pos, c_neg, 10.0) - 10.0000454) < 1e-7);

  const auto not_unit = EmbeddingVector::normalize({1, 0, 0, 0, 0, 0});
  CHECK_NOTHROW(softmax_norm_loss(not_unit, c_pos, c_neg, 1.0));
  Tape tape;
  const auto raw = tape.input(std::vector<double>{2, 0, 0, 0, 0, 0});
  CHECK_THROWS_AS(softmax_norm_loss(tape, raw, tape.input(c_pos.values()), tape.input(c_neg.values()), 1.0), UsageError);
  CHECK_THROWS_AS(softmax_norm_loss(f_equal, c_pos, c_neg, 0.0), UsageError);
}

TEST_CASE("softmax_norm_loss properties") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto f = random_unit(rng, kD);
    const auto a = random_unit(rng, kD);
    const auto b = random_unit(rng, kD);
    const double both = softmax_norm_loss(f, a, b, 10.0) + softmax_norm_loss(f, b, a, 10.0);
    CHECK(both >= 2.0 * std::log(2.0) - 1e-15);
    CHECK(softmax_norm_loss(f, a, b, 10.0) > 0.0);

    const double margin = a.dot(f) - b.dot(f);
    if (std::abs(margin) > 1e-6) {
      const double lo = softmax_norm_loss(f, a, b, 5.0);
      const double hi = softmax_norm_loss(f, a, b, 6.0);
      if (margin > 0) CHECK(hi < lo);
      if (margin < 0) CHECK(hi > lo);
    }
  }
}

TEST_CASE("pnm_risk examples") {
  const auto proxies = orthogonal_proxies(1);
  const std::vector<SampleEmbeddings> samples{sample(unit(kD, 0), {1}, {1}), sample(unit(kD, 1), {-1}, {-1})};
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  const LossBreakdown out = pnm_risk(tape, batch, single_class(0.5, 0.0, 10.0));
  const double expected = 0.5 * std::log1p(std::exp(-10.0)) + 0.5 * std::log1p(std::exp(-10.0));
  CHECK(out.l_total == doctest::Approx(expected).epsilon(1e-12));
  CHECK(std::abs(out.l_total - 4.54e-5) < 1e-7);

  Tape tape0;
  const Batch batch0 = make_constant_batch(tape0, proxies, samples);
  PriorConfig zero = single_class(0.5, 0.0, 10.0);
  zero.classes[0].pi = 0.0;
  const LossBreakdown only_negative = pnm_risk(tape0, batch0, zero);
  CHECK(only_negative.l_total == doctest::Approx(std::log1p(std::exp(-10.0))).epsilon(1e-12));
  CHECK(only_negative.classes[0].positive_term == 0.0);

  // Missing truth is rejected.
  Tape tape1;
  const std::vector<SampleEmbeddings> no_truth{sample(unit(kD, 0), {1})};
  const Batch batch1 = make_constant_batch(tape1, proxies, no_truth);
  CHECK_THROWS_AS(pnm_risk(tape1, batch1, single_class(0.5, 0.0, 10.0)), UsageError);
}

TEST_CASE("non-negative PU risk worked example") {
  const auto proxies = orthogonal_proxies(1);
  const std::vector<SampleEmbeddings> samples{sample(with_dots(kD, 0.8, 0.2), {1}), sample(with_dots(kD, 0.1, 0.7), {-1})};
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  const LossBreakdown out = pm_risk_empirical(tape, batch, single_class(0.5, 0.0, 1.0));
  const ClassTerms& c = out.classes[0];
  CHECK(std::abs(c.positive_term - 0.218744) < 1e-6);
  CHECK(std::abs(c.unlabeled_term - 0.437488) < 1e-6);
  CHECK(std::abs(c.correction_term - 0.518744) < 1e-6);
  CHECK(c.clamped);
  CHECK(std::abs(out.l_total - 0.218744) < 1e-6);
  CHECK(out.clamped_count() == 1);

  // The clamped bracket contributes nothing to the gradient.
  CHECK(out.l_total == c.positive_term);
}

TEST_CASE("no labeled data reduces the coefficients to the plain PU form") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const double pi = std::uniform_real_distribution<double>(0.01, 0.9)(rng);
    const ClassPrior c = ClassPrior::make(pi, 0.0);
    CHECK(std::abs(c.unlabeled_coefficient() - 1.0) < 1e-12);
    CHECK(std::abs(c.correction_coefficient() - pi) < 1e-12);
  }
}

TEST_CASE("class without positives contributes its unlabeled term only") {
  const auto proxies = orthogonal_proxies(2);
  const std::vector<SampleEmbeddings> samples{sample(with_dots(kD, 0.8, 0.2), {1, -1}),
                                              sample(with_dots(kD, 0.1, 0.7), {-1, -1})};
  PriorConfig priors;
  priors.classes = {ClassPrior::make(0.5, 0.1), ClassPrior::make(0.3, 0.1)};
  priors.globals.lambda = 10.0;
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  const LossBreakdown out = pm_risk_empirical(tape, batch, priors);
  const ClassTerms& c = out.classes[1];
  CHECK(c.n_positive == 0);
  CHECK(c.positive_term == 0.0);
  CHECK(c.correction_term == 0.0);
  CHECK(c.unlabeled_term > 0.0);
  const ClassTerms& first = out.classes[0];
  const double first_total = first.positive_term + std::max(0.0, first.unlabeled_term - first.correction_term);
  CHECK(out.l_total == doctest::Approx(first_total + c.unlabeled_term).epsilon(1e-14));
}

TEST_CASE("a batch with no unlabeled samples is degenerate") {
  const auto proxies = orthogonal_proxies(1);
  const std::vector<SampleEmbeddings> samples{sample(with_dots(kD, 0.8, 0.2), {1}), sample(with_dots(kD, 0.6, 0.2), {1})};
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  CHECK_THROWS_AS(pm_risk_empirical(tape, batch, single_class(0.5, 0.1, 1.0)), UsageError);
}

TEST_CASE("class contribution is never below the positive term") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const RandomBatch rb = random_batch(rng, 8, 3, true);
    Tape tape;
    const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
    for (bool augment : {false, true}) {
      const LossBreakdown out = augment ? p2m_risk_empirical(tape, batch, rb.priors) : pm_risk_empirical(tape, batch, rb.priors);
      double total = 0.0;
      for (const ClassTerms& c : out.classes) {
        const double contribution = c.positive_term + std::max(0.0, c.unlabeled_term - c.correction_term);
        CHECK(contribution >= c.positive_term);
        CHECK(c.clamped == (c.unlabeled_term - c.correction_term < 0.0));
        total += contribution;
      }
      CHECK(out.l_total == doctest::Approx(total).epsilon(1e-13));
    }
  }
}

TEST_CASE("dropout-free augmentation reproduces the single-pass risk") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomBatch rb = random_batch(rng, 8, 3, false);
    Tape tape;
    const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
    const LossBreakdown pm = pm_risk_empirical(tape, batch, rb.priors);
    const LossBreakdown p2m = p2m_risk_empirical(tape, batch, rb.priors);
    CHECK(std::abs(pm.l_total - p2m.l_total) < 1e-12);
    for (std::size_t k = 0; k < pm.classes.size(); ++k) {
      CHECK(std::abs(pm.classes[k].positive_term - p2m.classes[k].positive_term) < 1e-12);
      CHECK(std::abs(pm.classes[k].correction_term - p2m.classes[k].correction_term) < 1e-12);
      CHECK(std::abs(pm.classes[k].unlabeled_term - p2m.classes[k].unlabeled_term) < 1e-12);
    }
  }
}

TEST_CASE("augmented positive term averages both passes") {
  const auto proxies = orthogonal_proxies(1);
  SampleEmbeddings pos = sample(with_dots(kD, 0.8, 0.2), {1});
  pos.augmented = with_dots(kD, 0.5, 0.4);
  const std::vector<SampleEmbeddings> samples{pos, sample(with_dots(kD, 0.1, 0.7), {-1})};
  const PriorConfig priors = single_class(0.2, 0.05, 10.0);
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  const LossBreakdown out = p2m_risk_empirical(tape, batch, priors);
  const double gamma = 2.0;
  const double expected = gamma * 0.2 * (softplus(10.0 * (0.2 - 0.8)) + softplus(10.0 * (0.4 - 0.5))) / 2.0;
  CHECK(out.classes[0].positive_term == doctest::Approx(expected).epsilon(1e-13));

  // Missing second pass for a positive is a usage error.
  Tape tape2;
  const std::vector<SampleEmbeddings> bare{sample(with_dots(kD, 0.8, 0.2), {1}), sample(with_dots(kD, 0.1, 0.7), {-1})};
  const Batch batch2 = make_constant_batch(tape2, proxies, bare);
  CHECK_THROWS_AS(p2m_risk_empirical(tape2, batch2, priors), UsageError);
}

TEST_CASE("augmenting all samples changes only the unlabeled term") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const RandomBatch rb = random_batch(rng, 8, 2, true);
    Tape tape;
    const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
    const LossBreakdown p2m = p2m_risk_empirical(tape, batch, rb.priors, false);
    const LossBreakdown all = p2m_risk_empirical(tape, batch, rb.priors, true);
    for (std::size_t k = 0; k < p2m.classes.size(); ++k) {
      CHECK(p2m.classes[k].positive_term == all.classes[k].positive_term);
      CHECK(p2m.classes[k].correction_term == all.classes[k].correction_term);
      CHECK(p2m.classes[k].unlabeled_term != all.classes[k].unlabeled_term);
    }
  }
}

TEST_CASE("mixup_embedding examples") {
  const auto f = unit(kD, 0);
  const auto anchor = unit(kD, 1);
  const auto one = mixup_embedding(f, anchor, 1.0);
  const auto zero = mixup_embedding(f, anchor, 0.0);
  const auto half = mixup_embedding(f, anchor, 0.5);
  for (std::size_t k = 0; k < kD; ++k) {
    CHECK(std::abs(one[k] - f[k]) < 1e-9);
    CHECK(std::abs(zero[k] - anchor[k]) < 1e-9);
  }
  CHECK(std::abs(half.dot(anchor) - 0.70711) < 1e-5);
  CHECK(std::abs(half.dot(anchor) - 0.5 / std::sqrt(0.5)) < 1e-9);
  CHECK(std::abs(half.norm() - 1.0) < 1e-12);

  std::vector<double> neg(f.values().begin(), f.values().end());
  for (double& x : neg) x = -x;
  CHECK_THROWS_AS(mixup_embedding(f, EmbeddingVector::from_unit(neg), 0.5), DomainError);
  CHECK_THROWS_AS(mixup_embedding(f, anchor, 1.5), UsageError);
}

TEST_CASE("sample_mu follows Beta(alpha, alpha)") {
  std::mt19937_64 rng(43);
  double sum = 0.0;
  for (int k = 0; k < 100000; ++k) {
    const double mu = sample_mu(rng, 1.0);
    CHECK_UNARY(mu >= 0.0 && mu <= 1.0);
    sum += mu;
  }
  CHECK(sum / 1e5 >= 0.497);
  CHECK(sum / 1e5 <= 0.503);

  const double alpha = 50.0;
  double s1 = 0.0, s2 = 0.0;
  const int n = 20000;
  for (int k = 0; k < n; ++k) {
    const double mu = sample_mu(rng, alpha);
    s1 += mu;
    s2 += mu * mu;
  }
  const double mean = s1 / n;
  const double var = s2 / n - mean * mean;
  CHECK(std::abs(mean - 0.5) < 0.005);
  CHECK(var == doctest::Approx(1.0 / (8.0 * alpha + 4.0)).epsilon(0.1));

  CHECK_THROWS_AS(sample_mu(rng, 0.0), UsageError);
  CHECK_THROWS_AS(sample_mu(rng, -1.0), UsageError);
}

TEST_CASE("pmix_loss examples") {
  const auto proxies = orthogonal_proxies(1);
  SampleEmbeddings pos = sample(unit(kD, 0), {1});
  pos.augmented = pos.embedding;
  const std::vector<SampleEmbeddings> samples{pos, sample(with_dots(kD, 0.1, 0.7), {-1})};
  const PriorConfig priors = single_class(0.3, 0.1, 10.0);

  SUBCASE("mu = 0 lands on the none-class proxy") {
    Tape tape;
    const Batch batch = make_constant_batch(tape, proxies, samples);
    const LossBreakdown out = pmix_loss(tape, batch, 0.0, priors);
    CHECK(std::abs(out.l_pmix - std::log1p(std::exp(-10.0))) < 1e-9);
    CHECK(std::abs(out.l_pmix - 4.54e-5) < 1e-7);
  }
  SUBCASE("mu = 0.5 gives ln 2") {
    Tape tape;
    const Batch batch = make_constant_batch(tape, proxies, samples);
    const LossBreakdown out = pmix_loss(tape, batch, 0.5, priors);
    CHECK(std::abs(out.l_pmix - std::log(2.0)) < 1e-9);
  }
  SUBCASE("mu = 1 is the mean positive loss") {
    std::mt19937_64 rng(47);
    const RandomBatch rb = random_batch(rng, 8, 3, true);
    Tape tape;
    const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
    const LossBreakdown out = pmix_loss(tape, batch, 1.0, rb.priors);
    double expected = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      double sum = 0.0;
      std::size_t n = 0;
      for (const SampleEmbeddings& s : rb.samples) {
        if (s.observed[k] != 1) continue;
        sum += softmax_norm_loss(s.embedding, rb.proxies[k + 1], rb.proxies[0], 10.0);
        sum += softmax_norm_loss(*s.augmented, rb.proxies[k + 1], rb.proxies[0], 10.0);
        n += 2;
      }
      expected += sum / static_cast<double>(n);
    }
    CHECK(std::abs(out.l_pmix - expected) < 1e-12);
  }
  SUBCASE("no positives anywhere gives an empty mixup loss") {
    Tape tape;
    const std::vector<SampleEmbeddings> none{sample(with_dots(kD, 0.1, 0.7), {-1}), sample(with_dots(kD, 0.3, 0.1), {-1})};
    const Batch batch = make_constant_batch(tape, proxies, none);
    const LossBreakdown out = pmix_loss(tape, batch, 0.3, priors);
    CHECK(out.l_pmix == 0.0);
    CHECK(out.pmix_empty);
  }
}

TEST_CASE("total loss composition") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 20; ++trial) {
    RandomBatch rb = random_batch(rng, 8, 3, true);
    Tape tape;
    const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
    const LossBreakdown p2m = p2m_risk_empirical(tape, batch, rb.priors);

    rb.priors.globals.variant = Variant::kP3m;
    rb.priors.globals.nu = 0.0;
    const LossBreakdown nu0 = p3m_total(tape, batch, rb.priors, 0.4);
    CHECK(nu0.l_total == p2m.l_total);

    rb.priors.globals.nu = 0.05;
    const LossBreakdown with_mix = p3m_total(tape, batch, rb.priors, 0.4);
    CHECK(std::abs(with_mix.l_total - p2m.l_total - 0.05 * with_mix.l_pmix) < 1e-12);
    CHECK(with_mix.l_pmix > 0.0);

    rb.priors.globals.variant = Variant::kP3mOri;
    CHECK_THROWS_AS(p3m_total(tape, batch, rb.priors, 0.4), UsageError);
    std::mt19937_64 anchor_rng(1);
    const LossBreakdown ori = p3m_total(tape, batch, rb.priors, 0.4, sample_unlabeled_anchors(batch, anchor_rng));
    CHECK(std::isfinite(ori.l_total));
  }
}

TEST_CASE("single-pass variant equals the augmented one when both passes agree") {
  std::mt19937_64 rng(59);
  RandomBatch rb = random_batch(rng, 8, 2, false);
  Tape tape;
  const Batch batch = make_constant_batch(tape, rb.proxies, rb.samples);
  rb.priors.globals.variant = Variant::kPm;
  const double pm = p3m_total(tape, batch, rb.priors, 1.0).l_total;
  rb.priors.globals.variant = Variant::kP2m;
  CHECK(std::abs(pm - p3m_total(tape, batch, rb.priors, 1.0).l_total) < 1e-12);
}

TEST_CASE("unlabeled anchors are drawn without replacement when possible") {
  std::mt19937_64 rng(61);
  const auto proxies = orthogonal_proxies(2);
  std::vector<SampleEmbeddings> samples;
  // class 1: 2 positives, 4 unlabeled; class 2: 5 positives, 1 unlabeled
  for (int j = 0; j < 6; ++j) {
    SampleEmbeddings s = sample(random_unit(rng, kD), {static_cast<std::int8_t>(j < 2 ? 1 : -1), static_cast<std::int8_t>(j < 5 ? 1 : -1)});
    s.augmented = s.embedding;
    samples.push_back(s);
  }
  Tape tape;
  const Batch batch = make_constant_batch(tape, proxies, samples);
  const MixupAnchors anchors = sample_unlabeled_anchors(batch, rng);
  REQUIRE(anchors.per_class.size() == 2);
  const auto& first = anchors.per_class[0];
  REQUIRE(first.size() == 2);
  CHECK(first[0] != first[1]);
  for (std::size_t a : first) CHECK(a >= 2);
  for (std::size_t a : anchors.per_class[1]) CHECK(a == 5);
}

TEST_CASE("gradients of every variant match finite differences") {
  GradCheckOptions options;
  options.instances = 4;
  const GradCheckReport report = run_grad_check(options);
  CHECK(report.variants.size() == 5);
  for (const VariantCheck& v : report.variants) {
    CAPTURE(to_string(v.variant));
    CHECK(v.passed);
    CHECK(v.max_relative_error < 1e-6);
  }

  options.corrupt = [](autodiff::Gradient& g) { g[0] += 1e-3; };
  CHECK_FALSE(run_grad_check(options).passed());
}
