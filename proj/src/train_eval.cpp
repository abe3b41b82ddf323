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

#include "pumetric/train_eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>

#include "pumetric/error.hpp"

namespace pumetric {
namespace {

std::mt19937_64 derived_engine(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

bool has_observed_positive(const PuDataset& dataset, std::size_t row) {
  for (std::size_t k = 0; k < dataset.num_classes(); ++k) {
    if (dataset.observed(row, k) == 1) return true;
  }
  return false;
}

// Batch boundaries for one epoch; a trailing singleton joins the previous batch.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  for (std::size_t start = 0; start < n; start += batch_size) {
    ranges.emplace_back(start, std::min(n, start + batch_size));
  }
  if (ranges.size() > 1 && ranges.back().second - ranges.back().first < 2) {
    ranges[ranges.size() - 2].second = n;
    ranges.pop_back();
  }
  return ranges;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw UsageError("train config: epochs must be >= 1");
  if (batch_size < 2) throw UsageError("train config: batch size must be >= 2");
  if (!(learning_rate > 0.0)) throw UsageError("train config: learning rate must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) throw UsageError("train config: warmup fraction must lie in [0, 1)");
  if (embedding_dim < 1) throw UsageError("train config: embedding dim must be >= 1");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0 && adam.epsilon > 0.0)) {
    throw UsageError("train config: invalid optimizer moments");
  }
  const double rate = priors.globals.dropout_rate;
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("train config: dropout rate must lie in [0, 1)");
}

std::vector<double> MetricsReport::clamp_frequency() const {
  if (step_log.empty()) return {};
  std::vector<double> freq(step_log.front().clamped.size(), 0.0);
  for (const StepRecord& r : step_log) {
    for (std::size_t k = 0; k < freq.size() && k < r.clamped.size(); ++k) freq[k] += r.clamped[k] ? 1.0 : 0.0;
  }
  for (double& f : freq) f /= static_cast<double>(step_log.size());
  return freq;
}

StepStreams::StepStreams(std::uint64_t seed)
    : shuffle(derived_engine(seed, 11)),
      dropout(derived_engine(seed, 12)),
      mixup(derived_engine(seed, 13)),
      anchors(derived_engine(seed, 14)) {}

StepPlan plan_step(const PuDataset& dataset, std::span<const std::size_t> rows, const PriorConfig& priors,
                   std::span<const std::size_t> hidden_dims, StepStreams& streams) {
  const Variant variant = priors.globals.variant;
  const double rate = priors.globals.dropout_rate;
  StepPlan plan;
  plan.rows.assign(rows.begin(), rows.end());
  for (std::size_t row : rows) {
    plan.first_pass.push_back(sample_mask(streams.dropout, rate, hidden_dims));
    const bool second = variant == Variant::kP2mAll || (augments_positives(variant) && has_observed_positive(dataset, row));
    if (second) {
      plan.second_pass.emplace_back(sample_mask(streams.dropout, rate, hidden_dims));
    } else {
      plan.second_pass.emplace_back(std::nullopt);
    }
  }
  if (uses_mixup(variant)) plan.mu = sample_mu(streams.mixup, priors.globals.alpha);
  if (variant == Variant::kP3mOri) plan.anchor_seed = streams.anchors();
  return plan;
}

LossBreakdown build_step_loss(autodiff::Tape& tape, const ModelParams& params, const PuDataset& dataset,
                              const StepPlan& plan, const PriorConfig& priors) {
  const EncoderGraph graph = bind_params(tape, params);
  Batch batch;
  batch.proxies = graph.proxies;
  const std::size_t K = dataset.num_classes();
  for (std::size_t b = 0; b < plan.rows.size(); ++b) {
    const std::size_t row = plan.rows[b];
    BatchSample sample;
    sample.embedding = encode_pair(tape, graph, params, dataset.features(row), &plan.first_pass[b]);
    if (plan.second_pass[b]) sample.augmented = encode_pair(tape, graph, params, dataset.features(row), &*plan.second_pass[b]);
    sample.observed.resize(K);
    for (std::size_t k = 0; k < K; ++k) sample.observed[k] = dataset.observed(row, k);
    batch.samples.push_back(std::move(sample));
  }
  MixupAnchors anchors;
  if (priors.globals.variant == Variant::kP3mOri) {
    std::mt19937_64 rng(plan.anchor_seed);
    anchors = sample_unlabeled_anchors(batch, rng);
  }
  return p3m_total(tape, batch, priors, plan.mu, anchors);
}

double scheduled_learning_rate(double base, std::size_t step, std::size_t total_steps, std::size_t warmup_steps) {
  if (step < warmup_steps) return base * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  if (total_steps <= warmup_steps) return 0.0;
  return base * static_cast<double>(total_steps - step) / static_cast<double>(total_steps - warmup_steps);
}

TrainResult train(const TrainConfig& config, const PuDataset& dataset) {
  config.validate();
  if (dataset.size() < 2) throw UsageError("training needs at least two samples");
  if (config.priors.num_classes() != dataset.num_classes()) {
    throw UsageError("prior config has " + std::to_string(config.priors.num_classes()) + " classes, dataset has " +
                     std::to_string(dataset.num_classes()));
  }
  std::vector<std::size_t> dims{dataset.input_dim()};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.embedding_dim);
  ModelParams params = init_params(config.seed, dims, dataset.num_classes());

  StepStreams streams(config.seed);
  const auto ranges = batch_ranges(dataset.size(), config.batch_size);
  std::size_t total_steps = config.epochs * ranges.size();
  if (config.max_steps) total_steps = std::min(total_steps, *config.max_steps);
  const auto warmup_steps = static_cast<std::size_t>(config.warmup_fraction * static_cast<double>(total_steps));

  auto theta = params.values();
  std::vector<double> m(theta.size(), 0.0);
  std::vector<double> v(theta.size(), 0.0);
  double beta1_power = 1.0;
  double beta2_power = 1.0;

  MetricsReport report;
  std::vector<std::size_t> order(dataset.size());
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < config.epochs && step < total_steps; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), streams.shuffle);
    for (const auto& [begin, end] : ranges) {
      if (step >= total_steps) break;
      const std::span<const std::size_t> rows(order.data() + begin, end - begin);
      const StepPlan plan = plan_step(dataset, rows, config.priors, config.hidden_dims, streams);

      autodiff::Tape tape(params.values());
      LossBreakdown loss;
      autodiff::Gradient grad;
      try {
        loss = build_step_loss(tape, params, dataset, plan, config.priors);
        if (!std::isfinite(loss.l_total)) throw NumericError("non-finite loss", "loss");
        grad = tape.backward(loss.total);
      } catch (const NumericError& e) {
        throw TrainingError("training diverged at step " + std::to_string(step) + ": " + e.what(),
                            step == 0 ? 0 : step - 1);
      }

      const double lr = scheduled_learning_rate(config.learning_rate, step, total_steps, warmup_steps);
      beta1_power *= config.adam.beta1;
      beta2_power *= config.adam.beta2;
      for (std::size_t k = 0; k < theta.size(); ++k) {
        m[k] = config.adam.beta1 * m[k] + (1.0 - config.adam.beta1) * grad[k];
        v[k] = config.adam.beta2 * v[k] + (1.0 - config.adam.beta2) * grad[k] * grad[k];
        const double m_hat = m[k] / (1.0 - beta1_power);
        const double v_hat = v[k] / (1.0 - beta2_power);
        theta[k] -= lr * m_hat / (std::sqrt(v_hat) + config.adam.epsilon);
      }

      StepRecord record;
      record.step = step;
      record.epoch = epoch;
      record.learning_rate = lr;
      record.mu = plan.mu;
      record.l_pm_or_p2m = loss.l_pm_or_p2m;
      record.l_pmix = loss.l_pmix;
      record.l_total = loss.l_total;
      for (const ClassTerms& c : loss.classes) {
        record.clamped.push_back(c.active && c.clamped);
        record.active_classes += c.active;
      }
      report.step_log.push_back(std::move(record));
      ++step;
    }
  }

  if (dataset.has_truth()) {
    MetricsReport scored = evaluate(params, dataset);
    scored.step_log = std::move(report.step_log);
    report = std::move(scored);
  }
  return {std::move(params), std::move(report)};
}

MetricsReport micro_metrics(std::vector<ClassCounts> per_class) {
  MetricsReport report;
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const ClassCounts& c : per_class) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  report.per_class = std::move(per_class);
  report.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  report.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  const double pr = report.precision + report.recall;
  report.f1 = pr > 0.0 ? 2.0 * report.precision * report.recall / pr : 0.0;
  return report;
}

MetricsReport evaluate(const ModelParams& params, const PuDataset& dataset) {
  if (!dataset.has_truth()) throw UsageError("evaluate needs a dataset with true labels");
  if (dataset.num_classes() != params.num_classes() || dataset.input_dim() != params.input_dim()) {
    throw UsageError("dataset shape does not match the model");
  }
  const std::size_t K = dataset.num_classes();
  std::vector<ClassCounts> counts(K);
  std::vector<EmbeddingVector> proxies;
  for (std::size_t i = 0; i <= K; ++i) proxies.push_back(proxy(params, i));

  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < dataset.size(); start += kChunk) {
    autodiff::Tape tape(params.values());
    const EncoderGraph graph = bind_params(tape, params);
    const std::size_t end = std::min(dataset.size(), start + kChunk);
    for (std::size_t j = start; j < end; ++j) {
      const auto f = tape.value(encode_pair(tape, graph, params, dataset.features(j), nullptr));
      const EmbeddingVector embedding = EmbeddingVector::normalize({f.begin(), f.end()});
      const double none_score = proxies[0].dot(embedding);
      for (std::size_t k = 0; k < K; ++k) {
        const bool predicted = proxies[k + 1].dot(embedding) > none_score;
        const bool actual = dataset.truth(j, k) == 1;
        counts[k].tp += predicted && actual;
        counts[k].fp += predicted && !actual;
        counts[k].fn += !predicted && actual;
      }
    }
  }
  return micro_metrics(std::move(counts));
}

SweepTable sweep_prior_multiplier(const TrainConfig& base, std::span<const double> multipliers,
                                  std::span<const std::uint64_t> seeds, const PuDataset& train_set,
                                  const PuDataset& test_set, std::size_t threads) {
  if (multipliers.empty() || seeds.empty()) throw UsageError("sweep needs at least one multiplier and one seed");
  SweepTable table;
  std::vector<PriorConfig> priors;
  for (double mult : multipliers) {
    PriorGlobals globals = base.priors.globals;
    globals.prior_multiplier = mult;
    priors.push_back(build_prior_config(train_set, globals));
    for (std::uint64_t seed : seeds) table.cells.push_back({mult, seed, {}, priors.back()});
  }

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t idx = next.fetch_add(1);
      if (idx >= table.cells.size()) return;
      SweepCell& cell = table.cells[idx];
      try {
        TrainConfig config = base;
        config.seed = cell.seed;
        config.priors = cell.priors;
        const TrainResult result = train(config, train_set);
        cell.metrics = evaluate(result.params, test_set);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(threads, 1, table.cells.size());
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  for (std::size_t mi = 0; mi < multipliers.size(); ++mi) {
    SweepSummary s{multipliers[mi], 0.0, 0.0, 0.0};
    for (std::size_t si = 0; si < seeds.size(); ++si) {
      const MetricsReport& m = table.cells[mi * seeds.size() + si].metrics;
      s.precision += m.precision;
      s.recall += m.recall;
      s.f1 += m.f1;
    }
    const double count = static_cast<double>(seeds.size());
    s.precision /= count;
    s.recall /= count;
    s.f1 /= count;
    table.summary.push_back(s);
  }
  return table;
}

}  // namespace pumetric
