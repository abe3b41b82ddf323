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
#include <random>
#include <span>
#include <vector>

#include "pumetric/autodiff.hpp"

namespace pumetric {

/// Unit-norm real vector: an encoded sample, a relation proxy, or a mixup point.
class EmbeddingVector {
 public:
  /// Tolerance used when adopting a vector that is claimed to be unit-norm.
  static constexpr double kNormTolerance = 1e-9;

  /// Scales `values` to unit length; throws UsageError for a zero vector.
  static EmbeddingVector normalize(std::vector<double> values);
  /// Adopts `values` as-is; throws UsageError unless | ||values|| - 1 | <= kNormTolerance.
  static EmbeddingVector from_unit(std::vector<double> values);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const { return values_[k]; }
  double dot(const EmbeddingVector& other) const;
  double norm() const;

  friend bool operator==(const EmbeddingVector&, const EmbeddingVector&) = default;

 private:
  explicit EmbeddingVector(std::vector<double> values) : values_(std::move(values)) {}
  std::vector<double> values_;
};

/// Offsets of one dense layer inside the flat parameter vector.
struct LayerLayout {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;  // out x in, row-major
  std::size_t bias_offset = 0;

  friend bool operator==(const LayerLayout&, const LayerLayout&) = default;
};

/**
 * Encoder weights plus the raw relation proxy table, stored in one flat
 * vector so gradients line up with it directly.
 *
 * dims = {d_in, hidden..., d_emb}. Hidden layers use tanh; the last layer is
 * linear and its output is L2-normalized. Proxy row 0 is the none-class
 * proxy, rows 1..K the relation classes.
 */
class ModelParams {
 public:
  ModelParams(std::vector<std::size_t> dims, std::size_t num_classes);

  std::span<const std::size_t> dims() const noexcept { return dims_; }
  std::vector<std::size_t> hidden_dims() const;
  std::size_t input_dim() const noexcept { return dims_.front(); }
  std::size_t embedding_dim() const noexcept { return dims_.back(); }
  std::size_t num_classes() const noexcept { return num_classes_; }
  std::span<const LayerLayout> layers() const noexcept { return layers_; }
  std::size_t proxy_offset(std::size_t row) const;

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  std::span<double> proxy_row(std::size_t row);
  std::span<const double> proxy_row(std::size_t row) const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<std::size_t> dims_;
  std::size_t num_classes_;
  std::vector<LayerLayout> layers_;
  std::size_t proxy_offset_ = 0;
  std::vector<double> values_;
};

/// Inverted-dropout scales per hidden unit: each entry is 0 or 1/(1-rate).
class DropoutMask {
 public:
  static DropoutMask ones(std::span<const std::size_t> hidden_dims);
  explicit DropoutMask(std::vector<std::vector<double>> layers) : layers_(std::move(layers)) {}

  std::size_t num_layers() const noexcept { return layers_.size(); }
  std::span<const double> layer(std::size_t k) const { return layers_.at(k); }

 private:
  std::vector<std::vector<double>> layers_;
};

/// Weights and biases ~ U(-sqrt(3/fan_in), sqrt(3/fan_in)); proxies uniform on the sphere.
ModelParams init_params(std::uint64_t seed, std::span<const std::size_t> dims, std::size_t num_classes);

/// Bernoulli keep with probability 1 - rate, kept entries scaled by 1/(1 - rate).
DropoutMask sample_mask(std::mt19937_64& rng, double rate, std::span<const std::size_t> hidden_dims);

/// Parameter leaves of one ModelParams on a tape, plus its normalized proxies.
struct EncoderGraph {
  std::vector<autodiff::Var> weights;
  std::vector<autodiff::Var> biases;
  std::vector<autodiff::Var> proxies;  // K+1 unit-norm nodes
};

/// `tape` must have been constructed over params.values().
EncoderGraph bind_params(autodiff::Tape& tape, const ModelParams& params);

/// Encodes one feature vector on a tape; `mask` null means inference mode.
autodiff::Var encode_pair(autodiff::Tape& tape, const EncoderGraph& graph, const ModelParams& params,
                          std::span<const double> features, const DropoutMask* mask);

EmbeddingVector encode_pair(std::span<const double> features, const ModelParams& params,
                            const DropoutMask* mask = nullptr);

/// Normalized proxy row i (0 = none class).
EmbeddingVector proxy(const ModelParams& params, std::size_t i);

/// Relation classes in 1..K whose proxy beats the none-class proxy strictly.
std::vector<std::size_t> predict(std::span<const double> features, const ModelParams& params);
std::vector<std::size_t> predict(const EmbeddingVector& embedding, const ModelParams& params);

}  // namespace pumetric
