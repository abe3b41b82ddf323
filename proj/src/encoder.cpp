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

#include "pumetric/encoder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "pumetric/error.hpp"

namespace pumetric {

EmbeddingVector EmbeddingVector::normalize(std::vector<double> values) {
  double sq = 0.0;
  for (double v : values) sq += v * v;
  const double norm = std::sqrt(sq);
  if (!(norm > 0.0) || !std::isfinite(norm)) throw UsageError("cannot normalize a zero or non-finite vector");
  for (double& v : values) v /= norm;
  return EmbeddingVector(std::move(values));
}

EmbeddingVector EmbeddingVector::from_unit(std::vector<double> values) {
  EmbeddingVector e(std::move(values));
  if (std::abs(e.norm() - 1.0) > kNormTolerance) {
    throw UsageError("embedding is not unit-norm (norm " + std::to_string(e.norm()) + ")");
  }
  return e;
}

double EmbeddingVector::dot(const EmbeddingVector& other) const {
  if (other.size() != size()) throw UsageError("embedding dimension mismatch");
  return std::inner_product(values_.begin(), values_.end(), other.values_.begin(), 0.0);
}

double EmbeddingVector::norm() const { return std::sqrt(std::inner_product(values_.begin(), values_.end(), values_.begin(), 0.0)); }

ModelParams::ModelParams(std::vector<std::size_t> dims, std::size_t num_classes)
    : dims_(std::move(dims)), num_classes_(num_classes) {
  if (dims_.size() < 2) throw UsageError("encoder needs at least input and embedding dims");
  for (std::size_t d : dims_) {
    if (d < 1) throw UsageError("encoder dims must be >= 1");
  }
  if (num_classes_ < 1) throw UsageError("need at least one relation class");
  std::size_t offset = 0;
  for (std::size_t k = 0; k + 1 < dims_.size(); ++k) {
    LayerLayout layer{dims_[k], dims_[k + 1], offset, offset + dims_[k] * dims_[k + 1]};
    offset = layer.bias_offset + layer.out;
    layers_.push_back(layer);
  }
  proxy_offset_ = offset;
  values_.assign(offset + (num_classes_ + 1) * embedding_dim(), 0.0);
}

std::vector<std::size_t> ModelParams::hidden_dims() const { return {dims_.begin() + 1, dims_.end() - 1}; }

std::size_t ModelParams::proxy_offset(std::size_t row) const {
  if (row > num_classes_) {
    throw UsageError("proxy index " + std::to_string(row) + " out of range 0.." + std::to_string(num_classes_));
  }
  return proxy_offset_ + row * embedding_dim();
}

std::span<double> ModelParams::proxy_row(std::size_t row) {
  return std::span<double>(values_).subspan(proxy_offset(row), embedding_dim());
}

std::span<const double> ModelParams::proxy_row(std::size_t row) const {
  return std::span<const double>(values_).subspan(proxy_offset(row), embedding_dim());
}

DropoutMask DropoutMask::ones(std::span<const std::size_t> hidden_dims) {
  std::vector<std::vector<double>> layers;
  for (std::size_t d : hidden_dims) layers.emplace_back(d, 1.0);
  return DropoutMask(std::move(layers));
}

ModelParams init_params(std::uint64_t seed, std::span<const std::size_t> dims, std::size_t num_classes) {
  if (dims.empty()) throw UsageError("init_params: empty dims");
  ModelParams params(std::vector<std::size_t>(dims.begin(), dims.end()), num_classes);
  std::mt19937_64 rng(seed);
  auto values = params.values();
  for (const LayerLayout& layer : params.layers()) {
    const double limit = std::sqrt(3.0 / static_cast<double>(layer.in));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    for (std::size_t k = 0; k < layer.in * layer.out; ++k) values[layer.weight_offset + k] = uniform(rng);
    for (std::size_t k = 0; k < layer.out; ++k) values[layer.bias_offset + k] = uniform(rng);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t row = 0; row <= num_classes; ++row) {
    auto proxy_values = params.proxy_row(row);
    double sq = 0.0;
    do {
      sq = 0.0;
      for (double& v : proxy_values) {
        v = normal(rng);
        sq += v * v;
      }
    } while (sq == 0.0);
    const double norm = std::sqrt(sq);
    for (double& v : proxy_values) v /= norm;
  }
  return params;
}

DropoutMask sample_mask(std::mt19937_64& rng, double rate, std::span<const std::size_t> hidden_dims) {
  if (!(rate >= 0.0 && rate < 1.0)) throw UsageError("dropout rate must lie in [0, 1)");
  if (rate == 0.0) return DropoutMask::ones(hidden_dims);
  std::bernoulli_distribution keep(1.0 - rate);
  const double kept = 1.0 / (1.0 - rate);
  std::vector<std::vector<double>> layers;
  for (std::size_t d : hidden_dims) {
    std::vector<double> layer(d);
    for (double& v : layer) v = keep(rng) ? kept : 0.0;
    layers.push_back(std::move(layer));
  }
  return DropoutMask(std::move(layers));
}

EncoderGraph bind_params(autodiff::Tape& tape, const ModelParams& params) {
  if (tape.parameter_count() != params.values().size()) {
    throw UsageError("bind_params: tape was not built over these parameters");
  }
  EncoderGraph graph;
  for (const LayerLayout& layer : params.layers()) {
    graph.weights.push_back(tape.parameter(layer.weight_offset, layer.in * layer.out));
    graph.biases.push_back(tape.parameter(layer.bias_offset, layer.out));
  }
  for (std::size_t row = 0; row <= params.num_classes(); ++row) {
    graph.proxies.push_back(tape.l2norm(tape.parameter(params.proxy_offset(row), params.embedding_dim())));
  }
  return graph;
}

autodiff::Var encode_pair(autodiff::Tape& tape, const EncoderGraph& graph, const ModelParams& params,
                          std::span<const double> features, const DropoutMask* mask) {
  if (features.size() != params.input_dim()) {
    throw UsageError("feature length " + std::to_string(features.size()) + " does not match encoder input " +
                     std::to_string(params.input_dim()));
  }
  const auto layers = params.layers();
  if (mask != nullptr) {
    if (mask->num_layers() + 1 != layers.size()) throw UsageError("dropout mask layer count mismatch");
    for (std::size_t k = 0; k < mask->num_layers(); ++k) {
      if (mask->layer(k).size() != layers[k].out) throw UsageError("dropout mask width mismatch");
    }
  }
  autodiff::Var h = tape.input(features);
  for (std::size_t k = 0; k < layers.size(); ++k) {
    h = tape.affine(graph.weights[k], h, graph.biases[k]);
    if (k + 1 == layers.size()) break;
    h = tape.tanh(h);
    if (mask != nullptr) h = tape.mul(h, tape.input(mask->layer(k)));
  }
  return tape.l2norm(h);
}

EmbeddingVector encode_pair(std::span<const double> features, const ModelParams& params, const DropoutMask* mask) {
  autodiff::Tape tape(params.values());
  const EncoderGraph graph = bind_params(tape, params);
  const autodiff::Var f = encode_pair(tape, graph, params, features, mask);
  const auto v = tape.value(f);
  return EmbeddingVector::normalize({v.begin(), v.end()});
}

EmbeddingVector proxy(const ModelParams& params, std::size_t i) {
  const auto row = params.proxy_row(i);
  return EmbeddingVector::normalize({row.begin(), row.end()});
}

std::vector<std::size_t> predict(const EmbeddingVector& embedding, const ModelParams& params) {
  const double none_score = proxy(params, 0).dot(embedding);
  std::vector<std::size_t> classes;
  for (std::size_t i = 1; i <= params.num_classes(); ++i) {
    if (proxy(params, i).dot(embedding) > none_score) classes.push_back(i);
  }
  return classes;
}

std::vector<std::size_t> predict(std::span<const double> features, const ModelParams& params) {
  return predict(encode_pair(features, params, nullptr), params);
}

}  // namespace pumetric
