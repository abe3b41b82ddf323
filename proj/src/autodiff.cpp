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

#include "pumetric/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "pumetric/error.hpp"

namespace pumetric::autodiff {
namespace {

constexpr std::uint32_t kNoParent = std::numeric_limits<std::uint32_t>::max();

double stable_softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

}  // namespace

std::string_view to_string(OpKind kind) {
  switch (kind) {
    case OpKind::kInput: return "input";
    case OpKind::kParameter: return "parameter";
    case OpKind::kAdd: return "add";
    case OpKind::kSub: return "sub";
    case OpKind::kMul: return "mul";
    case OpKind::kDiv: return "div";
    case OpKind::kExp: return "exp";
    case OpKind::kLog: return "log";
    case OpKind::kDot: return "dot";
    case OpKind::kScale: return "scale";
    case OpKind::kSoftplus: return "softplus";
    case OpKind::kL2Norm: return "l2norm";
    case OpKind::kTanh: return "tanh";
    case OpKind::kAffine: return "affine";
  }
  return "unknown";
}

Tape::Tape(std::span<const double> parameters) : parameters_(parameters) {}

Var Tape::push(OpKind kind, std::size_t size, std::initializer_list<Var> parents, double aux,
               std::size_t param_offset) {
  Node node{kind, static_cast<std::uint32_t>(size), values_.size(), {kNoParent, kNoParent, kNoParent}, aux,
            param_offset};
  std::size_t k = 0;
  for (Var p : parents) node.parents[k++] = p.id;
  values_.resize(values_.size() + size);
  nodes_.push_back(node);
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Tape::check(Var v) const {
  if (v.id >= nodes_.size()) throw UsageError("autodiff: variable does not belong to this tape");
}

void Tape::require_same_size(Var a, Var b, OpKind kind) const {
  check(a);
  check(b);
  if (nodes_[a.id].size != nodes_[b.id].size) {
    throw UsageError("autodiff: size mismatch in '" + std::string(to_string(kind)) + "' (" +
                     std::to_string(nodes_[a.id].size) + " vs " + std::to_string(nodes_[b.id].size) + ")");
  }
}

Var Tape::input(std::span<const double> values) {
  Var v = push(OpKind::kInput, values.size(), {});
  std::copy(values.begin(), values.end(), data(v));
  return v;
}

Var Tape::input(double value) { return input(std::span<const double>(&value, 1)); }

Var Tape::parameter(std::size_t offset, std::size_t size) {
  if (offset + size > parameters_.size()) throw UsageError("autodiff: parameter slice out of range");
  Var v = push(OpKind::kParameter, size, {}, 0.0, offset);
  std::copy_n(parameters_.begin() + static_cast<std::ptrdiff_t>(offset), size, data(v));
  return v;
}

Var Tape::add(Var a, Var b) {
  require_same_size(a, b, OpKind::kAdd);
  const std::size_t n = size(a);
  Var out = push(OpKind::kAdd, n, {a, b});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = data(a)[k] + data(b)[k];
  return out;
}

Var Tape::sub(Var a, Var b) {
  require_same_size(a, b, OpKind::kSub);
  const std::size_t n = size(a);
  Var out = push(OpKind::kSub, n, {a, b});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = data(a)[k] - data(b)[k];
  return out;
}

Var Tape::mul(Var a, Var b) {
  require_same_size(a, b, OpKind::kMul);
  const std::size_t n = size(a);
  Var out = push(OpKind::kMul, n, {a, b});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = data(a)[k] * data(b)[k];
  return out;
}

Var Tape::div(Var a, Var b) {
  require_same_size(a, b, OpKind::kDiv);
  const std::size_t n = size(a);
  Var out = push(OpKind::kDiv, n, {a, b});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = data(a)[k] / data(b)[k];
  return out;
}

Var Tape::exp(Var a) {
  check(a);
  const std::size_t n = size(a);
  Var out = push(OpKind::kExp, n, {a});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = std::exp(data(a)[k]);
  return out;
}

Var Tape::log(Var a) {
  check(a);
  const std::size_t n = size(a);
  Var out = push(OpKind::kLog, n, {a});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = std::log(data(a)[k]);
  return out;
}

Var Tape::tanh(Var a) {
  check(a);
  const std::size_t n = size(a);
  Var out = push(OpKind::kTanh, n, {a});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = std::tanh(data(a)[k]);
  return out;
}

Var Tape::softplus(Var a) {
  check(a);
  const std::size_t n = size(a);
  Var out = push(OpKind::kSoftplus, n, {a});
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = stable_softplus(data(a)[k]);
  return out;
}

Var Tape::dot(Var a, Var b) {
  require_same_size(a, b, OpKind::kDot);
  const std::size_t n = size(a);
  Var out = push(OpKind::kDot, 1, {a, b});
  double acc = 0.0;
  for (std::size_t k = 0; k < n; ++k) acc += data(a)[k] * data(b)[k];
  data(out)[0] = acc;
  return out;
}

Var Tape::scale(Var a, double factor) {
  check(a);
  const std::size_t n = size(a);
  Var out = push(OpKind::kScale, n, {a}, factor);
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = factor * data(a)[k];
  return out;
}

Var Tape::l2norm(Var a) {
  check(a);
  const std::size_t n = size(a);
  double sq = 0.0;
  for (std::size_t k = 0; k < n; ++k) sq += data(a)[k] * data(a)[k];
  const double norm = std::sqrt(sq);
  Var out = push(OpKind::kL2Norm, n, {a}, norm);
  for (std::size_t k = 0; k < n; ++k) data(out)[k] = data(a)[k] / norm;
  return out;
}

Var Tape::affine(Var weight, Var x, Var bias) {
  check(weight);
  check(x);
  check(bias);
  const std::size_t rows = size(bias);
  const std::size_t cols = size(x);
  if (size(weight) != rows * cols) {
    throw UsageError("autodiff: affine weight has " + std::to_string(size(weight)) + " entries, expected " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
  Var out = push(OpKind::kAffine, rows, {weight, x, bias});
  const double* w = data(weight);
  const double* xv = data(x);
  const double* b = data(bias);
  double* y = data(out);
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* wr = w + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += wr[c] * xv[c];
    y[r] = acc;
  }
  return out;
}

Var Tape::sum(std::span<const Var> terms) {
  if (terms.empty()) return input(0.0);
  Var acc = terms[0];
  for (std::size_t k = 1; k < terms.size(); ++k) acc = add(acc, terms[k]);
  return acc;
}

std::span<const double> Tape::value(Var v) const {
  check(v);
  return {data(v), nodes_[v.id].size};
}

double Tape::scalar(Var v) const {
  check(v);
  if (nodes_[v.id].size != 1) throw UsageError("autodiff: node is not a scalar");
  return data(v)[0];
}

std::size_t Tape::size(Var v) const {
  check(v);
  return nodes_[v.id].size;
}

OpKind Tape::kind(Var v) const {
  check(v);
  return nodes_[v.id].kind;
}

Gradient Tape::backward(Var root) const {
  check(root);
  if (nodes_[root.id].size != 1) {
    throw UsageError("autodiff: backward needs a scalar root, got size " + std::to_string(nodes_[root.id].size));
  }
  Gradient grad(parameters_.size(), 0.0);
  std::vector<double> adj(values_.size(), 0.0);
  std::vector<char> reachable(root.id + 1, 0);
  adj[nodes_[root.id].value] = 1.0;
  reachable[root.id] = 1;

  for (std::size_t id = root.id + 1; id-- > 0;) {
    if (!reachable[id]) continue;
    const Node& node = nodes_[id];
    const double* y = values_.data() + node.value;
    const double* g = adj.data() + node.value;
    for (std::size_t k = 0; k < node.size; ++k) {
      if (!std::isfinite(y[k]) || !std::isfinite(g[k])) {
        const std::string name(to_string(node.kind));
        throw NumericError("autodiff: non-finite value in op '" + name + "'", name);
      }
    }
    for (std::uint32_t p : node.parents) {
      if (p != kNoParent) reachable[p] = 1;
    }
    auto parent_adj = [&](int which) { return adj.data() + nodes_[node.parents[which]].value; };
    auto parent_val = [&](int which) { return values_.data() + nodes_[node.parents[which]].value; };
    const std::size_t n = node.size;

    switch (node.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kParameter:
        for (std::size_t k = 0; k < n; ++k) grad[node.param_offset + k] += g[k];
        break;
      case OpKind::kAdd: {
        double* ga = parent_adj(0);
        double* gb = parent_adj(1);
        for (std::size_t k = 0; k < n; ++k) {
          ga[k] += g[k];
          gb[k] += g[k];
        }
        break;
      }
      case OpKind::kSub: {
        double* ga = parent_adj(0);
        double* gb = parent_adj(1);
        for (std::size_t k = 0; k < n; ++k) {
          ga[k] += g[k];
          gb[k] -= g[k];
        }
        break;
      }
      case OpKind::kMul: {
        double* ga = parent_adj(0);
        double* gb = parent_adj(1);
        const double* a = parent_val(0);
        const double* b = parent_val(1);
        for (std::size_t k = 0; k < n; ++k) {
          ga[k] += g[k] * b[k];
          gb[k] += g[k] * a[k];
        }
        break;
      }
      case OpKind::kDiv: {
        double* ga = parent_adj(0);
        double* gb = parent_adj(1);
        const double* b = parent_val(1);
        for (std::size_t k = 0; k < n; ++k) {
          ga[k] += g[k] / b[k];
          gb[k] -= g[k] * y[k] / b[k];
        }
        break;
      }
      case OpKind::kExp: {
        double* ga = parent_adj(0);
        for (std::size_t k = 0; k < n; ++k) ga[k] += g[k] * y[k];
        break;
      }
      case OpKind::kLog: {
        double* ga = parent_adj(0);
        const double* a = parent_val(0);
        for (std::size_t k = 0; k < n; ++k) ga[k] += g[k] / a[k];
        break;
      }
      case OpKind::kTanh: {
        double* ga = parent_adj(0);
        for (std::size_t k = 0; k < n; ++k) ga[k] += g[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case OpKind::kSoftplus: {
        double* ga = parent_adj(0);
        const double* a = parent_val(0);
        for (std::size_t k = 0; k < n; ++k) ga[k] += g[k] * sigmoid(a[k]);
        break;
      }
      case OpKind::kDot: {
        const std::size_t m = nodes_[node.parents[0]].size;
        double* ga = parent_adj(0);
        double* gb = parent_adj(1);
        const double* a = parent_val(0);
        const double* b = parent_val(1);
        for (std::size_t k = 0; k < m; ++k) {
          ga[k] += g[0] * b[k];
          gb[k] += g[0] * a[k];
        }
        break;
      }
      case OpKind::kScale: {
        double* ga = parent_adj(0);
        for (std::size_t k = 0; k < n; ++k) ga[k] += g[k] * node.aux;
        break;
      }
      case OpKind::kL2Norm: {
        // d(x/|x|) applied to g: (g - y (y.g)) / |x|
        double* ga = parent_adj(0);
        double yg = 0.0;
        for (std::size_t k = 0; k < n; ++k) yg += y[k] * g[k];
        for (std::size_t k = 0; k < n; ++k) ga[k] += (g[k] - y[k] * yg) / node.aux;
        break;
      }
      case OpKind::kAffine: {
        const std::size_t cols = nodes_[node.parents[1]].size;
        double* gw = parent_adj(0);
        double* gx = parent_adj(1);
        double* gbias = parent_adj(2);
        const double* w = parent_val(0);
        const double* x = parent_val(1);
        for (std::size_t r = 0; r < n; ++r) {
          const double gr = g[r];
          gbias[r] += gr;
          if (gr == 0.0) continue;
          double* gwr = gw + r * cols;
          const double* wr = w + r * cols;
          for (std::size_t c = 0; c < cols; ++c) {
            gwr[c] += gr * x[c];
            gx[c] += gr * wr[c];
          }
        }
        break;
      }
    }
  }
  return grad;
}

Gradient finite_difference(const std::function<double(std::span<const double>)>& scalar_fn,
                           std::span<const double> params, double epsilon) {
  if (!(epsilon > 0.0)) throw UsageError("finite_difference: epsilon must be positive");
  std::vector<double> probe(params.begin(), params.end());
  Gradient grad(params.size(), 0.0);
  for (std::size_t k = 0; k < probe.size(); ++k) {
    const double original = probe[k];
    probe[k] = original + epsilon;
    const double up = scalar_fn(probe);
    probe[k] = original - epsilon;
    const double down = scalar_fn(probe);
    probe[k] = original;
    grad[k] = (up - down) / (2.0 * epsilon);
  }
  return grad;
}

double max_relative_error(std::span<const double> analytic, std::span<const double> numeric) {
  if (analytic.size() != numeric.size()) throw UsageError("max_relative_error: size mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t k = 0; k < analytic.size(); ++k) {
    if (!std::isfinite(analytic[k]) || !std::isfinite(numeric[k])) return std::numeric_limits<double>::infinity();
    diff = std::max(diff, std::abs(analytic[k] - numeric[k]));
    scale = std::max({scale, std::abs(analytic[k]), std::abs(numeric[k])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

}  // namespace pumetric::autodiff
