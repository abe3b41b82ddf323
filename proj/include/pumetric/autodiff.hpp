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
#include <span>
#include <string_view>
#include <vector>

namespace pumetric::autodiff {

enum class OpKind : std::uint8_t {
  kInput,      // constant leaf
  kParameter,  // leaf bound to a slice of the parameter vector
  kAdd,
  kSub,
  kMul,  // elementwise
  kDiv,  // elementwise
  kExp,
  kLog,
  kDot,
  kScale,
  kSoftplus,
  kL2Norm,
  kTanh,
  kAffine,  // W x + b, W row-major
};

std::string_view to_string(OpKind kind);

/// Handle to a node on a Tape. Only meaningful for the tape that made it.
struct Var {
  std::uint32_t id = 0;
};

/// Gradient with the same layout as the parameter vector of the tape.
using Gradient = std::vector<double>;

/**
 * Reverse-mode tape over vector-valued nodes.
 *
 * Nodes are appended in evaluation order, so the tape is acyclic by
 * construction. Every op evaluates eagerly; backward() replays the tape in
 * reverse. Element-wise binary ops require equal sizes (no broadcasting).
 */
class Tape {
 public:
  /// The parameter span must outlive every call to parameter().
  explicit Tape(std::span<const double> parameters = {});

  Var input(std::span<const double> values);
  Var input(double value);
  Var parameter(std::size_t offset, std::size_t size);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var div(Var a, Var b);
  Var exp(Var a);
  Var log(Var a);
  Var tanh(Var a);
  /// max(z, 0) + log1p(exp(-|z|)), elementwise.
  Var softplus(Var a);
  Var dot(Var a, Var b);
  Var scale(Var a, double factor);
  /// x / ||x||_2. A zero vector yields non-finite values.
  Var l2norm(Var a);
  Var affine(Var weight, Var x, Var bias);

  /// Sum of scalar nodes; an empty list yields the constant 0.
  Var sum(std::span<const Var> terms);

  std::span<const double> value(Var v) const;
  double scalar(Var v) const;
  std::size_t size(Var v) const;
  OpKind kind(Var v) const;
  std::size_t node_count() const noexcept { return nodes_.size(); }
  std::size_t parameter_count() const noexcept { return parameters_.size(); }

  /// d(root)/d(parameters). Throws UsageError for a non-scalar root and
  /// NumericError when a reachable value or adjoint is not finite.
  Gradient backward(Var root) const;

 private:
  struct Node {
    OpKind kind;
    std::uint32_t size;
    std::size_t value;  // offset into values_
    std::uint32_t parents[3];
    double aux;  // scale factor, or the input norm for kL2Norm
    std::size_t param_offset;
  };

  Var push(OpKind kind, std::size_t size, std::initializer_list<Var> parents, double aux = 0.0,
           std::size_t param_offset = 0);
  const double* data(Var v) const { return values_.data() + nodes_[v.id].value; }
  double* data(Var v) { return values_.data() + nodes_[v.id].value; }
  void check(Var v) const;
  void require_same_size(Var a, Var b, OpKind kind) const;

  std::span<const double> parameters_;
  std::vector<Node> nodes_;
  std::vector<double> values_;
};

/// Central differences (f(p + eps e_k) - f(p - eps e_k)) / (2 eps) per coordinate.
Gradient finite_difference(const std::function<double(std::span<const double>)>& scalar_fn,
                           std::span<const double> params, double epsilon);

/// max_k |a_k - b_k| / max(max_k |a_k|, max_k |b_k|); 0 when both vanish.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

}  // namespace pumetric::autodiff
