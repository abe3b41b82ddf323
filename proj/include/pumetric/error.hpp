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
#include <stdexcept>
#include <string>

namespace pumetric {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller violated an operation's precondition (bad sizes, bad arguments).
class UsageError : public Error {
 public:
  using Error::Error;
};

/// A value left the domain of a formula (e.g. a prior outside [0, 1)).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// An experiment or prior configuration is inconsistent.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A NaN or Inf was met while differentiating; carries the op-kind name.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::string op_kind)
      : Error(what), op_kind_(std::move(op_kind)) {}
  const std::string& op_kind() const noexcept { return op_kind_; }

 private:
  std::string op_kind_;
};

/// Malformed input file; line is 1-based, 0 when unknown.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : Error(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

/// Well-formed input whose fields disagree with the declared schema.
class SchemaError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  TrainingError(const std::string& what, std::size_t last_finite_step)
      : Error(what), last_finite_step_(last_finite_step) {}
  std::size_t last_finite_step() const noexcept { return last_finite_step_; }

 private:
  std::size_t last_finite_step_;
};

}  // namespace pumetric
