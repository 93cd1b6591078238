// Copyright 2026 The ecsched Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef ECSCHED_ERRORS_HPP
#define ECSCHED_ERRORS_HPP

#include <stdexcept>
#include <string>
#include <vector>

namespace ecsched {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input documents (XML plans, JSON configs). Carries the 1-based
// line of the offending construct when known (0 = unknown).
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, int line = 0)
      : Error(line > 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Structurally well-formed input that violates a contract (duplicate step
// IDs, empty feature text, bad configuration values, ...).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Instance too large for the requested solver.
class SizeError : public Error {
 public:
  using Error::Error;
};

// Dimension mismatch between a feature vector and a model.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Non-finite loss during training; remembers the epoch that diverged.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& msg, int epoch)
      : Error(msg + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

// Topological sort on a cyclic graph; carries one witness cycle.
class CycleError : public Error {
 public:
  CycleError(const std::string& msg, std::vector<int> cycle)
      : Error(msg), cycle_(std::move(cycle)) {}
  const std::vector<int>& cycle() const { return cycle_; }

 private:
  std::vector<int> cycle_;
};

// Remote execution failure (network, non-2xx, malformed body). Carries the
// number of attempts made before giving up.
class TransportError : public Error {
 public:
  TransportError(const std::string& msg, int attempts)
      : Error(msg + " (after " + std::to_string(attempts) + " attempt(s))"),
        attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class MalformedResponseError : public TransportError {
 public:
  using TransportError::TransportError;
};

// Final aggregation requested on a trace with unfinished nodes.
class AggregationError : public Error {
 public:
  AggregationError(const std::string& msg, std::vector<int> missing)
      : Error(msg), missing_(std::move(missing)) {}
  const std::vector<int>& missing() const { return missing_; }

 private:
  std::vector<int> missing_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace ecsched

#endif  // ECSCHED_ERRORS_HPP
