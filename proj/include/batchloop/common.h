// Copyright 2026 The batchloop Authors
//
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

#ifndef BATCHLOOP_COMMON_H_
#define BATCHLOOP_COMMON_H_

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace batchloop {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or out-of-range configuration. `path` names the offending field.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& message)
      : Error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Something numerical went wrong during a run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class DomainError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IntegrationDivergedError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class LinearizationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EstimationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class SolverError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

// A control input violates the physical flow limits.
class ConstraintError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Seeded pseudo-random stream. Every run owns its own instances; the state
// round-trips through Serialize/Deserialize so checkpoints reload bit-exact.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  // Draw from N(mean, variance). Zero variance returns `mean` without
  // consuming the stream.
  double Normal(double mean, double variance);
  double StandardNormal() { return normal_(engine_); }
  double Uniform(double lo, double hi);
  std::uint64_t NextU64() { return engine_(); }
  std::mt19937_64& engine() { return engine_; }

  std::string Serialize() const;
  void Deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

// Shortest-round-trip-safe text form of a double (%.17g).
std::string FormatDouble(double value);

// Derives an independent sub-seed from a master seed and a stream label.
std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream);

enum class LogLevel { kQuiet = 0, kWarning = 1, kInfo = 2 };

// Process-wide verbosity; only affects stderr chatter, never results.
void SetLogLevel(LogLevel level);
LogLevel GetLogLevel();
void LogWarning(std::string_view message);
void LogInfo(std::string_view message);

}  // namespace batchloop

#endif  // BATCHLOOP_COMMON_H_
