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

#include "batchloop/common.h"

#include <atomic>
#include <cstdio>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>

namespace batchloop {
namespace {

std::atomic<int> g_log_level{static_cast<int>(LogLevel::kWarning)};
std::mutex g_log_mutex;

void Emit(std::string_view tag, std::string_view message) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  std::cerr << "[batchloop " << tag << "] " << message << '\n';
}

}  // namespace

double Rng::Normal(double mean, double variance) {
  if (variance <= 0.0) return mean;
  return mean + std::sqrt(variance) * normal_(engine_);
}

double Rng::Uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(engine_);
}

std::string Rng::Serialize() const {
  std::ostringstream out;
  out << engine_ << ' ' << normal_;
  return out.str();
}

void Rng::Deserialize(const std::string& state) {
  std::istringstream in(state);
  in >> engine_ >> normal_;
  if (!in) throw Error("corrupt RNG state");
}

std::string FormatDouble(double value) {
  char buffer[32];
  std::snprintf(buffer, sizeof(buffer), "%.17g", value);
  return buffer;
}

std::uint64_t DeriveSeed(std::uint64_t master, std::uint64_t stream) {
  // splitmix64 finalizer over the combined words
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void SetLogLevel(LogLevel level) { g_log_level = static_cast<int>(level); }

LogLevel GetLogLevel() { return static_cast<LogLevel>(g_log_level.load()); }

void LogWarning(std::string_view message) {
  if (g_log_level.load() >= static_cast<int>(LogLevel::kWarning)) {
    Emit("warning", message);
  }
}

void LogInfo(std::string_view message) {
  if (g_log_level.load() >= static_cast<int>(LogLevel::kInfo)) {
    Emit("info", message);
  }
}

}  // namespace batchloop
