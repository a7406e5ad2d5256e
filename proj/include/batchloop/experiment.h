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

#ifndef BATCHLOOP_EXPERIMENT_H_
#define BATCHLOOP_EXPERIMENT_H_

#include <cstdint>
#include <string>
#include <vector>

#include "batchloop/json_util.h"
#include "batchloop/kf_ilc.h"
#include "batchloop/ppo_agent.h"
#include "batchloop/reactor.h"
#include "batchloop/rto.h"
#include "batchloop/training.h"

namespace batchloop {

inline constexpr int kConfigSchemaVersion = 1;

enum class ExperimentKind { kRto, kIlc, kPretrain, kOnline, kBaseline, kCompare };

std::string ToString(ExperimentKind kind);
ExperimentKind ExperimentKindFromString(const std::string& name);

struct ExperimentConfig {
  int schema_version = kConfigSchemaVersion;
  ExperimentKind kind = ExperimentKind::kRto;
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir;          // empty: resolved by the caller
  int checkpoint_every = 100;      // episodes between policy snapshots
  std::string lifted_model_cache;  // optional JSON cache path

  ReactorParams reactor;
  BatchTimeGrid grid;
  NoiseConfig noise;  // seed is derived per run
  RtoConfig rto;      // volume follows reactor.volume
  KfIlcConfig kf_ilc;
  int ilc_batches = 30;
  PpoHyperparams ppo;
  AgentStateConfig agent_state;
  RewardConfig reward;
  FusionConfig fusion;
  int pretrain_episodes = 500;
  OnlineOptions online;
  int baseline_episodes = 1000;
  int compare_episodes = 200;

  // Throws ConfigError naming the offending field.
  void Validate() const;
};

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b);

Json ConfigToJson(const ExperimentConfig& cfg);
// Overlays `j` on the defaults, rejects unknown keys, validates.
ExperimentConfig ConfigFromJson(const Json& j);
// Parses UTF-8 JSON text; syntax errors report line and column.
ExperimentConfig ValidateConfig(const std::string& raw_text);

// Git-style blob SHA-1 of the canonical config text.
std::string ConfigSha1(const ExperimentConfig& cfg);
std::string GitBlobSha1(const std::string& content);

struct RunManifest {
  std::string run_dir;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or "failed"
  std::string error;
  Json summary;
  std::vector<std::string> artifacts;  // relative to run_dir, sorted
};

// Runs one seed into `run_dir` and writes manifest.json last. Errors are
// recorded in the manifest and rethrown.
RunManifest RunExperimentSeed(const ExperimentConfig& cfg, std::uint64_t seed,
                              const std::string& run_dir);

// Every seed of cfg.seeds; with several seeds each run gets
// <output_dir>/seed_<n>.
std::vector<RunManifest> RunExperiment(const ExperimentConfig& cfg);

// Independent streams derived from a run seed.
enum SeedStream : std::uint64_t {
  kSurrogateNoiseStream = 1,
  kAgentStream = 2,
  kPlantNoiseStream = 3,
};

void WriteLearningCurveCsv(const std::string& path,
                           const std::vector<BatchRecord>& records);

}  // namespace batchloop

#endif  // BATCHLOOP_EXPERIMENT_H_
