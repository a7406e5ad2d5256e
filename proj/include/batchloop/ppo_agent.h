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

#ifndef BATCHLOOP_PPO_AGENT_H_
#define BATCHLOOP_PPO_AGENT_H_

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/common.h"
#include "batchloop/json_util.h"
#include "batchloop/mlp.h"

namespace batchloop {

enum class UpdateMode { kPerEpisode, kHorizon };

std::string ToString(UpdateMode mode);
UpdateMode UpdateModeFromString(const std::string& name);

struct PpoHyperparams {
  double actor_lr = 5e-5;
  double critic_lr = 1e-4;
  int epochs = 10;
  double gamma = 0.99;
  double gae_lambda = 0.95;
  double entropy_weight = 0.02;
  int minibatch = 64;
  int horizon = 2048;
  double clip_eps = 0.2;
  int hidden_units = 100;
  double log_std_init = 0.0;
  double min_std = 1e-3;
  double max_std = 5.0;
  double action_low = 0.0;
  double action_high = 10.0;
  bool normalize_states = true;
  bool normalize_advantages = true;
  UpdateMode update_mode = UpdateMode::kPerEpisode;

  void Validate() const;
  bool operator==(const PpoHyperparams&) const = default;
};

Json PpoHyperparamsToJson(const PpoHyperparams& hp);
// Overlays the keys present in `j` onto `hp`; rejects unknown keys.
void PpoHyperparamsFromJson(const Json& j, const std::string& path,
                            PpoHyperparams* hp);

struct Transition {
  Eigen::VectorXd state;  // as fed to the networks (normalized)
  double action = 0.0;    // unclipped Gaussian sample
  double log_prob_old = 0.0;
  double reward = 0.0;
  double value_old = 0.0;
  bool done = false;
};

struct PolicyOutput {
  double mean = 0.0;
  double std = 1.0;
  double pre_activation = 0.0;  // actor head output before the tanh
};

// Gaussian log-density of `action` under N(mean, std^2).
double GaussianLogProb(double action, double mean, double std);
// Entropy of N(., std^2).
double GaussianEntropy(double std);

// min(ratio A, g(eps, A)) with g = (1 + eps) A for A >= 0, (1 - eps) A
// otherwise.
double ClippedSurrogate(double ratio, double advantage, double clip_eps);

struct AdvantageEstimate {
  Eigen::VectorXd advantages;  // raw GAE
  Eigen::VectorXd returns;     // advantages + value_old
};

// GAE(gamma, lambda) over consecutive transitions; `done` ends an episode
// with no bootstrap. A trailing unfinished segment bootstraps from
// `last_value`.
AdvantageEstimate ComputeAdvantages(const std::vector<Transition>& traj,
                                    double gamma, double lambda,
                                    double last_value = 0.0);

// Zero mean, unit variance; constant inputs map to zero.
Eigen::VectorXd NormalizeAdvantages(const Eigen::VectorXd& advantages);

struct PpoBatch {
  Eigen::MatrixXd states;  // n_state x N
  Eigen::VectorXd actions;
  Eigen::VectorXd log_prob_old;
  Eigen::VectorXd advantages;
  Eigen::VectorXd returns;
};

struct PpoLoss {
  double policy_loss = 0.0;  // -mean surrogate
  double entropy = 0.0;
  double value_loss = 0.0;   // 0.5 mean squared error
  double actor_total = 0.0;  // policy_loss - entropy_weight entropy
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
};

struct PpoGradients {
  Eigen::VectorXd actor;  // actor network parameters
  double log_std = 0.0;
  Eigen::VectorXd critic;
  PpoLoss loss;
};

PpoGradients PpoLossAndGradient(const Mlp& actor, double log_std,
                                const Mlp& critic, const PpoBatch& batch,
                                const PpoHyperparams& hp);

// Welford running mean and variance of raw states.
class RunningNormalizer {
 public:
  RunningNormalizer() = default;
  explicit RunningNormalizer(int dim);

  void Update(const Eigen::VectorXd& x);
  Eigen::VectorXd Normalize(const Eigen::VectorXd& x) const;
  long count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }
  Eigen::VectorXd Variance() const;

  Json ToJson() const;
  static RunningNormalizer FromJson(const Json& j);

 private:
  long count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct PpoUpdateDiagnostics {
  int transitions = 0;
  int minibatches = 0;
  double mean_ratio = 0.0;
  double clip_fraction = 0.0;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
};

struct ActResult {
  Eigen::VectorXd state;  // normalized network input
  double sample = 0.0;    // unclipped
  double action = 0.0;    // clipped to the action box
  double log_prob = 0.0;
  double value = 0.0;
  double mean = 0.0;
  double std = 0.0;
};

class PpoAgent {
 public:
  PpoAgent(int state_dim, const PpoHyperparams& hp, std::uint64_t seed);

  // Samples an action for a raw state. With `explore` false the action is
  // the policy mean. The normalizer only learns from explored states.
  ActResult Act(const Eigen::VectorXd& raw_state, bool explore = true);

  PolicyOutput Policy(const Eigen::VectorXd& state) const;
  double Value(const Eigen::VectorXd& state) const;

  void Store(const Transition& transition);
  // Closes an episode; runs an update when the configured trigger fires.
  std::optional<PpoUpdateDiagnostics> EndEpisode();
  PpoUpdateDiagnostics Update(const std::vector<Transition>& transitions);

  Json ToJson() const;
  static PpoAgent FromJson(const Json& j);

  int state_dim() const { return state_dim_; }
  const PpoHyperparams& hyperparams() const { return hp_; }
  Mlp& actor() { return actor_; }
  const Mlp& actor() const { return actor_; }
  Mlp& critic() { return critic_; }
  const Mlp& critic() const { return critic_; }
  double log_std() const { return log_std_; }
  void set_log_std(double v) { log_std_ = v; }
  const RunningNormalizer& normalizer() const { return normalizer_; }
  const std::vector<Transition>& buffer() const { return buffer_; }
  Rng& rng() { return rng_; }

 private:
  PpoAgent() = default;
  double EffectiveStd() const;

  int state_dim_ = 0;
  PpoHyperparams hp_;
  Mlp actor_;
  Mlp critic_;
  double log_std_ = 0.0;
  Adam actor_opt_;  // actor parameters followed by log_std
  Adam critic_opt_;
  RunningNormalizer normalizer_;
  std::vector<Transition> buffer_;
  Rng rng_;
};

}  // namespace batchloop

#endif  // BATCHLOOP_PPO_AGENT_H_
