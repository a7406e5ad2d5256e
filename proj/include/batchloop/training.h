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

#ifndef BATCHLOOP_TRAINING_H_
#define BATCHLOOP_TRAINING_H_

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/json_util.h"
#include "batchloop/kf_ilc.h"
#include "batchloop/lifted_model.h"
#include "batchloop/ppo_agent.h"
#include "batchloop/reactor.h"
#include "batchloop/rto.h"

namespace batchloop {

// Step reward r = -alpha |u_ilc - a| + beta table(|x_est - x_ref|).
struct RewardConfig {
  double alpha = 1.0;
  double beta = 1.0;
  // Band i covers errors below thresholds[i]; the last value covers the rest.
  std::vector<double> thresholds{0.05, 0.1, 0.5, 1.0, 2.0, 3.5, 5.0};
  std::vector<double> values{300, 100, 50, 0, -5, -20, -50, -100};
  int ref_state = kTemp;  // tracked state index

  void Validate() const;
  bool operator==(const RewardConfig&) const = default;
};

enum class FusionIndexMode { kEpisode, kTime };

struct FusionConfig {
  int total_executions = 1000;  // K
  double rate = 1.1;
  FusionIndexMode index_mode = FusionIndexMode::kEpisode;

  void Validate() const;
  bool operator==(const FusionConfig&) const = default;
};

std::string ToString(FusionIndexMode mode);

// Banded lookup of an absolute tracking error.
double DiscreteReward(double abs_error, const RewardConfig& cfg);
double StepReward(double action, double u_ilc, double x_est, double x_ref,
                  const RewardConfig& cfg);
double ImitationReward(double action, double u_ilc);

// theta = (1 - exp(-rate |a - u|)) (K - counter) / K, counter clamped to
// [0, K].
double FusionWeight(double action, double u_ilc, double counter,
                    const FusionConfig& cfg);
// theta u_ilc + (1 - theta) a, clipped to the flow box.
double FuseAction(double action, double u_ilc, double theta);

// Mean over instants 1..T of (T - T_nom)^2 for (T+1) x n_x trajectories.
double EvaluateMse(const Eigen::MatrixXd& states,
                   const Eigen::MatrixXd& nominal_x);

struct BatchRecord {
  int batch = 0;
  std::string phase;
  Eigen::MatrixXd states;            // true (or simulated) states, T+1 rows
  Eigen::MatrixXd estimated_states;  // informer estimate, T+1 rows
  Eigen::MatrixXd observations;      // T x n_z
  Eigen::VectorXd agent_actions;     // clipped agent actions
  Eigen::VectorXd ilc_actions;
  Eigen::VectorXd applied;
  Eigen::VectorXd theta;
  Eigen::VectorXd rewards;
  double total_reward = 0.0;
  double mse = 0.0;
  double terminal_cb = 0.0;
  double mean_theta = 0.0;
  double mean_imitation_gap = 0.0;
  std::optional<InformerBatchSummary> informer;
  std::optional<PpoUpdateDiagnostics> update;
};

Json BatchRecordToJson(const BatchRecord& record);

// Everything required to instantiate a hierarchical informer.
struct IlcSetup {
  LiftedBatchModel model;
  NoiseCovariances covariances;
  IlcObjective objective;
  KfIlcConfig config;

  HierarchicalIlc MakeInformer() const;
  const Eigen::MatrixXd& nominal_x() const { return model.ltv.nominal_x; }
};

IlcSetup MakeIlcSetup(const NominalTrajectory& nominal,
                      const ReactorParams& params, const BatchTimeGrid& grid,
                      const NoiseConfig& noise, const RtoConfig& rto,
                      const KfIlcConfig& kf);

struct AgentStateConfig {
  bool append_last_action = false;
  int dim() const { return kStateDim + (append_last_action ? 1 : 0); }
  bool operator==(const AgentStateConfig&) const = default;
};

// Called after every episode; may write checkpoints.
using EpisodeHook = std::function<void(const BatchRecord&, PpoAgent&)>;

// Pure informer control of a process for `n_batches` batches.
std::vector<BatchRecord> RunIlcCampaign(HierarchicalIlc& informer,
                                        BatchProcess& process, int n_batches);

// Imitation pre-training against the informer running on the linear
// surrogate. The process type rules out the nonlinear plant.
std::vector<BatchRecord> PretrainOffline(PpoAgent& agent,
                                         HierarchicalIlc& informer,
                                         LtvProcess& surrogate,
                                         int n_episodes,
                                         const AgentStateConfig& state_cfg,
                                         const EpisodeHook& hook = nullptr);

struct OnlineOptions {
  int n_episodes = 1000;
  // Stop once the episode-mean theta stays below the threshold this long.
  bool early_stop = true;
  double early_stop_theta = 0.01;
  int early_stop_window = 20;
  std::optional<double> forced_theta;
};

std::vector<BatchRecord> TrainOnline(PpoAgent& agent,
                                     HierarchicalIlc& informer,
                                     ReactorPlant& plant,
                                     const RewardConfig& reward,
                                     const FusionConfig& fusion,
                                     const OnlineOptions& options,
                                     const AgentStateConfig& state_cfg,
                                     const EpisodeHook& hook = nullptr);

// Plain PPO on the plant: noisy observations as state, discrete reward on
// the measured tracking error, no informer.
std::vector<BatchRecord> TrainBaselinePpo(PpoAgent& agent, ReactorPlant& plant,
                                          const Eigen::MatrixXd& nominal_x,
                                          const RewardConfig& reward,
                                          int n_episodes,
                                          const EpisodeHook& hook = nullptr);

}  // namespace batchloop

#endif  // BATCHLOOP_TRAINING_H_
