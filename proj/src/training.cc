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

#include "batchloop/training.h"

#include <algorithm>
#include <cmath>
#include <utility>

namespace batchloop {
namespace {

Eigen::VectorXd AgentState(const ReactorState& estimate, double last_action,
                           const AgentStateConfig& cfg) {
  Eigen::VectorXd s(cfg.dim());
  s.head(kStateDim) = estimate;
  if (cfg.append_last_action) s[kStateDim] = last_action;
  return s;
}

// Allocates the per-step arrays of a record.
BatchRecord StartRecord(int batch, const std::string& phase, int n_steps) {
  BatchRecord r;
  r.batch = batch;
  r.phase = phase;
  r.estimated_states = Eigen::MatrixXd::Zero(n_steps + 1, kStateDim);
  r.agent_actions = Eigen::VectorXd::Zero(n_steps);
  r.ilc_actions = Eigen::VectorXd::Zero(n_steps);
  r.applied = Eigen::VectorXd::Zero(n_steps);
  r.theta = Eigen::VectorXd::Zero(n_steps);
  r.rewards = Eigen::VectorXd::Zero(n_steps);
  return r;
}

void FinishRecord(BatchRecord& r, const BatchTrace& trace,
                  const Eigen::MatrixXd& nominal_x) {
  r.states = trace.states;
  r.observations = trace.observations;
  r.total_reward = r.rewards.sum();
  r.mse = EvaluateMse(trace.states, nominal_x);
  r.terminal_cb = trace.states(trace.states.rows() - 1, kCb);
  r.mean_theta = r.theta.mean();
  r.mean_imitation_gap = (r.agent_actions - r.ilc_actions).cwiseAbs().mean();
}

// Applies `flow` for one step of both process and informer.
void StepProcessAndInformer(BatchProcess& process, HierarchicalIlc& informer,
                            double flow) {
  const Eigen::Vector2d z = process.Step(flow);
  if (process.step_index() == process.n_steps()) {
    const Eigen::Vector2d y = process.EndBatch();
    informer.Advance(flow, z, y);
  } else {
    informer.Advance(flow, z);
  }
}

std::string Context(const std::string& phase, int episode, int step) {
  return phase + " episode " + std::to_string(episode) + ", step " +
         std::to_string(step) + ": ";
}

// Re-raises library errors with episode and step context, keeping the type
// family used for exit codes.
[[noreturn]] void RethrowWithContext(const std::string& context) {
  try {
    throw;
  } catch (const ConfigError& e) {
    throw ConfigError(e.path(), context + e.what());
  } catch (const NumericalError& e) {
    throw NumericalError(context + e.what());
  } catch (const IoError& e) {
    throw IoError(context + e.what());
  } catch (const Error& e) {
    throw Error(context + e.what());
  }
}

}  // namespace

void RewardConfig::Validate() const {
  if (values.size() != thresholds.size() + 1) {
    throw ConfigError("reward.values",
                      "needs exactly one more entry than thresholds");
  }
  for (std::size_t i = 0; i < thresholds.size(); ++i) {
    if (!(thresholds[i] > 0.0) ||
        (i > 0 && !(thresholds[i] > thresholds[i - 1]))) {
      throw ConfigError("reward.thresholds",
                        "must be positive and strictly increasing");
    }
  }
  if (ref_state < 0 || ref_state >= kStateDim) {
    throw ConfigError("reward.ref_state", "not a state index");
  }
}

void FusionConfig::Validate() const {
  if (total_executions < 1) {
    throw ConfigError("fusion.total_executions", "must be >= 1");
  }
  if (!(rate > 0.0)) throw ConfigError("fusion.rate", "must be positive");
}

std::string ToString(FusionIndexMode mode) {
  return mode == FusionIndexMode::kTime ? "time" : "episode";
}

double DiscreteReward(double abs_error, const RewardConfig& cfg) {
  for (std::size_t i = 0; i < cfg.thresholds.size(); ++i) {
    if (abs_error < cfg.thresholds[i]) return cfg.values[i];
  }
  return cfg.values.back();
}

double ImitationReward(double action, double u_ilc) {
  return -std::abs(u_ilc - action);
}

double StepReward(double action, double u_ilc, double x_est, double x_ref,
                  const RewardConfig& cfg) {
  const double continuous = -cfg.alpha * std::abs(u_ilc - action);
  const double discrete =
      cfg.beta * DiscreteReward(std::abs(x_est - x_ref), cfg);
  return continuous + discrete;
}

double FusionWeight(double action, double u_ilc, double counter,
                    const FusionConfig& cfg) {
  const double k = cfg.total_executions;
  const double c = std::clamp(counter, 0.0, k);
  const double theta =
      (1.0 - std::exp(-cfg.rate * std::abs(action - u_ilc))) * (k - c) / k;
  return std::clamp(theta, 0.0, 1.0);
}

double FuseAction(double action, double u_ilc, double theta) {
  return std::clamp(theta * u_ilc + (1.0 - theta) * action, kFlowMin,
                    kFlowMax);
}

double EvaluateMse(const Eigen::MatrixXd& states,
                   const Eigen::MatrixXd& nominal_x) {
  if (states.rows() != nominal_x.rows() || states.rows() < 2 ||
      states.cols() <= kTemp || nominal_x.cols() <= kTemp) {
    throw Error("trajectory lengths do not match the nominal");
  }
  const Eigen::Index n = states.rows() - 1;
  const Eigen::VectorXd e =
      states.col(kTemp).tail(n) - nominal_x.col(kTemp).tail(n);
  return e.squaredNorm() / static_cast<double>(n);
}

Json BatchRecordToJson(const BatchRecord& r) {
  Json j{{"batch", r.batch},
         {"phase", r.phase},
         {"total_reward", r.total_reward},
         {"mse", r.mse},
         {"terminal_C_B", r.terminal_cb},
         {"mean_theta", r.mean_theta},
         {"mean_imitation_gap", r.mean_imitation_gap},
         {"states", MatrixToJson(r.states)},
         {"estimated_states", MatrixToJson(r.estimated_states)},
         {"observations", MatrixToJson(r.observations)},
         {"agent_actions", VectorToJson(r.agent_actions)},
         {"ilc_actions", VectorToJson(r.ilc_actions)},
         {"applied", VectorToJson(r.applied)},
         {"theta", VectorToJson(r.theta)},
         {"rewards", VectorToJson(r.rewards)}};
  if (r.informer) j["kalman"] = InformerSummaryToJson(*r.informer);
  if (r.update) {
    j["ppo_update"] = {{"transitions", r.update->transitions},
                       {"minibatches", r.update->minibatches},
                       {"mean_ratio", r.update->mean_ratio},
                       {"clip_fraction", r.update->clip_fraction},
                       {"policy_loss", r.update->policy_loss},
                       {"value_loss", r.update->value_loss},
                       {"entropy", r.update->entropy}};
  }
  return j;
}

HierarchicalIlc IlcSetup::MakeInformer() const {
  return HierarchicalIlc(model, covariances, objective, config);
}

IlcSetup MakeIlcSetup(const NominalTrajectory& nominal,
                      const ReactorParams& params, const BatchTimeGrid& grid,
                      const NoiseConfig& noise, const RtoConfig& rto,
                      const KfIlcConfig& kf) {
  IlcSetup setup;
  setup.model =
      BuildLifted(Linearize(nominal.x_nom, nominal.u_nom, grid, params));
  setup.covariances = NoiseCovariances::FromNoiseConfig(
      noise, kDisturbanceDim, kObservationDim, kQualityDim);
  setup.objective = IlcObjective::ForReactor(setup.model, nominal.x_nom, rto);
  setup.config = kf;
  return setup;
}

std::vector<BatchRecord> RunIlcCampaign(HierarchicalIlc& informer,
                                        BatchProcess& process,
                                        int n_batches) {
  const Eigen::MatrixXd& nominal_x = informer.model().ltv.nominal_x;
  const int n = process.n_steps();
  std::vector<BatchRecord> records;
  for (int b = 1; b <= n_batches; ++b) {
    BatchRecord r = StartRecord(b, "ilc", n);
    process.BeginBatch();
    informer.StartBatch();
    r.estimated_states.row(0) = informer.EstimatedState().transpose();
    for (int t = 0; t < n; ++t) {
      try {
        const double u = informer.ComputeAction();
        r.ilc_actions[t] = u;
        r.agent_actions[t] = u;
        r.applied[t] = u;
        r.theta[t] = 1.0;
        StepProcessAndInformer(process, informer, u);
      } catch (...) {
        RethrowWithContext(Context("ILC", b, t));
      }
      r.estimated_states.row(t + 1) = informer.EstimatedState().transpose();
    }
    r.informer = informer.FinishBatch();
    FinishRecord(r, process.trace(), nominal_x);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<BatchRecord> PretrainOffline(PpoAgent& agent,
                                         HierarchicalIlc& informer,
                                         LtvProcess& surrogate,
                                         int n_episodes,
                                         const AgentStateConfig& state_cfg,
                                         const EpisodeHook& hook) {
  if (agent.state_dim() != state_cfg.dim()) {
    throw ConfigError("agent", "state dimension does not match the agent");
  }
  const Eigen::MatrixXd& nominal_x = informer.model().ltv.nominal_x;
  const int n = surrogate.n_steps();
  std::vector<BatchRecord> records;
  for (int k = 1; k <= n_episodes; ++k) {
    BatchRecord r = StartRecord(k, "pretrain", n);
    surrogate.BeginBatch();
    informer.StartBatch();
    double last_action = 0.0;
    for (int t = 0; t < n; ++t) {
      const ReactorState estimate = informer.EstimatedState();
      r.estimated_states.row(t) = estimate.transpose();
      try {
        const double u_ilc = informer.ComputeAction();
        const ActResult act =
            agent.Act(AgentState(estimate, last_action, state_cfg));
        // The agent's action only scores the imitation; u_ilc drives the
        // surrogate.
        const double reward = ImitationReward(act.action, u_ilc);
        agent.Store({act.state, act.sample, act.log_prob, reward, act.value,
                     false});
        r.ilc_actions[t] = u_ilc;
        r.agent_actions[t] = act.action;
        r.applied[t] = u_ilc;
        r.theta[t] = 1.0;
        r.rewards[t] = reward;
        last_action = act.action;
        StepProcessAndInformer(surrogate, informer, u_ilc);
      } catch (...) {
        RethrowWithContext(Context("pretrain", k, t));
      }
    }
    r.estimated_states.row(n) = informer.EstimatedState().transpose();
    r.informer = informer.FinishBatch();
    r.update = agent.EndEpisode();
    FinishRecord(r, surrogate.trace(), nominal_x);
    if (hook) hook(r, agent);
    records.push_back(std::move(r));
  }
  return records;
}

std::vector<BatchRecord> TrainOnline(PpoAgent& agent,
                                     HierarchicalIlc& informer,
                                     ReactorPlant& plant,
                                     const RewardConfig& reward,
                                     const FusionConfig& fusion,
                                     const OnlineOptions& options,
                                     const AgentStateConfig& state_cfg,
                                     const EpisodeHook& hook) {
  reward.Validate();
  fusion.Validate();
  if (agent.state_dim() != state_cfg.dim()) {
    throw ConfigError("agent", "state dimension does not match the agent");
  }
  if (options.forced_theta &&
      !(*options.forced_theta >= 0.0 && *options.forced_theta <= 1.0)) {
    throw ConfigError("online.forced_theta", "must lie in [0, 1]");
  }
  const Eigen::MatrixXd& nominal_x = informer.model().ltv.nominal_x;
  const int n = plant.n_steps();
  std::vector<BatchRecord> records;
  int quiet_episodes = 0;
  for (int k = 1; k <= options.n_episodes; ++k) {
    BatchRecord r = StartRecord(k, "online", n);
    plant.BeginBatch();
    informer.StartBatch();
    double last_action = 0.0;
    for (int t = 0; t < n; ++t) {
      const ReactorState estimate = informer.EstimatedState();
      r.estimated_states.row(t) = estimate.transpose();
      try {
        const double u_ilc = informer.ComputeAction();
        const ActResult act =
            agent.Act(AgentState(estimate, last_action, state_cfg));
        const double counter =
            fusion.index_mode == FusionIndexMode::kEpisode ? k : t;
        const double theta =
            options.forced_theta
                ? *options.forced_theta
                : FusionWeight(act.action, u_ilc, counter, fusion);
        const double u = FuseAction(act.action, u_ilc, theta);
        StepProcessAndInformer(plant, informer, u);
        const ReactorState next = informer.EstimatedState();
        const double step_reward =
            StepReward(act.action, u_ilc, next[reward.ref_state],
                       nominal_x(t + 1, reward.ref_state), reward);
        agent.Store({act.state, act.sample, act.log_prob, step_reward,
                     act.value, false});
        r.ilc_actions[t] = u_ilc;
        r.agent_actions[t] = act.action;
        r.applied[t] = u;
        r.theta[t] = theta;
        r.rewards[t] = step_reward;
        last_action = act.action;
      } catch (...) {
        RethrowWithContext(Context("online", k, t));
      }
    }
    r.estimated_states.row(n) = informer.EstimatedState().transpose();
    r.informer = informer.FinishBatch();
    r.update = agent.EndEpisode();
    FinishRecord(r, plant.trace(), nominal_x);
    if (hook) hook(r, agent);
    const double mean_theta = r.mean_theta;
    records.push_back(std::move(r));
    quiet_episodes =
        mean_theta < options.early_stop_theta ? quiet_episodes + 1 : 0;
    if (options.early_stop && quiet_episodes >= options.early_stop_window) {
      LogInfo("online training stopped early after episode " +
              std::to_string(k));
      break;
    }
  }
  return records;
}

std::vector<BatchRecord> TrainBaselinePpo(PpoAgent& agent, ReactorPlant& plant,
                                          const Eigen::MatrixXd& nominal_x,
                                          const RewardConfig& reward,
                                          int n_episodes,
                                          const EpisodeHook& hook) {
  reward.Validate();
  if (agent.state_dim() != kObservationDim) {
    throw ConfigError("agent", "the baseline observes (T, T_J) only");
  }
  if (reward.ref_state != kTemp && reward.ref_state != kJacketTemp) {
    throw ConfigError("reward.ref_state",
                      "the baseline can only track a measured temperature");
  }
  const int n = plant.n_steps();
  std::vector<BatchRecord> records;
  for (int k = 1; k <= n_episodes; ++k) {
    BatchRecord r = StartRecord(k, "baseline", n);
    const ReactorState x0 = plant.BeginBatch();
    Eigen::VectorXd obs(kObservationDim);
    obs << x0[kTemp], x0[kJacketTemp];
    for (int t = 0; t < n; ++t) {
      try {
        const ActResult act = agent.Act(obs);
        const Eigen::Vector2d z = plant.Step(act.action);
        if (plant.step_index() == n) plant.EndBatch();
        // Observations are (T, T_J); reward tracks the measured T.
        const double measured = reward.ref_state == kJacketTemp ? z[1] : z[0];
        const double step_reward =
            reward.beta *
            DiscreteReward(std::abs(measured - nominal_x(t + 1, reward.ref_state)),
                           reward);
        agent.Store({act.state, act.sample, act.log_prob, step_reward,
                     act.value, false});
        r.agent_actions[t] = act.action;
        r.applied[t] = act.action;
        r.rewards[t] = step_reward;
        obs = z;
      } catch (...) {
        RethrowWithContext(Context("baseline", k, t));
      }
    }
    r.ilc_actions = r.agent_actions;
    r.estimated_states.resize(0, kStateDim);
    r.update = agent.EndEpisode();
    FinishRecord(r, plant.trace(), nominal_x);
    if (hook) hook(r, agent);
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace batchloop
