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

#include "batchloop/ppo_agent.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <utility>

namespace batchloop {
namespace {

constexpr double kMeanScale = 5.0;

Json TransitionToJson(const Transition& t) {
  return Json{{"state", VectorToJson(t.state)}, {"action", t.action},
              {"log_prob_old", t.log_prob_old}, {"reward", t.reward},
              {"value_old", t.value_old},       {"done", t.done}};
}

Transition TransitionFromJson(const Json& j) {
  Transition t;
  t.state = VectorFromJson(j.at("state"));
  t.action = j.at("action").get<double>();
  t.log_prob_old = j.at("log_prob_old").get<double>();
  t.reward = j.at("reward").get<double>();
  t.value_old = j.at("value_old").get<double>();
  t.done = j.at("done").get<bool>();
  return t;
}

}  // namespace

std::string ToString(UpdateMode mode) {
  return mode == UpdateMode::kHorizon ? "horizon" : "per_episode";
}

UpdateMode UpdateModeFromString(const std::string& name) {
  if (name == "per_episode") return UpdateMode::kPerEpisode;
  if (name == "horizon") return UpdateMode::kHorizon;
  throw ConfigError("update_mode", "expected \"per_episode\" or \"horizon\"");
}

void PpoHyperparams::Validate() const {
  if (!(actor_lr > 0.0)) throw ConfigError("ppo.actor_lr", "must be positive");
  if (!(critic_lr > 0.0)) throw ConfigError("ppo.critic_lr", "must be positive");
  if (epochs < 1) throw ConfigError("ppo.epochs", "must be >= 1");
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    throw ConfigError("ppo.gamma", "must lie in (0, 1]");
  }
  if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0)) {
    throw ConfigError("ppo.gae_lambda", "must lie in [0, 1]");
  }
  if (!(entropy_weight >= 0.0)) {
    throw ConfigError("ppo.entropy_weight", "must be >= 0");
  }
  if (minibatch < 1) throw ConfigError("ppo.minibatch", "must be >= 1");
  if (horizon < 1) throw ConfigError("ppo.horizon", "must be >= 1");
  if (!(clip_eps > 0.0 && clip_eps < 1.0)) {
    throw ConfigError("ppo.clip_eps", "must lie in (0, 1)");
  }
  if (hidden_units < 1) throw ConfigError("ppo.hidden_units", "must be >= 1");
  if (!(min_std > 0.0 && min_std < max_std)) {
    throw ConfigError("ppo.min_std", "need 0 < min_std < max_std");
  }
  if (!(action_low < action_high)) {
    throw ConfigError("ppo.action_low", "must be below action_high");
  }
}

Json PpoHyperparamsToJson(const PpoHyperparams& hp) {
  return Json{{"actor_lr", hp.actor_lr},
              {"critic_lr", hp.critic_lr},
              {"epochs", hp.epochs},
              {"gamma", hp.gamma},
              {"gae_lambda", hp.gae_lambda},
              {"entropy_weight", hp.entropy_weight},
              {"minibatch", hp.minibatch},
              {"horizon", hp.horizon},
              {"clip_eps", hp.clip_eps},
              {"hidden_units", hp.hidden_units},
              {"log_std_init", hp.log_std_init},
              {"min_std", hp.min_std},
              {"max_std", hp.max_std},
              {"action_low", hp.action_low},
              {"action_high", hp.action_high},
              {"normalize_states", hp.normalize_states},
              {"normalize_advantages", hp.normalize_advantages},
              {"update_mode", ToString(hp.update_mode)}};
}

void PpoHyperparamsFromJson(const Json& j, const std::string& path,
                            PpoHyperparams* hp) {
  JsonObjectReader r(j, path);
  r.Read("actor_lr", &hp->actor_lr);
  r.Read("critic_lr", &hp->critic_lr);
  r.Read("epochs", &hp->epochs);
  r.Read("gamma", &hp->gamma);
  r.Read("gae_lambda", &hp->gae_lambda);
  r.Read("entropy_weight", &hp->entropy_weight);
  r.Read("minibatch", &hp->minibatch);
  r.Read("horizon", &hp->horizon);
  r.Read("clip_eps", &hp->clip_eps);
  r.Read("hidden_units", &hp->hidden_units);
  r.Read("log_std_init", &hp->log_std_init);
  r.Read("min_std", &hp->min_std);
  r.Read("max_std", &hp->max_std);
  r.Read("action_low", &hp->action_low);
  r.Read("action_high", &hp->action_high);
  r.Read("normalize_states", &hp->normalize_states);
  r.Read("normalize_advantages", &hp->normalize_advantages);
  std::string mode = ToString(hp->update_mode);
  r.Read("update_mode", &mode);
  try {
    hp->update_mode = UpdateModeFromString(mode);
  } catch (const ConfigError& e) {
    throw ConfigError(r.ChildPath("update_mode"),
                      "expected \"per_episode\" or \"horizon\"");
  }
  r.Finish();
}

double GaussianLogProb(double action, double mean, double std) {
  const double z = (action - mean) / std;
  return -0.5 * z * z - std::log(std) - 0.5 * std::log(2.0 * std::numbers::pi);
}

double GaussianEntropy(double std) {
  return std::log(std) + 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
}

double ClippedSurrogate(double ratio, double advantage, double clip_eps) {
  const double g = advantage >= 0.0 ? (1.0 + clip_eps) * advantage
                                    : (1.0 - clip_eps) * advantage;
  return std::min(ratio * advantage, g);
}

AdvantageEstimate ComputeAdvantages(const std::vector<Transition>& traj,
                                    double gamma, double lambda,
                                    double last_value) {
  const int n = static_cast<int>(traj.size());
  AdvantageEstimate est;
  est.advantages.resize(n);
  est.returns.resize(n);
  double running = 0.0;
  double next_value = last_value;
  for (int i = n - 1; i >= 0; --i) {
    const Transition& tr = traj[i];
    if (tr.done) {
      running = 0.0;
      next_value = 0.0;
    }
    const double delta = tr.reward + gamma * next_value - tr.value_old;
    running = delta + gamma * lambda * running;
    est.advantages[i] = running;
    est.returns[i] = running + tr.value_old;
    next_value = tr.value_old;
  }
  return est;
}

Eigen::VectorXd NormalizeAdvantages(const Eigen::VectorXd& advantages) {
  if (advantages.size() == 0) return advantages;
  const double mean = advantages.mean();
  const Eigen::VectorXd centered = advantages.array() - mean;
  const double std =
      std::sqrt(centered.squaredNorm() / static_cast<double>(advantages.size()));
  if (std < 1e-12) return Eigen::VectorXd::Zero(advantages.size());
  return centered / (std + 1e-8);
}

PpoGradients PpoLossAndGradient(const Mlp& actor, double log_std,
                                const Mlp& critic, const PpoBatch& batch,
                                const PpoHyperparams& hp) {
  const Eigen::Index n = batch.actions.size();
  if (n == 0 || batch.states.cols() != n || batch.log_prob_old.size() != n ||
      batch.advantages.size() != n || batch.returns.size() != n) {
    throw Error("PPO batch fields have inconsistent lengths");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  const double lo = std::log(hp.min_std);
  const double hi = std::log(hp.max_std);
  const bool std_clamped = log_std < lo || log_std > hi;
  const double std = std::exp(std::clamp(log_std, lo, hi));

  Mlp::Cache actor_cache, critic_cache;
  const Eigen::MatrixXd head = actor.Forward(batch.states, &actor_cache);
  const Eigen::MatrixXd values = critic.Forward(batch.states, &critic_cache);

  PpoGradients out;
  Eigen::MatrixXd head_grad(1, n);
  double d_log_std = 0.0;
  double surrogate_sum = 0.0, ratio_sum = 0.0;
  int clipped = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double th = std::tanh(head(0, i));
    const double mean = kMeanScale * (th + 1.0);
    const double z = (batch.actions[i] - mean) / std;
    const double log_prob = GaussianLogProb(batch.actions[i], mean, std);
    const double ratio = std::exp(log_prob - batch.log_prob_old[i]);
    const double adv = batch.advantages[i];
    const double unclipped = ratio * adv;
    const double surrogate = ClippedSurrogate(ratio, adv, hp.clip_eps);
    surrogate_sum += surrogate;
    ratio_sum += ratio;
    // d surrogate / d log_prob; zero where the clipped branch is active.
    double d_logp = 0.0;
    if (unclipped <= surrogate) {
      d_logp = unclipped;
    } else {
      ++clipped;
    }
    const double d_mean = d_logp * z / std;
    head_grad(0, i) = -inv_n * d_mean * kMeanScale * (1.0 - th * th);
    d_log_std += -inv_n * d_logp * (z * z - 1.0);
  }
  out.loss.policy_loss = -surrogate_sum * inv_n;
  out.loss.entropy = GaussianEntropy(std);
  out.loss.actor_total =
      out.loss.policy_loss - hp.entropy_weight * out.loss.entropy;
  out.loss.mean_ratio = ratio_sum * inv_n;
  out.loss.clip_fraction = clipped * inv_n;
  d_log_std -= hp.entropy_weight;
  out.log_std = std_clamped ? 0.0 : d_log_std;
  out.actor = actor.Backward(actor_cache, head_grad);

  const Eigen::RowVectorXd residual =
      values.row(0) - batch.returns.transpose();
  out.loss.value_loss = 0.5 * residual.squaredNorm() * inv_n;
  out.critic = critic.Backward(critic_cache, residual * inv_n);
  return out;
}

RunningNormalizer::RunningNormalizer(int dim)
    : mean_(Eigen::VectorXd::Zero(dim)), m2_(Eigen::VectorXd::Zero(dim)) {}

void RunningNormalizer::Update(const Eigen::VectorXd& x) {
  if (x.size() != mean_.size()) throw Error("normalizer dimension mismatch");
  ++count_;
  const Eigen::VectorXd delta = x - mean_;
  mean_ += delta / static_cast<double>(count_);
  m2_ += delta.cwiseProduct(x - mean_);
}

Eigen::VectorXd RunningNormalizer::Variance() const {
  if (count_ < 2) return Eigen::VectorXd::Ones(mean_.size());
  return m2_ / static_cast<double>(count_);
}

Eigen::VectorXd RunningNormalizer::Normalize(const Eigen::VectorXd& x) const {
  return (x - mean_).array() / (Variance().array() + 1e-8).sqrt();
}

Json RunningNormalizer::ToJson() const {
  return Json{{"count", count_},
              {"mean", VectorToJson(mean_)},
              {"m2", VectorToJson(m2_)}};
}

RunningNormalizer RunningNormalizer::FromJson(const Json& j) {
  RunningNormalizer n;
  n.count_ = j.at("count").get<long>();
  n.mean_ = VectorFromJson(j.at("mean"));
  n.m2_ = VectorFromJson(j.at("m2"));
  return n;
}

PpoAgent::PpoAgent(int state_dim, const PpoHyperparams& hp,
                   std::uint64_t seed)
    : state_dim_(state_dim),
      hp_(hp),
      actor_({state_dim, hp.hidden_units, hp.hidden_units, 1}),
      critic_({state_dim, hp.hidden_units, hp.hidden_units, 1}),
      log_std_(hp.log_std_init),
      normalizer_(state_dim),
      rng_(seed) {
  hp_.Validate();
  actor_.InitializeFanIn(rng_);
  critic_.InitializeFanIn(rng_);
  actor_opt_ = Adam(actor_.num_params() + 1, hp_.actor_lr);
  critic_opt_ = Adam(critic_.num_params(), hp_.critic_lr);
}

double PpoAgent::EffectiveStd() const {
  return std::exp(
      std::clamp(log_std_, std::log(hp_.min_std), std::log(hp_.max_std)));
}

PolicyOutput PpoAgent::Policy(const Eigen::VectorXd& state) const {
  PolicyOutput out;
  out.pre_activation = actor_.Forward(state)(0, 0);
  out.mean = kMeanScale * (std::tanh(out.pre_activation) + 1.0);
  out.std = EffectiveStd();
  return out;
}

double PpoAgent::Value(const Eigen::VectorXd& state) const {
  return critic_.Forward(state)(0, 0);
}

ActResult PpoAgent::Act(const Eigen::VectorXd& raw_state, bool explore) {
  if (raw_state.size() != state_dim_ || !raw_state.allFinite()) {
    throw NumericalError("agent state is malformed or not finite");
  }
  ActResult r;
  if (hp_.normalize_states) {
    if (explore) normalizer_.Update(raw_state);
    r.state = normalizer_.Normalize(raw_state);
  } else {
    r.state = raw_state;
  }
  const PolicyOutput pol = Policy(r.state);
  r.mean = pol.mean;
  r.std = pol.std;
  r.sample = explore ? pol.mean + pol.std * rng_.StandardNormal() : pol.mean;
  r.action = std::clamp(r.sample, hp_.action_low, hp_.action_high);
  r.log_prob = GaussianLogProb(r.sample, pol.mean, pol.std);
  r.value = Value(r.state);
  return r;
}

void PpoAgent::Store(const Transition& transition) {
  buffer_.push_back(transition);
}

std::optional<PpoUpdateDiagnostics> PpoAgent::EndEpisode() {
  if (buffer_.empty()) return std::nullopt;
  buffer_.back().done = true;
  if (hp_.update_mode == UpdateMode::kHorizon &&
      static_cast<int>(buffer_.size()) < hp_.horizon) {
    return std::nullopt;
  }
  std::vector<Transition> batch = std::move(buffer_);
  buffer_.clear();
  return Update(batch);
}

PpoUpdateDiagnostics PpoAgent::Update(
    const std::vector<Transition>& transitions) {
  const int n = static_cast<int>(transitions.size());
  if (n == 0) throw Error("PPO update needs at least one transition");
  AdvantageEstimate est =
      ComputeAdvantages(transitions, hp_.gamma, hp_.gae_lambda);
  const Eigen::VectorXd advantages = hp_.normalize_advantages
                                         ? NormalizeAdvantages(est.advantages)
                                         : est.advantages;

  // Snapshot so a failed update leaves the agent untouched.
  const Mlp actor_before = actor_, critic_before = critic_;
  const double log_std_before = log_std_;
  const Adam actor_opt_before = actor_opt_, critic_opt_before = critic_opt_;

  std::vector<int> order(n);
  PpoUpdateDiagnostics diag;
  diag.transitions = n;
  const int mb = std::min(hp_.minibatch, n);
  for (int epoch = 0; epoch < hp_.epochs; ++epoch) {
    for (int i = 0; i < n; ++i) order[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(rng_.NextU64() % static_cast<std::uint64_t>(i + 1));
      std::swap(order[i], order[j]);
    }
    for (int start = 0; start < n; start += mb) {
      const int size = std::min(mb, n - start);
      PpoBatch batch;
      batch.states.resize(state_dim_, size);
      batch.actions.resize(size);
      batch.log_prob_old.resize(size);
      batch.advantages.resize(size);
      batch.returns.resize(size);
      for (int k = 0; k < size; ++k) {
        const int idx = order[start + k];
        batch.states.col(k) = transitions[idx].state;
        batch.actions[k] = transitions[idx].action;
        batch.log_prob_old[k] = transitions[idx].log_prob_old;
        batch.advantages[k] = advantages[idx];
        batch.returns[k] = est.returns[idx];
      }
      PpoGradients grads;
      bool finite = true;
      try {
        grads = PpoLossAndGradient(actor_, log_std_, critic_, batch, hp_);
        finite = std::isfinite(grads.loss.actor_total) &&
                 std::isfinite(grads.loss.value_loss) &&
                 grads.actor.allFinite() && grads.critic.allFinite() &&
                 std::isfinite(grads.log_std);
      } catch (const NumericalError&) {
        finite = false;
      }
      if (!finite) {
        actor_ = actor_before;
        critic_ = critic_before;
        log_std_ = log_std_before;
        actor_opt_ = actor_opt_before;
        critic_opt_ = critic_opt_before;
        throw NumericalError("non-finite PPO loss in epoch " +
                             std::to_string(epoch) + ", minibatch " +
                             std::to_string(diag.minibatches));
      }
      Eigen::VectorXd actor_params(actor_.num_params() + 1);
      actor_params << actor_.params(), log_std_;
      Eigen::VectorXd actor_grad(actor_.num_params() + 1);
      actor_grad << grads.actor, grads.log_std;
      actor_opt_.Step(actor_params, actor_grad);
      actor_.params() = actor_params.head(actor_.num_params());
      log_std_ = actor_params[actor_.num_params()];
      critic_opt_.Step(critic_.params(), grads.critic);

      ++diag.minibatches;
      diag.mean_ratio += grads.loss.mean_ratio;
      diag.clip_fraction += grads.loss.clip_fraction;
      diag.policy_loss += grads.loss.policy_loss;
      diag.value_loss += grads.loss.value_loss;
      diag.entropy += grads.loss.entropy;
    }
  }
  const double m = diag.minibatches;
  diag.mean_ratio /= m;
  diag.clip_fraction /= m;
  diag.policy_loss /= m;
  diag.value_loss /= m;
  diag.entropy /= m;
  return diag;
}

Json PpoAgent::ToJson() const {
  Json buffer = Json::array();
  for (const auto& t : buffer_) buffer.push_back(TransitionToJson(t));
  return Json{{"format", "batchloop-ppo-checkpoint"},
              {"version", 1},
              {"state_dim", state_dim_},
              {"hyperparams", PpoHyperparamsToJson(hp_)},
              {"actor", MlpToJson(actor_)},
              {"critic", MlpToJson(critic_)},
              {"log_std", log_std_},
              {"actor_optimizer", actor_opt_.ToJson()},
              {"critic_optimizer", critic_opt_.ToJson()},
              {"normalizer", normalizer_.ToJson()},
              {"buffer", buffer},
              {"rng", rng_.Serialize()}};
}

PpoAgent PpoAgent::FromJson(const Json& j) {
  if (j.value("format", "") != "batchloop-ppo-checkpoint" ||
      j.value("version", 0) != 1) {
    throw Error("not a version-1 PPO checkpoint");
  }
  PpoAgent agent;
  agent.state_dim_ = j.at("state_dim").get<int>();
  PpoHyperparamsFromJson(j.at("hyperparams"), "hyperparams", &agent.hp_);
  agent.actor_ = MlpFromJson(j.at("actor"));
  agent.critic_ = MlpFromJson(j.at("critic"));
  agent.log_std_ = j.at("log_std").get<double>();
  agent.actor_opt_ = Adam::FromJson(j.at("actor_optimizer"));
  agent.critic_opt_ = Adam::FromJson(j.at("critic_optimizer"));
  agent.normalizer_ = RunningNormalizer::FromJson(j.at("normalizer"));
  for (const auto& t : j.at("buffer")) {
    agent.buffer_.push_back(TransitionFromJson(t));
  }
  agent.rng_.Deserialize(j.at("rng").get<std::string>());
  if (agent.actor_.layer_sizes().front() != agent.state_dim_ ||
      agent.critic_.layer_sizes().front() != agent.state_dim_) {
    throw Error("PPO checkpoint networks do not match its state dimension");
  }
  return agent;
}

}  // namespace batchloop
