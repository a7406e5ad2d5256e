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

#include "batchloop/rto.h"

#include <cmath>
#include <sstream>

namespace batchloop {
namespace {

double TemperaturePenalty(double temp, const RtoConfig& cfg) {
  const double over = std::max(0.0, temp - cfg.t_max);
  const double under = std::max(0.0, cfg.t_min - temp);
  return over * over + under * under;
}

// Objective from a state trajectory whose rows are instants 0..T.
RtoObjectiveTerms TermsFromStates(const Eigen::MatrixXd& states,
                                  const Eigen::VectorXd& flows,
                                  const RtoConfig& cfg) {
  RtoObjectiveTerms terms;
  const double error = states(states.rows() - 1, kCb) - cfg.cb_setpoint;
  terms.terminal = error * error * cfg.volume;
  terms.operating = cfg.flow_cost * flows.squaredNorm();
  double violation = 0.0;
  for (Eigen::Index t = 1; t < states.rows(); ++t) {
    violation += TemperaturePenalty(states(t, kTemp), cfg);
  }
  terms.penalty = cfg.temp_penalty_weight * violation;
  return terms;
}

// Objective after replacing flows[i] by `flow_i`, re-using the stored
// states up to instant i.
double SuffixObjective(const Eigen::MatrixXd& base_states,
                       const Eigen::VectorXd& flows, int i, double flow_i,
                       const RtoConfig& cfg, const ReactorParams& params,
                       const BatchTimeGrid& grid) {
  Eigen::MatrixXd states = base_states;
  Eigen::VectorXd u = flows;
  u[i] = flow_i;
  ReactorState x = states.row(i).transpose();
  for (int t = i; t < u.size(); ++t) {
    x = IntegrateStep(x, u[t], params.tj0_nominal, grid, params);
    states.row(t + 1) = x.transpose();
  }
  return TermsFromStates(states, u, cfg).total();
}

}  // namespace

void RtoConfig::Validate() const {
  if (!(u_min >= kFlowMin && u_max <= kFlowMax && u_min < u_max)) {
    throw ConfigError("rto.u_bounds",
                      "flow bounds must be ordered and lie within the "
                      "physical range [0, 10] L/s");
  }
  if (!(t_min < t_max)) throw ConfigError("rto.t_bounds", "must be ordered");
  if (!(temp_penalty_weight >= 0.0)) {
    throw ConfigError("rto.temp_penalty_weight", "must be >= 0");
  }
  if (!(flow_cost >= 0.0)) throw ConfigError("rto.flow_cost", "must be >= 0");
  if (!(volume > 0.0)) throw ConfigError("rto.volume", "must be positive");
  if (max_iters < 1) throw ConfigError("rto.max_iters", "must be >= 1");
  if (!(step_size > 0.0)) throw ConfigError("rto.step_size", "must be positive");
  if (!(fd_step > 0.0)) throw ConfigError("rto.fd_step", "must be positive");
  if (!(u_init >= u_min && u_init <= u_max)) {
    throw ConfigError("rto.u_init", "must lie inside the flow bounds");
  }
}

RtoObjectiveTerms RtoObjectiveBreakdown(const Eigen::VectorXd& flows,
                                        const RtoConfig& cfg,
                                        const ReactorParams& params,
                                        const BatchTimeGrid& grid) {
  CheckFlowBounds(flows);
  const Eigen::MatrixXd states = SimulateNominal(flows, params, grid);
  return TermsFromStates(states, flows, cfg);
}

double RtoObjective(const Eigen::VectorXd& flows, const RtoConfig& cfg,
                    const ReactorParams& params, const BatchTimeGrid& grid) {
  return RtoObjectiveBreakdown(flows, cfg, params, grid).total();
}

Eigen::VectorXd RtoGradient(const Eigen::VectorXd& flows, const RtoConfig& cfg,
                            const ReactorParams& params,
                            const BatchTimeGrid& grid) {
  const Eigen::MatrixXd base = SimulateNominal(flows, params, grid);
  const double f0 = TermsFromStates(base, flows, cfg).total();
  Eigen::VectorXd g(flows.size());
  const double h = cfg.fd_step;
  for (int i = 0; i < flows.size(); ++i) {
    const bool can_up = flows[i] + h <= cfg.u_max;
    const bool can_down = flows[i] - h >= cfg.u_min;
    if (can_up && can_down) {
      const double fp =
          SuffixObjective(base, flows, i, flows[i] + h, cfg, params, grid);
      const double fm =
          SuffixObjective(base, flows, i, flows[i] - h, cfg, params, grid);
      g[i] = (fp - fm) / (2.0 * h);
    } else if (can_up) {
      g[i] = (SuffixObjective(base, flows, i, flows[i] + h, cfg, params,
                              grid) - f0) / h;
    } else {
      g[i] = (f0 - SuffixObjective(base, flows, i, flows[i] - h, cfg, params,
                                   grid)) / h;
    }
  }
  return g;
}

NominalTrajectory OptimizeNominal(const RtoConfig& cfg,
                                  const ReactorParams& params,
                                  const BatchTimeGrid& grid) {
  cfg.Validate();
  const int n = grid.n_steps;
  const Eigen::VectorXd lower = Eigen::VectorXd::Constant(n, cfg.u_min);
  const Eigen::VectorXd upper = Eigen::VectorXd::Constant(n, cfg.u_max);
  const Eigen::VectorXd u0 = Eigen::VectorXd::Constant(n, cfg.u_init);

  Eigen::VectorXd last_x = u0;
  ObjectiveFn objective = [&](const Eigen::VectorXd& u, Eigen::VectorXd* grad) {
    last_x = u;
    const double f = RtoObjective(u, cfg, params, grid);
    if (!std::isfinite(f)) {
      std::ostringstream dump;
      dump << "RTO objective is not finite at iterate [";
      for (int i = 0; i < u.size(); ++i) dump << (i ? ", " : "") << u[i];
      dump << "]";
      throw SolverError(dump.str());
    }
    if (grad) *grad = RtoGradient(u, cfg, params, grid);
    return f;
  };

  ProjectedGradientOptions options;
  options.max_iters = cfg.max_iters;
  options.tolerance = cfg.gradient_tolerance;
  options.initial_step = cfg.step_size;
  options.stall_window = cfg.stall_window;
  options.stall_threshold = cfg.stall_threshold;
  const ProjectedGradientResult result =
      MinimizeProjectedGradient(objective, u0, lower, upper, options);

  NominalTrajectory nominal;
  nominal.u_nom = result.x;
  nominal.x_nom = SimulateNominal(result.x, params, grid);
  nominal.objective = result.value;
  nominal.initial_objective = result.history.front();
  nominal.iterations = result.iterations;
  nominal.termination = result.termination;
  nominal.projected_gradient_norm = result.projected_gradient_norm;
  nominal.history = result.history;
  const auto temps = nominal.x_nom.col(kTemp);
  nominal.temperature_within_bounds =
      temps.minCoeff() >= cfg.t_min && temps.maxCoeff() <= cfg.t_max;
  if (!nominal.temperature_within_bounds) {
    LogWarning("nominal trajectory violates the reactor temperature bounds");
  }
  return nominal;
}

Json NominalToJson(const NominalTrajectory& nominal, const RtoConfig& cfg) {
  return Json{
      {"objective", nominal.objective},
      {"initial_objective", nominal.initial_objective},
      {"iterations", nominal.iterations},
      {"termination", ToString(nominal.termination)},
      {"projected_gradient_norm", nominal.projected_gradient_norm},
      {"temperature_within_bounds", nominal.temperature_within_bounds},
      {"terminal_C_B", nominal.x_nom(nominal.x_nom.rows() - 1, kCb)},
      {"u_nom", VectorToJson(nominal.u_nom)},
      {"config",
       {{"cb_setpoint", cfg.cb_setpoint},
        {"flow_cost", cfg.flow_cost},
        {"volume", cfg.volume},
        {"u_bounds", {cfg.u_min, cfg.u_max}},
        {"t_bounds", {cfg.t_min, cfg.t_max}},
        {"max_iters", cfg.max_iters},
        {"step_size", cfg.step_size},
        {"fd_step", cfg.fd_step},
        {"temp_penalty_weight", cfg.temp_penalty_weight},
        {"u_init", cfg.u_init}}}};
}

void WriteNominal(const std::string& dir, const NominalTrajectory& nominal,
                  const RtoConfig& cfg, const BatchTimeGrid& grid) {
  WriteTrajectoryCsv(dir + "/nominal.csv", grid, nominal.x_nom, nominal.u_nom,
                     Eigen::VectorXd::Zero(nominal.u_nom.size()));
  WriteJsonFile(dir + "/nominal.json", NominalToJson(nominal, cfg));
}

}  // namespace batchloop
