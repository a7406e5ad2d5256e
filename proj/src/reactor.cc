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

#include "batchloop/reactor.h"

#include <cmath>
#include <fstream>
#include <sstream>

namespace batchloop {

std::atomic<std::int64_t> ReactorPlant::total_steps_{0};

namespace {

void RequirePositive(double value, const char* name) {
  if (!(value > 0.0) || !std::isfinite(value)) {
    throw ConfigError(std::string("reactor.") + name, "must be positive");
  }
}

bool AllFinite(const ReactorState& x) { return x.allFinite(); }

}  // namespace

void ReactorParams::Validate() const {
  RequirePositive(alpha1, "alpha1");
  RequirePositive(alpha2, "alpha2");
  RequirePositive(e1, "e1");
  RequirePositive(e2, "e2");
  RequirePositive(r_gas, "r_gas");
  RequirePositive(volume, "volume");
  RequirePositive(jacket_volume, "jacket_volume");
  RequirePositive(cp, "cp");
  RequirePositive(cp_jacket, "cp_jacket");
  RequirePositive(rho, "rho");
  RequirePositive(rho_jacket, "rho_jacket");
  RequirePositive(area, "area");
  RequirePositive(h_ow, "h_ow");
  RequirePositive(tj0_nominal, "tj0_nominal");
  RequirePositive(tj0_actual, "tj0_actual");
  RequirePositive(kinetic_time_base_s, "kinetic_time_base_s");
  if (!(lambda1 < 0.0)) throw ConfigError("reactor.lambda1", "must be negative");
  if (!(lambda2 < 0.0)) throw ConfigError("reactor.lambda2", "must be negative");
}

int BatchTimeGrid::SubstepsPerInterval() const {
  return static_cast<int>(std::lround(SampleInterval() / dt_sub));
}

void BatchTimeGrid::Validate() const {
  if (!(t_f > 0.0)) throw ConfigError("grid.t_f_s", "must be positive");
  if (n_steps < 1) throw ConfigError("grid.n_steps", "must be >= 1");
  if (!(dt_sub > 0.0)) throw ConfigError("grid.dt_sub_s", "must be positive");
  const double ratio = SampleInterval() / dt_sub;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio || ratio < 1.0) {
    throw ConfigError("grid.dt_sub_s", "must divide the sampling interval");
  }
}

void NoiseConfig::Validate() const {
  const double v[] = {var_v, var_w, var_m, var_n};
  const char* names[] = {"var_v", "var_w", "var_m", "var_n"};
  for (int i = 0; i < 4; ++i) {
    if (!(v[i] >= 0.0) || !std::isfinite(v[i])) {
      throw ConfigError(std::string("noise.") + names[i], "must be >= 0");
    }
  }
}

ReactorState InitialState(const ReactorParams& params) {
  return ReactorState(1.0, 0.0, params.tj0_nominal, params.tj0_nominal);
}

RateConstants ArrheniusRates(double temperature, const ReactorParams& params) {
  if (!std::isfinite(temperature) || temperature <= 0.0) {
    throw DomainError("Arrhenius rate requested at temperature " +
                      FormatDouble(temperature) + " K");
  }
  const double rt = params.r_gas * temperature;
  return {params.alpha1 * std::exp(-params.e1 / rt),
          params.alpha2 * std::exp(-params.e2 / rt)};
}

ReactorState StateDerivative(const ReactorState& state, double flow,
                             double inlet_temp, const ReactorParams& params) {
  const double c_a = state[kCa];
  const double c_b = state[kCb];
  const double temp = state[kTemp];
  const double jacket = state[kJacketTemp];

  const RateConstants k = ArrheniusRates(temp, params);
  const double k1 = k.k1 / params.kinetic_time_base_s;
  const double k2 = k.k2 / params.kinetic_time_base_s;
  const double r1 = k1 * c_a * c_a;
  const double r2 = k2 * c_b;

  // h_ow is quoted per minute.
  const double q_jacket = params.h_ow / 60.0 * params.area * (temp - jacket);
  const double reactor_capacity = params.rho * params.cp;

  ReactorState dx;
  dx[kCa] = -r1;
  dx[kCb] = r1 - r2;
  dx[kTemp] = (-params.lambda1 / reactor_capacity) * r1 -
              (-params.lambda2 / reactor_capacity) * r2 -
              q_jacket / (params.volume * reactor_capacity);
  dx[kJacketTemp] =
      flow / params.jacket_volume * (inlet_temp - jacket) +
      q_jacket /
          (params.cp_jacket * params.jacket_volume * params.rho_jacket);
  return dx;
}

ReactorState IntegrateStepRaw(const ReactorState& state, double flow,
                              double inlet_temp, const BatchTimeGrid& grid,
                              const ReactorParams& params) {
  const int substeps = grid.SubstepsPerInterval();
  const double h = grid.SampleInterval() / substeps;
  ReactorState x = state;
  for (int i = 0; i < substeps; ++i) {
    const ReactorState k1 = StateDerivative(x, flow, inlet_temp, params);
    const ReactorState k2 =
        StateDerivative(x + 0.5 * h * k1, flow, inlet_temp, params);
    const ReactorState k3 =
        StateDerivative(x + 0.5 * h * k2, flow, inlet_temp, params);
    const ReactorState k4 =
        StateDerivative(x + h * k3, flow, inlet_temp, params);
    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!AllFinite(x)) {
      std::ostringstream msg;
      msg << "RK4 produced a non-finite state after substep " << i
          << " (flow " << flow << ", inlet " << inlet_temp << ")";
      throw IntegrationDivergedError(msg.str());
    }
  }
  return x;
}

ReactorState IntegrateStep(const ReactorState& state, double flow,
                           double inlet_temp, const BatchTimeGrid& grid,
                           const ReactorParams& params) {
  ReactorState x = IntegrateStepRaw(state, flow, inlet_temp, grid, params);
  for (int i : {kCa, kCb}) {
    if (x[i] < 0.0) {
      LogWarning("negative concentration " + FormatDouble(x[i]) +
                 " clamped to zero");
      x[i] = 0.0;
    }
  }
  return x;
}

void CheckFlowBounds(const Eigen::VectorXd& flows) {
  for (Eigen::Index t = 0; t < flows.size(); ++t) {
    if (!(flows[t] >= kFlowMin && flows[t] <= kFlowMax)) {
      throw ConstraintError("coolant flow " + FormatDouble(flows[t]) +
                            " L/s at step " + std::to_string(t) +
                            " outside [0, 10]");
    }
  }
}

Eigen::MatrixXd SimulateNominal(const Eigen::VectorXd& flows,
                                const ReactorParams& params,
                                const BatchTimeGrid& grid,
                                const Eigen::VectorXd* disturbance) {
  const int n = static_cast<int>(flows.size());
  Eigen::MatrixXd states(n + 1, kStateDim);
  ReactorState x = InitialState(params);
  states.row(0) = x.transpose();
  for (int t = 0; t < n; ++t) {
    const double d = disturbance ? (*disturbance)[t] : 0.0;
    x = IntegrateStep(x, flows[t], params.tj0_nominal + d, grid, params);
    states.row(t + 1) = x.transpose();
  }
  return states;
}

DisturbanceModel::DisturbanceModel(int n_steps, double initial_offset,
                                   const NoiseConfig& noise)
    : noise_(noise),
      rng_(noise.seed),
      d_bar_(Eigen::VectorXd::Constant(n_steps, initial_offset)),
      d_(d_bar_) {}

const Eigen::VectorXd& DisturbanceModel::BeginBatch() {
  for (Eigen::Index t = 0; t < d_bar_.size(); ++t) {
    d_[t] = d_bar_[t] + rng_.Normal(0.0, noise_.var_v);
  }
  return d_;
}

Eigen::VectorXd DisturbanceModel::EndBatch() {
  Eigen::VectorXd w(d_bar_.size());
  for (Eigen::Index t = 0; t < w.size(); ++t) {
    w[t] = rng_.Normal(0.0, noise_.var_w);
  }
  d_bar_ += w;
  return w;
}

Eigen::Vector2d DisturbanceModel::NoisyObservation(
    const Eigen::Vector2d& clean) {
  Eigen::Vector2d z = clean;
  for (int i = 0; i < 2; ++i) z[i] += rng_.Normal(0.0, noise_.var_m);
  return z;
}

Eigen::Vector2d DisturbanceModel::NoisyQuality(const Eigen::Vector2d& clean) {
  Eigen::Vector2d y = clean;
  for (int i = 0; i < 2; ++i) y[i] += rng_.Normal(0.0, noise_.var_n);
  return y;
}

ReactorPlant::ReactorPlant(const ReactorParams& params,
                           const BatchTimeGrid& grid, const NoiseConfig& noise)
    : params_(params),
      grid_(grid),
      disturbance_(grid.n_steps, params.tj0_actual - params.tj0_nominal,
                   noise),
      state_(InitialState(params)) {
  grid_.Validate();
  noise.Validate();
}

ReactorState ReactorPlant::BeginBatch() {
  const int n = grid_.n_steps;
  state_ = InitialState(params_);
  t_ = 0;
  in_batch_ = true;
  trace_ = BatchTrace{};
  trace_.batch_index = batch_index_ + 1;
  trace_.states.resize(n + 1, kStateDim);
  trace_.states.row(0) = state_.transpose();
  trace_.flows.resize(n);
  trace_.observations.resize(n, kObservationDim);
  trace_.disturbance = disturbance_.BeginBatch();
  return state_;
}

Eigen::Vector2d ReactorPlant::Step(double flow) {
  if (!in_batch_ || t_ >= grid_.n_steps) {
    throw Error("ReactorPlant::Step called outside an open batch");
  }
  if (!(flow >= kFlowMin && flow <= kFlowMax)) {
    throw ConstraintError("coolant flow " + FormatDouble(flow) +
                          " L/s outside [0, 10] at step " +
                          std::to_string(t_));
  }
  ++total_steps_;
  const double inlet = params_.tj0_nominal + trace_.disturbance[t_];
  state_ = IntegrateStep(state_, flow, inlet, grid_, params_);
  trace_.flows[t_] = flow;
  ++t_;
  trace_.states.row(t_) = state_.transpose();
  const Eigen::Vector2d z = disturbance_.NoisyObservation(
      Eigen::Vector2d(state_[kTemp], state_[kJacketTemp]));
  trace_.observations.row(t_ - 1) = z.transpose();
  return z;
}

Eigen::Vector2d ReactorPlant::EndBatch() {
  if (!in_batch_ || t_ != grid_.n_steps) {
    throw Error("ReactorPlant::EndBatch called before the batch finished");
  }
  trace_.quality = disturbance_.NoisyQuality(
      Eigen::Vector2d(state_[kCa], state_[kCb]));
  trace_.drift = disturbance_.EndBatch();
  in_batch_ = false;
  ++batch_index_;
  return trace_.quality;
}

BatchTrace ReactorPlant::RunBatch(const Eigen::VectorXd& flows) {
  if (flows.size() != grid_.n_steps) {
    throw Error("RunBatch expects " + std::to_string(grid_.n_steps) +
                " flows, got " + std::to_string(flows.size()));
  }
  CheckFlowBounds(flows);
  BeginBatch();
  for (int t = 0; t < grid_.n_steps; ++t) Step(flows[t]);
  EndBatch();
  return trace_;
}

void WriteTrajectoryCsv(const std::string& path, const BatchTimeGrid& grid,
                        const Eigen::MatrixXd& states,
                        const Eigen::VectorXd& flows,
                        const Eigen::VectorXd& disturbance) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << "step,time_s,C_A,C_B,T,T_J,F_ow,d\n";
  const Eigen::Index n = flows.size();
  for (Eigen::Index t = 0; t < states.rows(); ++t) {
    const Eigen::Index u_index = std::min<Eigen::Index>(t, n - 1);
    const double d = disturbance.size() ? disturbance[u_index] : 0.0;
    out << t << ',' << FormatDouble(t * grid.SampleInterval());
    for (int i = 0; i < kStateDim; ++i) {
      out << ',' << FormatDouble(states(t, i));
    }
    out << ',' << FormatDouble(flows[u_index]) << ',' << FormatDouble(d)
        << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace batchloop
