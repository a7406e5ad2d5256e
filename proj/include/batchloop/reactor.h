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

#ifndef BATCHLOOP_REACTOR_H_
#define BATCHLOOP_REACTOR_H_

#include <atomic>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/common.h"

namespace batchloop {

// State layout of the A -> B -> C batch reactor.
enum StateIndex : int { kCa = 0, kCb = 1, kTemp = 2, kJacketTemp = 3 };

inline constexpr int kStateDim = 4;
inline constexpr int kInputDim = 1;
inline constexpr int kDisturbanceDim = 1;
inline constexpr int kObservationDim = 2;  // (T, T_J), available online
inline constexpr int kQualityDim = 2;      // (C_A, C_B), terminal only

// (C_A [mol/L], C_B [mol/L], T [K], T_J [K]).
using ReactorState = Eigen::Vector4d;

// Physical constants of the jacketed reactor. Defaults are the literature
// values of the benchmark reactor.
struct ReactorParams {
  double alpha1 = 4000.0;   // L/(mol kinetic-time-unit)
  double alpha2 = 6.2e5;    // 1/kinetic-time-unit
  double e1 = 5000.0;       // cal/(g mol)
  double e2 = 10000.0;      // cal/(g mol)
  double r_gas = 2.0;       // cal/(mol K)
  double volume = 1200.0;   // L
  double jacket_volume = 1200.0;
  double lambda1 = -1.8e5;  // cal/mol, exothermic
  double lambda2 = -2.25e5;
  double cp = 1000.0;       // cal/(kg K)
  double cp_jacket = 1000.0;
  double rho = 0.8;         // kg/L
  double rho_jacket = 0.8;
  double area = 525.0;      // dm^2
  double h_ow = 10850.0;    // cal/(min K dm^2); converted to seconds internally
  double tj0_nominal = 323.0;
  double tj0_actual = 318.0;
  // Seconds per unit of time in alpha1/alpha2. The benchmark kinetics are
  // quoted per hour; the ODE itself always runs in seconds.
  double kinetic_time_base_s = 3600.0;

  // Throws ConfigError naming the first violated invariant.
  void Validate() const;
  bool operator==(const ReactorParams&) const = default;
};

struct BatchTimeGrid {
  double t_f = 3600.0;  // s
  int n_steps = 40;
  double dt_sub = 1.0;  // s, RK4 substep

  double SampleInterval() const { return t_f / n_steps; }
  int SubstepsPerInterval() const;
  void Validate() const;
  bool operator==(const BatchTimeGrid&) const = default;
};

// Variances of the within-batch disturbance v, the batch-to-batch drift w,
// the online observation noise m and the terminal quality noise n.
struct NoiseConfig {
  double var_v = 0.3;
  double var_w = 0.4;
  double var_m = 0.06;
  double var_n = 0.005;
  std::uint64_t seed = 0;

  void Validate() const;
  bool operator==(const NoiseConfig&) const = default;
};

inline constexpr double kFlowMin = 0.0;   // L/s
inline constexpr double kFlowMax = 10.0;  // L/s

ReactorState InitialState(const ReactorParams& params);

struct RateConstants {
  double k1;  // L/(mol kinetic-time-unit)
  double k2;  // 1/kinetic-time-unit
};

// Arrhenius rate constants in the parameter set's kinetic time unit.
// Throws DomainError for non-finite or non-positive temperature.
RateConstants ArrheniusRates(double temperature, const ReactorParams& params);

// Right-hand side of the mass and energy balances in seconds, with jacket
// inlet temperature `inlet_temp` and coolant flow `flow` [L/s].
ReactorState StateDerivative(const ReactorState& state, double flow,
                             double inlet_temp, const ReactorParams& params);

// One sampling interval of classical RK4 with the input held constant.
// Concentrations that come out negative are clamped to zero with a warning.
// Throws IntegrationDivergedError on non-finite intermediate states.
ReactorState IntegrateStep(const ReactorState& state, double flow,
                           double inlet_temp, const BatchTimeGrid& grid,
                           const ReactorParams& params);

// Same, without the clamp; used for finite-difference linearization.
ReactorState IntegrateStepRaw(const ReactorState& state, double flow,
                              double inlet_temp, const BatchTimeGrid& grid,
                              const ReactorParams& params);

// Noise-free trajectory from the initial state at nominal inlet temperature
// (plus an optional per-interval disturbance). Rows are instants 0..n_steps.
Eigen::MatrixXd SimulateNominal(const Eigen::VectorXd& flows,
                                const ReactorParams& params,
                                const BatchTimeGrid& grid,
                                const Eigen::VectorXd* disturbance = nullptr);

void CheckFlowBounds(const Eigen::VectorXd& flows);

// Everything that happened during one batch of a process.
struct BatchTrace {
  int batch_index = 0;
  Eigen::MatrixXd states;         // (n_steps+1) x n_x, true states
  Eigen::VectorXd flows;          // n_steps applied inputs
  Eigen::VectorXd disturbance;    // n_steps, d = d̄ + v
  Eigen::MatrixXd observations;   // n_steps x n_z, z(1..T)
  Eigen::VectorXd quality;        // n_y, noisy terminal measurement
  Eigen::VectorXd drift;          // w_k drawn after the batch ends
};

// A repetitive batch process driven one sampling interval at a time.
// Call order per batch: BeginBatch, Step x n_steps, EndBatch.
class BatchProcess {
 public:
  virtual ~BatchProcess() = default;

  // Resets to the initial state and draws this batch's random disturbance.
  virtual ReactorState BeginBatch() = 0;
  // Applies `flow` for one interval; returns the noisy observation z(t+1).
  virtual Eigen::Vector2d Step(double flow) = 0;
  // Returns the noisy terminal quality y(T) and advances the drift.
  virtual Eigen::Vector2d EndBatch() = 0;

  virtual const ReactorState& TrueState() const = 0;
  virtual const BatchTrace& trace() const = 0;
  virtual int step_index() const = 0;
  virtual int n_steps() const = 0;
};

// Shared disturbance/noise bookkeeping for BatchProcess implementations.
class DisturbanceModel {
 public:
  DisturbanceModel(int n_steps, double initial_offset,
                   const NoiseConfig& noise);

  // d_k = d̄_k + v_k for the upcoming batch.
  const Eigen::VectorXd& BeginBatch();
  // Draws w_k and applies d̄_{k+1} = d̄_k + w_k. Returns w_k.
  Eigen::VectorXd EndBatch();

  Eigen::Vector2d NoisyObservation(const Eigen::Vector2d& clean);
  Eigen::Vector2d NoisyQuality(const Eigen::Vector2d& clean);

  const Eigen::VectorXd& deterministic() const { return d_bar_; }
  const Eigen::VectorXd& current() const { return d_; }

 private:
  NoiseConfig noise_;
  Rng rng_;
  Eigen::VectorXd d_bar_;
  Eigen::VectorXd d_;
};

// The nonlinear reactor, i.e. the "actual process".
class ReactorPlant : public BatchProcess {
 public:
  ReactorPlant(const ReactorParams& params, const BatchTimeGrid& grid,
               const NoiseConfig& noise);

  ReactorState BeginBatch() override;
  Eigen::Vector2d Step(double flow) override;
  Eigen::Vector2d EndBatch() override;

  // BeginBatch + Step for every input + EndBatch.
  BatchTrace RunBatch(const Eigen::VectorXd& flows);

  const ReactorState& TrueState() const override { return state_; }
  const BatchTrace& trace() const override { return trace_; }
  int step_index() const override { return t_; }
  int n_steps() const override { return grid_.n_steps; }
  int batches_completed() const { return batch_index_; }
  const DisturbanceModel& disturbance() const { return disturbance_; }

  // Number of Step calls across every plant in the process.
  static std::int64_t TotalSteps() { return total_steps_.load(); }

 private:
  ReactorParams params_;
  BatchTimeGrid grid_;
  DisturbanceModel disturbance_;
  ReactorState state_;
  BatchTrace trace_;
  int t_ = 0;
  int batch_index_ = 0;
  bool in_batch_ = false;

  static std::atomic<std::int64_t> total_steps_;
};

// CSV with columns step,time_s,C_A,C_B,T,T_J,F_ow,d. The terminal row
// repeats the last interval's input and disturbance.
void WriteTrajectoryCsv(const std::string& path, const BatchTimeGrid& grid,
                        const Eigen::MatrixXd& states,
                        const Eigen::VectorXd& flows,
                        const Eigen::VectorXd& disturbance);

}  // namespace batchloop

#endif  // BATCHLOOP_REACTOR_H_
