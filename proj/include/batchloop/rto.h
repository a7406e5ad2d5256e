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

#ifndef BATCHLOOP_RTO_H_
#define BATCHLOOP_RTO_H_

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/box_qp.h"
#include "batchloop/json_util.h"
#include "batchloop/reactor.h"

namespace batchloop {

// Economic steady-state optimization producing the nominal batch recipe.
struct RtoConfig {
  double cb_setpoint = 0.58;   // mol/L
  double flow_cost = 0.05;     // per (L/s)^2 per interval
  double volume = 1200.0;      // L, weights the terminal term
  double u_min = kFlowMin;
  double u_max = kFlowMax;
  double t_min = 298.0;        // K
  double t_max = 378.0;        // K
  int max_iters = 400;
  double step_size = 1.0;      // initial backtracking step
  double fd_step = 1e-4;       // central-difference step on each flow
  double temp_penalty_weight = 1e3;
  double u_init = 2.0;         // constant initial recipe
  double gradient_tolerance = 1e-6;
  int stall_window = 10;
  double stall_threshold = 1e-8;

  void Validate() const;
  bool operator==(const RtoConfig&) const = default;
};

struct RtoObjectiveTerms {
  double terminal = 0.0;   // (C_B(T_f) - C_B,sp)^2 V
  double operating = 0.0;  // k sum F^2
  double penalty = 0.0;    // quadratic temperature-bound violation
  double total() const { return terminal + operating + penalty; }
};

// Terms of the objective for a noise-free batch at nominal inlet
// temperature. Throws ConstraintError when `flows` leaves the box.
RtoObjectiveTerms RtoObjectiveBreakdown(const Eigen::VectorXd& flows,
                                        const RtoConfig& cfg,
                                        const ReactorParams& params,
                                        const BatchTimeGrid& grid);

double RtoObjective(const Eigen::VectorXd& flows, const RtoConfig& cfg,
                    const ReactorParams& params, const BatchTimeGrid& grid);

// Central finite-difference gradient, one-sided at the box faces.
// Re-simulates only the suffix of the batch affected by each flow.
Eigen::VectorXd RtoGradient(const Eigen::VectorXd& flows, const RtoConfig& cfg,
                            const ReactorParams& params,
                            const BatchTimeGrid& grid);

struct NominalTrajectory {
  Eigen::MatrixXd x_nom;  // (n_steps+1) x 4
  Eigen::VectorXd u_nom;  // n_steps
  double objective = 0.0;
  double initial_objective = 0.0;
  int iterations = 0;
  Termination termination = Termination::kMaxIterations;
  double projected_gradient_norm = 0.0;
  bool temperature_within_bounds = false;
  std::vector<double> history;
};

NominalTrajectory OptimizeNominal(const RtoConfig& cfg,
                                  const ReactorParams& params,
                                  const BatchTimeGrid& grid);

Json NominalToJson(const NominalTrajectory& nominal, const RtoConfig& cfg);

// Writes <dir>/nominal.csv and <dir>/nominal.json.
void WriteNominal(const std::string& dir, const NominalTrajectory& nominal,
                  const RtoConfig& cfg, const BatchTimeGrid& grid);

}  // namespace batchloop

#endif  // BATCHLOOP_RTO_H_
