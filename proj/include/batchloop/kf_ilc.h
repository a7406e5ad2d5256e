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

#ifndef BATCHLOOP_KF_ILC_H_
#define BATCHLOOP_KF_ILC_H_

#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "batchloop/json_util.h"
#include "batchloop/lifted_model.h"
#include "batchloop/reactor.h"
#include "batchloop/rto.h"

namespace batchloop {

// Noise covariances seen by the lifted Kalman filters.
struct NoiseCovariances {
  Eigen::MatrixXd r_w;  // batch-to-batch drift of the repetitive disturbance
  Eigen::MatrixXd r_v;  // per-batch disturbance
  Eigen::MatrixXd r_m;  // online measurement noise
  Eigen::MatrixXd r_n;  // terminal quality noise

  static NoiseCovariances FromNoiseConfig(const NoiseConfig& noise, int n_d,
                                          int n_z, int n_y);
  // Covariance of d_{k+1} - d_k per instant: R_w + 2 R_v.
  Eigen::MatrixXd DisturbanceIncrement() const { return r_w + 2.0 * r_v; }
  // Throws ConfigError unless every block is symmetric PSD.
  void Validate() const;
};

// Lifted deviation estimate of one batch.
struct BatchKalmanState {
  Eigen::VectorXd x_hat;      // n_x T
  Eigen::MatrixXd p;          // (n_x T) x (n_x T)
  Eigen::VectorXd u_applied;  // n_u T, absolute inputs
};

struct KalmanPrediction {
  Eigen::VectorXd x_pred;
  Eigen::MatrixXd p_pred;
};

struct UpdateDiagnostics {
  double innovation_norm = 0.0;
  double condition_number = 0.0;
  double trace_prior = 0.0;
  double trace_posterior = 0.0;
};

// Terminal-quality economic objective on the lifted deviation state:
//   weight (nominal_quality + quality_row x - setpoint)^2 + flow_cost |u|^2
// over absolute inputs u in [u_min, u_max].
struct IlcObjective {
  Eigen::RowVectorXd quality_row;
  double nominal_quality = 0.0;
  double setpoint = 0.58;
  double weight = 1200.0;
  double flow_cost = 0.05;
  double u_min = kFlowMin;
  double u_max = kFlowMax;
  int max_iters = 20000;
  double tolerance = 1e-8;

  // Tracks C_B at the final instant of `model` around the nominal C_B.
  static IlcObjective ForReactor(const LiftedBatchModel& model,
                                 const Eigen::MatrixXd& nominal_x,
                                 const RtoConfig& rto);
  double Evaluate(const Eigen::VectorXd& x_lifted,
                  const Eigen::VectorXd& u_abs) const;
};

struct IlcSolution {
  Eigen::VectorXd delta_u;      // full length n_u T; zero before first_step
  Eigen::VectorXd u_next;       // u_prev + delta_u
  Eigen::VectorXd predicted_x;  // x_hat + Psi_u delta_u
  double predicted_j = 0.0;
  int first_step = 0;           // first instant the solve was free to change
  int iterations = 0;
  double projected_gradient_norm = 0.0;
  // Input the within-batch loop applies at `first_step`.
  double applied() const { return u_next[first_step]; }
};

KalmanPrediction B2bPredict(const BatchKalmanState& prev,
                            const Eigen::VectorXd& delta_u,
                            const LiftedBatchModel& model,
                            const NoiseCovariances& cov);

// `z` stacks deviation observations of instants 1..T, `y_terminal` the
// deviation quality at T. Throws EstimationError if S is near singular.
BatchKalmanState B2bUpdate(const KalmanPrediction& pred,
                           const Eigen::VectorXd& z,
                           const Eigen::VectorXd& y_terminal,
                           const Eigen::VectorXd& u_applied,
                           const LiftedBatchModel& model,
                           const NoiseCovariances& cov,
                           UpdateDiagnostics* diagnostics = nullptr);

IlcSolution B2bIlcSolve(const BatchKalmanState& state,
                        const LiftedBatchModel& model,
                        const IlcObjective& objective);

// One step of the within-batch prediction at instant t in [0, T-1].
KalmanPrediction WbPredict(const BatchKalmanState& state, double delta_u_t,
                           const LiftedBatchModel& model,
                           const NoiseCovariances& cov, int t);

// Measurement update with z(t), t in [1, T]; at t = T the quality
// measurement may be stacked in as well.
BatchKalmanState WbUpdate(const KalmanPrediction& pred,
                          const Eigen::VectorXd& z_t,
                          const std::optional<Eigen::VectorXd>& y_terminal,
                          const Eigen::VectorXd& u_applied,
                          const LiftedBatchModel& model,
                          const NoiseCovariances& cov, int t,
                          UpdateDiagnostics* diagnostics = nullptr);

// Optimizes the increments of instants t..T-1 about `u_h`; only
// solution.applied() is meant to reach the process. At t = 0 this is the
// batch-to-batch problem.
IlcSolution WbIlcSolve(const BatchKalmanState& state,
                       const Eigen::VectorXd& u_h,
                       const LiftedBatchModel& model,
                       const IlcObjective& objective, int t);

BatchKalmanState InitialPosterior(const LiftedBatchModel& model,
                                  const Eigen::VectorXd& u_nominal, double p0);

// Inner-loop initialization from the previous outer posterior.
BatchKalmanState HierarchicalInit(const BatchKalmanState& b2b_posterior);

struct KfIlcConfig {
  double p0 = 1.0;
  int qp_max_iters = 20000;
  double qp_tolerance = 1e-8;
  bool operator==(const KfIlcConfig&) const = default;
};

// Per-batch informer diagnostics.
struct InformerBatchSummary {
  double trace_p = 0.0;
  std::vector<double> innovation_norms;  // within-batch, instants 1..T
  double b2b_innovation_norm = 0.0;
  double ilc_objective = 0.0;            // predicted J at t = 0
  Eigen::VectorXd applied;               // inputs that reached the process
};

Json InformerSummaryToJson(const InformerBatchSummary& summary);

// The two-layer informer: an outer batch-to-batch filter whose posterior
// seeds an inner within-batch filter and ILC every batch.
class HierarchicalIlc {
 public:
  HierarchicalIlc(const LiftedBatchModel& model, const NoiseCovariances& cov,
                  const IlcObjective& objective, const KfIlcConfig& cfg);

  void StartBatch();
  // Informer input for the current step.
  double ComputeAction();
  // Records the input that was actually applied at the current step and
  // filters the observation of the next instant. `y` is the terminal
  // quality, passed with the final observation.
  void Advance(double applied, const Eigen::Vector2d& z,
               const std::optional<Eigen::Vector2d>& y = std::nullopt);
  // Outer-loop update with the stacked measurements of the finished batch.
  InformerBatchSummary FinishBatch();

  // Absolute state estimate at the current instant.
  ReactorState EstimatedState() const;
  int step() const { return t_; }
  int batches_completed() const { return batches_; }
  const BatchKalmanState& outer_posterior() const { return outer_; }
  const BatchKalmanState& inner_state() const { return inner_; }
  const LiftedBatchModel& model() const { return model_; }

 private:
  LiftedBatchModel model_;
  NoiseCovariances cov_;
  IlcObjective objective_;
  KfIlcConfig cfg_;
  BatchKalmanState outer_;
  BatchKalmanState inner_;
  Eigen::VectorXd z_dev_;
  Eigen::VectorXd y_dev_;
  InformerBatchSummary summary_;
  int t_ = 0;
  int batches_ = 0;
  bool in_batch_ = false;
  bool action_ready_ = false;
  double pending_action_ = 0.0;
};

}  // namespace batchloop

#endif  // BATCHLOOP_KF_ILC_H_
