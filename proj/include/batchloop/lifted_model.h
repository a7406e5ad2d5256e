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

#ifndef BATCHLOOP_LIFTED_MODEL_H_
#define BATCHLOOP_LIFTED_MODEL_H_

#include <vector>

#include <Eigen/Dense>

#include "batchloop/json_util.h"
#include "batchloop/reactor.h"

namespace batchloop {

// Time-varying matrices of the discrete LTV model
//   x(t+1) = A(t) x(t) + B_u(t) u(t) + B_d(t) d(t),  z(t+1) = F(t) x(t+1),
//   y(T) = C_T x(T),
// all in deviation variables about (nominal_x, nominal_u).
// f_obs[t] applies to the state at instant t+1.
struct LtvMatrices {
  std::vector<Eigen::MatrixXd> a;
  std::vector<Eigen::MatrixXd> b_u;
  std::vector<Eigen::MatrixXd> b_d;
  std::vector<Eigen::MatrixXd> f_obs;
  Eigen::MatrixXd c_terminal;

  Eigen::MatrixXd nominal_x;  // (n_steps+1) x n_x; may be empty for toys
  Eigen::VectorXd nominal_u;  // n_steps * n_u; may be empty for toys

  int n_steps() const { return static_cast<int>(a.size()); }
  int state_dim() const { return a.empty() ? 0 : static_cast<int>(a[0].rows()); }
  int input_dim() const { return b_u.empty() ? 0 : static_cast<int>(b_u[0].cols()); }
  int disturbance_dim() const { return b_d.empty() ? 0 : static_cast<int>(b_d[0].cols()); }
  int observation_dim() const { return f_obs.empty() ? 0 : static_cast<int>(f_obs[0].rows()); }
  int quality_dim() const { return static_cast<int>(c_terminal.rows()); }

  // Throws LinearizationError on inconsistent sizes or non-finite entries.
  void Validate() const;
};

// Linearizes the one-step RK4 map about a nominal trajectory by central
// finite differences (relative step 1e-6, absolute floor 1e-8).
LtvMatrices Linearize(const Eigen::MatrixXd& nominal_x,
                      const Eigen::VectorXd& nominal_u,
                      const BatchTimeGrid& grid, const ReactorParams& params);

// Whole-batch form x = Phi x(0) + Psi_u u + Psi_d d, z = Omega x,
// y(T) = Gamma x, with x stacked over instants 1..T and u, d over 0..T-1.
struct LiftedBatchModel {
  LtvMatrices ltv;
  Eigen::MatrixXd phi;    // (n_x T) x n_x
  Eigen::MatrixXd psi_u;  // (n_x T) x (n_u T), block lower triangular
  Eigen::MatrixXd psi_d;  // (n_x T) x (n_d T)
  Eigen::MatrixXd omega;  // (n_z T) x (n_x T), block diagonal
  Eigen::MatrixXd gamma;  // n_y x (n_x T), last block column only

  int n_steps() const { return ltv.n_steps(); }
  int n_x() const { return ltv.state_dim(); }
  int n_u() const { return ltv.input_dim(); }
  int n_d() const { return ltv.disturbance_dim(); }
  int n_z() const { return ltv.observation_dim(); }
  int n_y() const { return ltv.quality_dim(); }
  int lifted_dim() const { return n_x() * n_steps(); }

  // t-th block columns Psi_u(t), Psi_d(t).
  auto PsiUColumn(int t) const { return psi_u.middleCols(t * n_u(), n_u()); }
  auto PsiDColumn(int t) const { return psi_d.middleCols(t * n_d(), n_d()); }
  // Rows of Omega that observe instant t (1..T).
  auto ObservationRows(int t) const {
    return omega.middleRows((t - 1) * n_z(), n_z());
  }
  // Block of a lifted vector holding x(t), t in 1..T.
  static auto StateBlock(const Eigen::VectorXd& lifted, int t, int n_x) {
    return lifted.segment((t - 1) * n_x, n_x);
  }
};

LiftedBatchModel BuildLifted(const LtvMatrices& ltv);

// x = Phi x0 + Psi_u u + Psi_d d. Throws Error on dimension mismatch.
Eigen::VectorXd PredictBatch(const LiftedBatchModel& model,
                             const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& d);

// x_prev + Psi_u delta_u.
Eigen::VectorXd IncrementalPredict(const LiftedBatchModel& model,
                                   const Eigen::VectorXd& x_prev,
                                   const Eigen::VectorXd& delta_u);

Json LiftedModelToJson(const LiftedBatchModel& model);
// Rebuilds from the stored LTV matrices and checks the stored lifted
// matrices agree exactly.
LiftedBatchModel LiftedModelFromJson(const Json& j);

// The linear surrogate of the reactor: the LTV recursion driven by the same
// disturbance and noise model as the plant. Used wherever the nonlinear
// plant must not be touched.
class LtvProcess : public BatchProcess {
 public:
  LtvProcess(const LtvMatrices& ltv, double initial_offset,
             const NoiseConfig& noise);

  ReactorState BeginBatch() override;
  Eigen::Vector2d Step(double flow) override;
  Eigen::Vector2d EndBatch() override;

  const ReactorState& TrueState() const override { return state_; }
  const BatchTrace& trace() const override { return trace_; }
  int step_index() const override { return t_; }
  int n_steps() const override { return ltv_.n_steps(); }

 private:
  LtvMatrices ltv_;
  DisturbanceModel disturbance_;
  Eigen::VectorXd deviation_;
  ReactorState state_;
  BatchTrace trace_;
  int t_ = 0;
  int batch_index_ = 0;
  bool in_batch_ = false;
};

}  // namespace batchloop

#endif  // BATCHLOOP_LIFTED_MODEL_H_
