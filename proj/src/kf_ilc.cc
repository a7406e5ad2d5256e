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

#include "batchloop/kf_ilc.h"

#include <cmath>
#include <string>
#include <utility>

#include "batchloop/box_qp.h"
#include "batchloop/common.h"

namespace batchloop {
namespace {

constexpr double kMaxInnovationCondition = 1e12;

struct MeasurementBlock {
  std::string name;
  int rows;
};

void Symmetrize(Eigen::MatrixXd& p) { p = 0.5 * (p + p.transpose()).eval(); }

void CheckSymmetricPsd(const Eigen::MatrixXd& m, const std::string& name) {
  if (m.rows() != m.cols()) throw ConfigError(name, "must be square");
  if (!m.allFinite()) throw ConfigError(name, "must be finite");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw ConfigError(name, "must be symmetric");
  }
  if (m.size() > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m);
    if (eig.eigenvalues().minCoeff() < -1e-12) {
      throw ConfigError(name, "must be positive semidefinite");
    }
  }
}

Eigen::MatrixXd BlockDiagonal(const std::vector<Eigen::MatrixXd>& blocks) {
  Eigen::Index n = 0;
  for (const auto& b : blocks) n += b.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
  Eigen::Index offset = 0;
  for (const auto& b : blocks) {
    out.block(offset, offset, b.rows(), b.cols()) = b;
    offset += b.rows();
  }
  return out;
}

// Generic measurement update x = x + K e, P = (I - K L) P with
// K = P L' S^-1, S = L P L' + R.
BatchKalmanState KalmanUpdate(const KalmanPrediction& pred,
                              const Eigen::MatrixXd& l,
                              const Eigen::MatrixXd& r,
                              const Eigen::VectorXd& measurement,
                              const std::vector<MeasurementBlock>& blocks,
                              UpdateDiagnostics* diagnostics) {
  const Eigen::MatrixXd pl = pred.p_pred * l.transpose();
  Eigen::MatrixXd s = l * pl + r;
  Symmetrize(s);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  const double condition =
      lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  if (!(condition <= kMaxInnovationCondition)) {
    Eigen::Index worst = 0;
    eig.eigenvectors().col(0).cwiseAbs().maxCoeff(&worst);
    std::string block_name = "?";
    Eigen::Index offset = 0;
    for (const auto& b : blocks) {
      if (worst < offset + b.rows) {
        block_name = b.name;
        break;
      }
      offset += b.rows;
    }
    throw EstimationError("innovation covariance is numerically singular "
                          "(condition " + FormatDouble(condition) +
                          "), offending block " + block_name);
  }
  const Eigen::MatrixXd k = s.ldlt().solve(pl.transpose()).transpose();
  const Eigen::VectorXd innovation = measurement - l * pred.x_pred;

  BatchKalmanState post;
  post.x_hat = pred.x_pred + k * innovation;
  const Eigen::Index n = pred.p_pred.rows();
  post.p = (Eigen::MatrixXd::Identity(n, n) - k * l) * pred.p_pred;
  Symmetrize(post.p);
  if (diagnostics) {
    diagnostics->innovation_norm = innovation.norm();
    diagnostics->condition_number = condition;
    diagnostics->trace_prior = pred.p_pred.trace();
    diagnostics->trace_posterior = post.p.trace();
  }
  return post;
}

void CheckLiftedState(const BatchKalmanState& state,
                      const LiftedBatchModel& model) {
  const int n = model.lifted_dim();
  if (state.x_hat.size() != n || state.p.rows() != n || state.p.cols() != n ||
      state.u_applied.size() != model.n_u() * model.n_steps()) {
    throw Error("Kalman state does not match the lifted model dimensions");
  }
}

// Box QP over the increments of instants first_step..T-1 about u_base.
IlcSolution SolveIlcQp(const Eigen::VectorXd& x_hat,
                       const Eigen::VectorXd& u_base,
                       const LiftedBatchModel& model,
                       const IlcObjective& objective, int first_step) {
  const int nu = model.n_u();
  const int total = nu * model.n_steps();
  if (first_step < 0 || first_step >= model.n_steps()) {
    throw Error("ILC step index " + std::to_string(first_step) +
                " outside [0, T-1]");
  }
  if (u_base.size() != total || x_hat.size() != model.lifted_dim() ||
      objective.quality_row.size() != model.lifted_dim()) {
    throw Error("ILC problem dimensions are inconsistent");
  }
  const int begin = first_step * nu;
  const int free = total - begin;
  const Eigen::MatrixXd psi = model.psi_u.middleCols(begin, free);
  const Eigen::RowVectorXd sensitivity = objective.quality_row * psi;
  const double offset = objective.nominal_quality +
                        objective.quality_row.dot(x_hat) - objective.setpoint;
  const Eigen::VectorXd u_free = u_base.segment(begin, free);

  // J(du) = w (offset + s du)^2 + k |u_free + du|^2 + const.
  const double w = objective.weight;
  const double k = objective.flow_cost;
  Eigen::MatrixXd hessian = 2.0 * w * sensitivity.transpose() * sensitivity;
  hessian.diagonal().array() += 2.0 * k;
  const Eigen::VectorXd linear =
      2.0 * w * offset * sensitivity.transpose() + 2.0 * k * u_free;
  const Eigen::VectorXd lower =
      (Eigen::VectorXd::Constant(free, objective.u_min) - u_free).cwiseMin(0.0);
  const Eigen::VectorXd upper =
      (Eigen::VectorXd::Constant(free, objective.u_max) - u_free).cwiseMax(0.0);

  ProjectedGradientOptions options;
  options.max_iters = objective.max_iters;
  options.tolerance = objective.tolerance;
  options.spectral_step = true;
  options.initial_step = 1.0 / hessian.diagonal().maxCoeff();
  const ProjectedGradientResult result = MinimizeBoxQp(
      hessian, linear, Eigen::VectorXd::Zero(free), lower, upper, options);
  if (result.termination != Termination::kProjectedGradient) {
    throw SolverError("ILC QP did not converge (" +
                      ToString(result.termination) + ", projected gradient " +
                      FormatDouble(result.projected_gradient_norm) + ")");
  }

  IlcSolution sol;
  sol.first_step = first_step;
  sol.delta_u = Eigen::VectorXd::Zero(total);
  sol.delta_u.segment(begin, free) = result.x;
  sol.u_next = u_base + sol.delta_u;
  sol.predicted_x = x_hat + psi * result.x;
  sol.predicted_j = objective.Evaluate(sol.predicted_x, sol.u_next);
  sol.iterations = result.iterations;
  sol.projected_gradient_norm = result.projected_gradient_norm;
  return sol;
}

}  // namespace

NoiseCovariances NoiseCovariances::FromNoiseConfig(const NoiseConfig& noise,
                                                   int n_d, int n_z, int n_y) {
  NoiseCovariances cov;
  cov.r_w = noise.var_w * Eigen::MatrixXd::Identity(n_d, n_d);
  cov.r_v = noise.var_v * Eigen::MatrixXd::Identity(n_d, n_d);
  cov.r_m = noise.var_m * Eigen::MatrixXd::Identity(n_z, n_z);
  cov.r_n = noise.var_n * Eigen::MatrixXd::Identity(n_y, n_y);
  return cov;
}

void NoiseCovariances::Validate() const {
  CheckSymmetricPsd(r_w, "noise.r_w");
  CheckSymmetricPsd(r_v, "noise.r_v");
  CheckSymmetricPsd(r_m, "noise.r_m");
  CheckSymmetricPsd(r_n, "noise.r_n");
  if (r_w.rows() != r_v.rows()) {
    throw ConfigError("noise.r_v", "must match the size of r_w");
  }
}

IlcObjective IlcObjective::ForReactor(const LiftedBatchModel& model,
                                      const Eigen::MatrixXd& nominal_x,
                                      const RtoConfig& rto) {
  IlcObjective obj;
  // Row 1 of the quality map is C_B.
  obj.quality_row = model.gamma.row(1);
  obj.nominal_quality = nominal_x(nominal_x.rows() - 1, kCb);
  obj.setpoint = rto.cb_setpoint;
  obj.weight = rto.volume;
  obj.flow_cost = rto.flow_cost;
  obj.u_min = rto.u_min;
  obj.u_max = rto.u_max;
  return obj;
}

double IlcObjective::Evaluate(const Eigen::VectorXd& x_lifted,
                              const Eigen::VectorXd& u_abs) const {
  const double error = nominal_quality + quality_row.dot(x_lifted) - setpoint;
  return weight * error * error + flow_cost * u_abs.squaredNorm();
}

KalmanPrediction B2bPredict(const BatchKalmanState& prev,
                            const Eigen::VectorXd& delta_u,
                            const LiftedBatchModel& model,
                            const NoiseCovariances& cov) {
  CheckLiftedState(prev, model);
  if (delta_u.size() != model.psi_u.cols()) {
    throw Error("input increment does not match the lifted model");
  }
  const std::vector<Eigen::MatrixXd> blocks(model.n_steps(),
                                            cov.DisturbanceIncrement());
  KalmanPrediction pred;
  pred.x_pred = prev.x_hat + model.psi_u * delta_u;
  pred.p_pred =
      prev.p + model.psi_d * BlockDiagonal(blocks) * model.psi_d.transpose();
  Symmetrize(pred.p_pred);
  return pred;
}

BatchKalmanState B2bUpdate(const KalmanPrediction& pred,
                           const Eigen::VectorXd& z,
                           const Eigen::VectorXd& y_terminal,
                           const Eigen::VectorXd& u_applied,
                           const LiftedBatchModel& model,
                           const NoiseCovariances& cov,
                           UpdateDiagnostics* diagnostics) {
  const int n_steps = model.n_steps();
  if (z.size() != model.omega.rows() || y_terminal.size() != model.n_y()) {
    throw Error("batch measurements do not match the lifted model");
  }
  Eigen::MatrixXd l(model.omega.rows() + model.gamma.rows(),
                    model.lifted_dim());
  l << model.omega, model.gamma;
  std::vector<Eigen::MatrixXd> r_blocks(n_steps, cov.r_m);
  r_blocks.push_back(cov.r_n);
  std::vector<MeasurementBlock> names;
  for (int t = 1; t <= n_steps; ++t) {
    names.push_back({"z(" + std::to_string(t) + ")", model.n_z()});
  }
  names.push_back({"y(T)", model.n_y()});
  Eigen::VectorXd measurement(l.rows());
  measurement << z, y_terminal;
  BatchKalmanState post = KalmanUpdate(pred, l, BlockDiagonal(r_blocks),
                                       measurement, names, diagnostics);
  post.u_applied = u_applied;
  return post;
}

IlcSolution B2bIlcSolve(const BatchKalmanState& state,
                        const LiftedBatchModel& model,
                        const IlcObjective& objective) {
  CheckLiftedState(state, model);
  return SolveIlcQp(state.x_hat, state.u_applied, model, objective, 0);
}

KalmanPrediction WbPredict(const BatchKalmanState& state, double delta_u_t,
                           const LiftedBatchModel& model,
                           const NoiseCovariances& cov, int t) {
  CheckLiftedState(state, model);
  if (t < 0 || t >= model.n_steps()) {
    throw Error("within-batch prediction index outside [0, T-1]");
  }
  const Eigen::MatrixXd psi_d = model.PsiDColumn(t);
  KalmanPrediction pred;
  pred.x_pred = state.x_hat + model.PsiUColumn(t) * delta_u_t;
  pred.p_pred =
      state.p + psi_d * cov.DisturbanceIncrement() * psi_d.transpose();
  Symmetrize(pred.p_pred);
  return pred;
}

BatchKalmanState WbUpdate(const KalmanPrediction& pred,
                          const Eigen::VectorXd& z_t,
                          const std::optional<Eigen::VectorXd>& y_terminal,
                          const Eigen::VectorXd& u_applied,
                          const LiftedBatchModel& model,
                          const NoiseCovariances& cov, int t,
                          UpdateDiagnostics* diagnostics) {
  if (t < 1 || t > model.n_steps()) {
    throw Error("within-batch update index outside [1, T]");
  }
  if (z_t.size() != model.n_z()) {
    throw Error("observation does not match the lifted model");
  }
  const bool with_quality = y_terminal.has_value();
  if (with_quality && (t != model.n_steps() ||
                       y_terminal->size() != model.n_y())) {
    throw Error("terminal quality is only available at t = T");
  }
  const int rows = model.n_z() + (with_quality ? model.n_y() : 0);
  Eigen::MatrixXd l(rows, model.lifted_dim());
  Eigen::VectorXd measurement(rows);
  std::vector<Eigen::MatrixXd> r_blocks{cov.r_m};
  std::vector<MeasurementBlock> names{{"z(" + std::to_string(t) + ")",
                                       model.n_z()}};
  if (with_quality) {
    l << model.ObservationRows(t), model.gamma;
    measurement << z_t, *y_terminal;
    r_blocks.push_back(cov.r_n);
    names.push_back({"y(T)", model.n_y()});
  } else {
    l = model.ObservationRows(t);
    measurement = z_t;
  }
  BatchKalmanState post = KalmanUpdate(pred, l, BlockDiagonal(r_blocks),
                                       measurement, names, diagnostics);
  post.u_applied = u_applied;
  return post;
}

IlcSolution WbIlcSolve(const BatchKalmanState& state,
                       const Eigen::VectorXd& u_h,
                       const LiftedBatchModel& model,
                       const IlcObjective& objective, int t) {
  CheckLiftedState(state, model);
  return SolveIlcQp(state.x_hat, u_h, model, objective, t);
}

BatchKalmanState InitialPosterior(const LiftedBatchModel& model,
                                  const Eigen::VectorXd& u_nominal,
                                  double p0) {
  if (!(p0 > 0.0)) throw ConfigError("kf_ilc.p0", "must be positive");
  const int n = model.lifted_dim();
  BatchKalmanState state;
  state.x_hat = Eigen::VectorXd::Zero(n);
  state.p = p0 * Eigen::MatrixXd::Identity(n, n);
  state.u_applied = u_nominal;
  CheckLiftedState(state, model);
  return state;
}

BatchKalmanState HierarchicalInit(const BatchKalmanState& b2b_posterior) {
  return b2b_posterior;
}

Json InformerSummaryToJson(const InformerBatchSummary& summary) {
  return Json{{"trace_p", summary.trace_p},
              {"innovation_norms", summary.innovation_norms},
              {"b2b_innovation_norm", summary.b2b_innovation_norm},
              {"ilc_objective", summary.ilc_objective},
              {"applied", VectorToJson(summary.applied)}};
}

HierarchicalIlc::HierarchicalIlc(const LiftedBatchModel& model,
                                 const NoiseCovariances& cov,
                                 const IlcObjective& objective,
                                 const KfIlcConfig& cfg)
    : model_(model), cov_(cov), objective_(objective), cfg_(cfg) {
  cov_.Validate();
  objective_.max_iters = cfg.qp_max_iters;
  objective_.tolerance = cfg.qp_tolerance;
  if (model_.ltv.nominal_x.rows() != model_.n_steps() + 1 ||
      model_.ltv.nominal_u.size() != model_.n_steps() * model_.n_u()) {
    throw Error("the informer needs a lifted model carrying its nominal");
  }
  outer_ = InitialPosterior(model_, model_.ltv.nominal_u, cfg_.p0);
}

void HierarchicalIlc::StartBatch() {
  if (in_batch_) throw Error("StartBatch called inside an open batch");
  inner_ = HierarchicalInit(outer_);
  z_dev_ = Eigen::VectorXd::Zero(model_.omega.rows());
  y_dev_ = Eigen::VectorXd::Zero(model_.n_y());
  summary_ = InformerBatchSummary{};
  t_ = 0;
  in_batch_ = true;
  action_ready_ = false;
}

double HierarchicalIlc::ComputeAction() {
  if (!in_batch_ || t_ >= model_.n_steps()) {
    throw Error("ComputeAction called outside an open batch");
  }
  if (!action_ready_) {
    const IlcSolution sol =
        WbIlcSolve(inner_, inner_.u_applied, model_, objective_, t_);
    if (t_ == 0) summary_.ilc_objective = sol.predicted_j;
    pending_action_ = sol.applied();
    action_ready_ = true;
  }
  return pending_action_;
}

void HierarchicalIlc::Advance(double applied, const Eigen::Vector2d& z,
                              const std::optional<Eigen::Vector2d>& y) {
  if (!in_batch_ || t_ >= model_.n_steps()) {
    throw Error("Advance called outside an open batch");
  }
  const int n = model_.n_steps();
  const double delta = applied - inner_.u_applied[t_];
  KalmanPrediction pred = WbPredict(inner_, delta, model_, cov_, t_);
  Eigen::VectorXd u_h = inner_.u_applied;
  u_h[t_] = applied;
  ++t_;

  const Eigen::VectorXd nominal_state =
      model_.ltv.nominal_x.row(t_).transpose();
  const Eigen::VectorXd z_dev = z - model_.ltv.f_obs[t_ - 1] * nominal_state;
  z_dev_.segment((t_ - 1) * model_.n_z(), model_.n_z()) = z_dev;
  std::optional<Eigen::VectorXd> y_dev;
  if (y.has_value()) {
    if (t_ != n) throw Error("terminal quality passed before the final step");
    y_dev = Eigen::VectorXd(*y - model_.ltv.c_terminal * nominal_state);
    y_dev_ = *y_dev;
  } else if (t_ == n) {
    throw Error("the final step needs the terminal quality measurement");
  }
  UpdateDiagnostics diag;
  inner_ = WbUpdate(pred, z_dev, y_dev, u_h, model_, cov_, t_, &diag);
  summary_.innovation_norms.push_back(diag.innovation_norm);
  action_ready_ = false;
}

InformerBatchSummary HierarchicalIlc::FinishBatch() {
  if (!in_batch_ || t_ != model_.n_steps()) {
    throw Error("FinishBatch called before the batch finished");
  }
  const KalmanPrediction pred = B2bPredict(
      outer_, inner_.u_applied - outer_.u_applied, model_, cov_);
  UpdateDiagnostics diag;
  outer_ = B2bUpdate(pred, z_dev_, y_dev_, inner_.u_applied, model_, cov_,
                     &diag);
  summary_.trace_p = outer_.p.trace();
  summary_.b2b_innovation_norm = diag.innovation_norm;
  summary_.applied = inner_.u_applied;
  in_batch_ = false;
  ++batches_;
  return summary_;
}

ReactorState HierarchicalIlc::EstimatedState() const {
  ReactorState x = model_.ltv.nominal_x.row(t_).transpose();
  if (t_ > 0) {
    x += LiftedBatchModel::StateBlock(in_batch_ ? inner_.x_hat : outer_.x_hat,
                                      t_, model_.n_x());
  }
  return x;
}

}  // namespace batchloop
