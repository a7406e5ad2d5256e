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

#include "batchloop/lifted_model.h"

#include <cmath>
#include <string>

namespace batchloop {
namespace {

double FdStep(double value) { return std::max(1e-6 * std::abs(value), 1e-8); }

void CheckSize(const Eigen::MatrixXd& m, Eigen::Index rows, Eigen::Index cols,
               const std::string& what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw LinearizationError(what + " is " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()) + ", expected " +
                             std::to_string(rows) + "x" +
                             std::to_string(cols));
  }
  if (!m.allFinite()) throw LinearizationError(what + " has non-finite entries");
}

void RequireSize(Eigen::Index actual, Eigen::Index expected, const char* what) {
  if (actual != expected) {
    throw Error(std::string(what) + " has dimension " + std::to_string(actual) +
                ", expected " + std::to_string(expected));
  }
}

}  // namespace

void LtvMatrices::Validate() const {
  const int n = n_steps();
  if (n < 1) throw LinearizationError("LTV model has no time steps");
  if (static_cast<int>(b_u.size()) != n || static_cast<int>(b_d.size()) != n ||
      static_cast<int>(f_obs.size()) != n) {
    throw LinearizationError("LTV matrix lists differ in length");
  }
  const int nx = state_dim();
  for (int t = 0; t < n; ++t) {
    const std::string at = "[" + std::to_string(t) + "]";
    CheckSize(a[t], nx, nx, "A" + at);
    CheckSize(b_u[t], nx, input_dim(), "B_u" + at);
    CheckSize(b_d[t], nx, disturbance_dim(), "B_d" + at);
    CheckSize(f_obs[t], observation_dim(), nx, "F" + at);
  }
  CheckSize(c_terminal, quality_dim(), nx, "C_T");
}

LtvMatrices Linearize(const Eigen::MatrixXd& nominal_x,
                      const Eigen::VectorXd& nominal_u,
                      const BatchTimeGrid& grid, const ReactorParams& params) {
  const int n = grid.n_steps;
  if (nominal_x.rows() != n + 1 || nominal_x.cols() != kStateDim ||
      nominal_u.size() != n) {
    throw LinearizationError("nominal trajectory does not match the grid");
  }
  auto step = [&](const ReactorState& x, double u, double d) {
    return IntegrateStepRaw(x, u, params.tj0_nominal + d, grid, params);
  };

  LtvMatrices ltv;
  ltv.nominal_x = nominal_x;
  ltv.nominal_u = nominal_u;
  Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(kObservationDim, kStateDim);
  selector(0, kTemp) = 1.0;
  selector(1, kJacketTemp) = 1.0;
  ltv.c_terminal = Eigen::MatrixXd::Zero(kQualityDim, kStateDim);
  ltv.c_terminal(0, kCa) = 1.0;
  ltv.c_terminal(1, kCb) = 1.0;

  for (int t = 0; t < n; ++t) {
    const ReactorState x = nominal_x.row(t).transpose();
    const double u = nominal_u[t];
    Eigen::MatrixXd a(kStateDim, kStateDim);
    for (int j = 0; j < kStateDim; ++j) {
      const double h = FdStep(x[j]);
      ReactorState xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      a.col(j) = (step(xp, u, 0.0) - step(xm, u, 0.0)) / (2.0 * h);
    }
    const double hu = FdStep(u);
    Eigen::MatrixXd b_u =
        (step(x, u + hu, 0.0) - step(x, u - hu, 0.0)) / (2.0 * hu);
    const double hd = FdStep(0.0);
    Eigen::MatrixXd b_d =
        (step(x, u, hd) - step(x, u, -hd)) / (2.0 * hd);
    if (!a.allFinite() || !b_u.allFinite() || !b_d.allFinite()) {
      throw LinearizationError("non-finite Jacobian at step " +
                               std::to_string(t));
    }
    ltv.a.push_back(std::move(a));
    ltv.b_u.push_back(std::move(b_u));
    ltv.b_d.push_back(std::move(b_d));
    ltv.f_obs.push_back(selector);
  }
  ltv.Validate();
  return ltv;
}

LiftedBatchModel BuildLifted(const LtvMatrices& ltv) {
  ltv.Validate();
  const int n = ltv.n_steps();
  const int nx = ltv.state_dim();
  const int nu = ltv.input_dim();
  const int nd = ltv.disturbance_dim();
  const int nz = ltv.observation_dim();

  LiftedBatchModel model;
  model.ltv = ltv;
  model.phi.resize(nx * n, nx);
  model.psi_u = Eigen::MatrixXd::Zero(nx * n, nu * n);
  model.psi_d = Eigen::MatrixXd::Zero(nx * n, nd * n);
  model.omega = Eigen::MatrixXd::Zero(nz * n, nx * n);
  model.gamma = Eigen::MatrixXd::Zero(ltv.quality_dim(), nx * n);

  Eigen::MatrixXd product = ltv.a[0];
  model.phi.topRows(nx) = product;
  for (int r = 1; r < n; ++r) {
    product = ltv.a[r] * product;
    model.phi.middleRows(r * nx, nx) = product;
  }

  // Block (r, j) = A(r) ... A(j+1) B(j) for r >= j.
  for (int j = 0; j < n; ++j) {
    Eigen::MatrixXd bu = ltv.b_u[j];
    Eigen::MatrixXd bd = ltv.b_d[j];
    model.psi_u.block(j * nx, j * nu, nx, nu) = bu;
    model.psi_d.block(j * nx, j * nd, nx, nd) = bd;
    for (int r = j + 1; r < n; ++r) {
      bu = ltv.a[r] * bu;
      bd = ltv.a[r] * bd;
      model.psi_u.block(r * nx, j * nu, nx, nu) = bu;
      model.psi_d.block(r * nx, j * nd, nx, nd) = bd;
    }
  }

  for (int r = 0; r < n; ++r) {
    model.omega.block(r * nz, r * nx, nz, nx) = ltv.f_obs[r];
  }
  model.gamma.rightCols(nx) = ltv.c_terminal;
  return model;
}

Eigen::VectorXd PredictBatch(const LiftedBatchModel& model,
                             const Eigen::VectorXd& x0,
                             const Eigen::VectorXd& u,
                             const Eigen::VectorXd& d) {
  RequireSize(x0.size(), model.n_x(), "x0");
  RequireSize(u.size(), model.psi_u.cols(), "u");
  RequireSize(d.size(), model.psi_d.cols(), "d");
  return model.phi * x0 + model.psi_u * u + model.psi_d * d;
}

Eigen::VectorXd IncrementalPredict(const LiftedBatchModel& model,
                                   const Eigen::VectorXd& x_prev,
                                   const Eigen::VectorXd& delta_u) {
  RequireSize(x_prev.size(), model.lifted_dim(), "x_prev");
  RequireSize(delta_u.size(), model.psi_u.cols(), "delta_u");
  return x_prev + model.psi_u * delta_u;
}

Json LiftedModelToJson(const LiftedBatchModel& model) {
  const LtvMatrices& ltv = model.ltv;
  auto list = [](const std::vector<Eigen::MatrixXd>& ms) {
    Json out = Json::array();
    for (const auto& m : ms) out.push_back(MatrixToJson(m));
    return out;
  };
  return Json{
      {"format", "batchloop-lifted-model"},
      {"version", 1},
      {"dims",
       {{"n_steps", model.n_steps()},
        {"n_x", model.n_x()},
        {"n_u", model.n_u()},
        {"n_d", model.n_d()},
        {"n_z", model.n_z()},
        {"n_y", model.n_y()}}},
      {"ltv",
       {{"A", list(ltv.a)},
        {"B_u", list(ltv.b_u)},
        {"B_d", list(ltv.b_d)},
        {"F", list(ltv.f_obs)},
        {"C_T", MatrixToJson(ltv.c_terminal)},
        {"nominal_x", MatrixToJson(ltv.nominal_x)},
        {"nominal_u", VectorToJson(ltv.nominal_u)}}},
      {"lifted",
       {{"Phi", MatrixToJson(model.phi)},
        {"Psi_u", MatrixToJson(model.psi_u)},
        {"Psi_d", MatrixToJson(model.psi_d)},
        {"Omega", MatrixToJson(model.omega)},
        {"Gamma", MatrixToJson(model.gamma)}}}};
}

LiftedBatchModel LiftedModelFromJson(const Json& j) {
  if (j.value("format", "") != "batchloop-lifted-model" ||
      j.value("version", 0) != 1) {
    throw Error("not a version-1 lifted model document");
  }
  const Json& l = j.at("ltv");
  auto list = [](const Json& arr) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& m : arr) out.push_back(MatrixFromJson(m));
    return out;
  };
  LtvMatrices ltv;
  ltv.a = list(l.at("A"));
  ltv.b_u = list(l.at("B_u"));
  ltv.b_d = list(l.at("B_d"));
  ltv.f_obs = list(l.at("F"));
  ltv.c_terminal = MatrixFromJson(l.at("C_T"));
  ltv.nominal_x = MatrixFromJson(l.at("nominal_x"));
  ltv.nominal_u = VectorFromJson(l.at("nominal_u"));
  LiftedBatchModel model = BuildLifted(ltv);
  const Json& lifted = j.at("lifted");
  if (MatrixFromJson(lifted.at("Psi_u")) != model.psi_u ||
      MatrixFromJson(lifted.at("Phi")) != model.phi) {
    throw Error("lifted model document is inconsistent with its LTV matrices");
  }
  return model;
}

LtvProcess::LtvProcess(const LtvMatrices& ltv, double initial_offset,
                       const NoiseConfig& noise)
    : ltv_(ltv),
      disturbance_(ltv.n_steps(), initial_offset, noise),
      deviation_(Eigen::VectorXd::Zero(ltv.state_dim())) {
  ltv_.Validate();
  noise.Validate();
  if (ltv_.state_dim() != kStateDim || ltv_.observation_dim() != 2 ||
      ltv_.quality_dim() != 2 || ltv_.nominal_x.rows() != ltv_.n_steps() + 1) {
    throw Error("LtvProcess needs a reactor-shaped LTV model with nominals");
  }
  state_ = ltv_.nominal_x.row(0).transpose();
}

ReactorState LtvProcess::BeginBatch() {
  const int n = ltv_.n_steps();
  deviation_.setZero();
  state_ = ltv_.nominal_x.row(0).transpose();
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

Eigen::Vector2d LtvProcess::Step(double flow) {
  if (!in_batch_ || t_ >= ltv_.n_steps()) {
    throw Error("LtvProcess::Step called outside an open batch");
  }
  if (!(flow >= kFlowMin && flow <= kFlowMax)) {
    throw ConstraintError("coolant flow " + FormatDouble(flow) +
                          " L/s outside [0, 10] at step " +
                          std::to_string(t_));
  }
  Eigen::VectorXd du(1), d(1);
  du[0] = flow - ltv_.nominal_u[t_];
  d[0] = trace_.disturbance[t_];
  deviation_ = ltv_.a[t_] * deviation_ + ltv_.b_u[t_] * du + ltv_.b_d[t_] * d;
  trace_.flows[t_] = flow;
  state_ = ltv_.nominal_x.row(t_ + 1).transpose() + deviation_;
  const Eigen::Vector2d clean = ltv_.f_obs[t_] * state_;
  ++t_;
  trace_.states.row(t_) = state_.transpose();
  const Eigen::Vector2d z = disturbance_.NoisyObservation(clean);
  trace_.observations.row(t_ - 1) = z.transpose();
  return z;
}

Eigen::Vector2d LtvProcess::EndBatch() {
  if (!in_batch_ || t_ != ltv_.n_steps()) {
    throw Error("LtvProcess::EndBatch called before the batch finished");
  }
  trace_.quality =
      disturbance_.NoisyQuality(ltv_.c_terminal * state_);
  trace_.drift = disturbance_.EndBatch();
  in_batch_ = false;
  ++batch_index_;
  return trace_.quality;
}

}  // namespace batchloop
