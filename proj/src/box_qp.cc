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

#include "batchloop/box_qp.h"

#include <algorithm>
#include <cmath>

#include "batchloop/common.h"

namespace batchloop {

std::string ToString(Termination t) {
  switch (t) {
    case Termination::kProjectedGradient:
      return "projected_gradient";
    case Termination::kStalled:
      return "stalled";
    case Termination::kMaxIterations:
      return "max_iterations";
    case Termination::kLineSearchFailed:
      return "line_search_failed";
  }
  return "unknown";
}

Eigen::VectorXd ProjectOntoBox(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper) {
  return x.cwiseMax(lower).cwiseMin(upper);
}

double ProjectedGradientNorm(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& gradient,
                             const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper) {
  return (x - ProjectOntoBox(x - gradient, lower, upper)).norm();
}

ProjectedGradientResult MinimizeProjectedGradient(
    const ObjectiveFn& objective, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const ProjectedGradientOptions& options) {
  if (lower.size() != x0.size() || upper.size() != x0.size()) {
    throw Error("box bounds do not match the decision vector");
  }
  if ((lower.array() > upper.array()).any()) {
    throw Error("box lower bound exceeds upper bound");
  }

  ProjectedGradientResult result;
  Eigen::VectorXd x = ProjectOntoBox(x0, lower, upper);
  Eigen::VectorXd g(x.size());
  double f = objective(x, &g);
  if (!std::isfinite(f) || !g.allFinite()) {
    throw SolverError("objective is not finite at the initial point");
  }
  result.history.push_back(f);
  double step = options.initial_step;

  for (int iter = 0;; ++iter) {
    result.projected_gradient_norm = ProjectedGradientNorm(x, g, lower, upper);
    result.iterations = iter;
    if (result.projected_gradient_norm < options.tolerance) {
      result.termination = Termination::kProjectedGradient;
      break;
    }
    if (options.stall_window > 0 &&
        static_cast<int>(result.history.size()) > options.stall_window) {
      const double earlier =
          result.history[result.history.size() - 1 - options.stall_window];
      if (earlier - f < options.stall_threshold) {
        result.termination = Termination::kStalled;
        break;
      }
    }
    if (iter >= options.max_iters) {
      result.termination = Termination::kMaxIterations;
      break;
    }

    bool accepted = false;
    Eigen::VectorXd x_new;
    double f_new = f;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = ProjectOntoBox(x - step * g, lower, upper);
      const Eigen::VectorXd dx = x_new - x;
      if (dx.squaredNorm() == 0.0) break;
      f_new = objective(x_new, nullptr);
      if (std::isfinite(f_new) && f_new <= f + options.armijo * g.dot(dx)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.termination = Termination::kLineSearchFailed;
      break;
    }
    const Eigen::VectorXd g_old = g;
    const Eigen::VectorXd s = x_new - x;
    x = std::move(x_new);
    f = objective(x, &g);
    if (!g.allFinite()) throw SolverError("gradient became non-finite");
    result.history.push_back(f);
    const double sy = s.dot(g - g_old);
    if (options.spectral_step && sy > 0.0) {
      step = std::clamp(s.squaredNorm() / sy, 1e-12, 1e12);
    } else {
      step = std::min(step * 2.0, options.initial_step * 1e6);
    }
  }

  result.x = std::move(x);
  result.value = f;
  return result;
}

ProjectedGradientResult MinimizeBoxQp(const Eigen::MatrixXd& hessian,
                                      const Eigen::VectorXd& linear,
                                      const Eigen::VectorXd& x0,
                                      const Eigen::VectorXd& lower,
                                      const Eigen::VectorXd& upper,
                                      const ProjectedGradientOptions& options) {
  const Eigen::Index n = x0.size();
  if (hessian.rows() != n || hessian.cols() != n || linear.size() != n ||
      lower.size() != n || upper.size() != n) {
    throw Error("box QP dimensions are inconsistent");
  }
  if ((lower.array() > upper.array()).any()) {
    throw Error("box lower bound exceeds upper bound");
  }
  if (!hessian.allFinite() || !linear.allFinite()) {
    throw SolverError("box QP data is not finite");
  }

  ProjectedGradientResult result;
  Eigen::VectorXd x = ProjectOntoBox(x0, lower, upper);
  Eigen::VectorXd hx = hessian * x;
  Eigen::VectorXd g = hx + linear;
  double f = 0.5 * x.dot(hx) + linear.dot(x);
  result.history.push_back(f);
  double step = options.initial_step;

  for (int iter = 0;; ++iter) {
    result.projected_gradient_norm = ProjectedGradientNorm(x, g, lower, upper);
    result.iterations = iter;
    if (result.projected_gradient_norm < options.tolerance) {
      result.termination = Termination::kProjectedGradient;
      break;
    }
    if (iter >= options.max_iters) {
      result.termination = Termination::kMaxIterations;
      break;
    }
    bool accepted = false;
    Eigen::VectorXd dx, hdx;
    double decrease = 0.0;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      dx = ProjectOntoBox(x - step * g, lower, upper) - x;
      if (dx.squaredNorm() == 0.0) break;
      hdx = hessian * dx;
      const double gdx = g.dot(dx);
      decrease = gdx + 0.5 * dx.dot(hdx);
      if (decrease <= options.armijo * gdx) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      result.termination = Termination::kLineSearchFailed;
      break;
    }
    x += dx;
    g += hdx;
    f += decrease;
    result.history.push_back(f);
    const double sy = dx.dot(hdx);
    if (options.spectral_step && sy > 0.0) {
      step = std::clamp(dx.squaredNorm() / sy, 1e-12, 1e12);
    } else {
      step = std::min(step * 2.0, options.initial_step * 1e6);
    }
    // Refresh the gradient periodically to shed accumulated roundoff.
    if (iter % 50 == 49) g = hessian * x + linear;
  }

  result.x = std::move(x);
  result.value = 0.5 * result.x.dot(hessian * result.x) + linear.dot(result.x);
  return result;
}

}  // namespace batchloop
