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

#ifndef BATCHLOOP_BOX_QP_H_
#define BATCHLOOP_BOX_QP_H_

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace batchloop {

// Objective callback: returns f(x) and, when `gradient` is non-null, fills it.
using ObjectiveFn =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* gradient)>;

enum class Termination {
  kProjectedGradient,  // ||x - P(x - g)|| below tolerance
  kStalled,            // objective decrease over the window below threshold
  kMaxIterations,
  kLineSearchFailed,   // no descent possible at machine precision
};

std::string ToString(Termination t);

struct ProjectedGradientOptions {
  int max_iters = 10000;
  double tolerance = 1e-8;       // on the projected-gradient norm
  double initial_step = 1.0;
  double armijo = 1e-4;
  int stall_window = 0;          // 0 disables the stall test
  double stall_threshold = 1e-8;
  int max_backtracks = 60;
  // Barzilai-Borwein trial step after each accepted iterate instead of
  // doubling the previous step.
  bool spectral_step = false;
};

struct ProjectedGradientResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  double projected_gradient_norm = 0.0;
  Termination termination = Termination::kMaxIterations;
  std::vector<double> history;  // objective after every accepted iterate
};

Eigen::VectorXd ProjectOntoBox(const Eigen::VectorXd& x,
                               const Eigen::VectorXd& lower,
                               const Eigen::VectorXd& upper);

double ProjectedGradientNorm(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& gradient,
                             const Eigen::VectorXd& lower,
                             const Eigen::VectorXd& upper);

// Projected gradient descent with Armijo backtracking along the projection
// arc. The objective sequence is non-increasing by construction. x0 is
// projected before the first evaluation.
ProjectedGradientResult MinimizeProjectedGradient(
    const ObjectiveFn& objective, const Eigen::VectorXd& x0,
    const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
    const ProjectedGradientOptions& options);

// Minimizes 0.5 x'Hx + b'x over the box with the same projected-gradient
// iteration, but measures each decrease from the quadratic model directly so
// that convergence is not limited by cancellation in the objective value.
// `value` and `history` are reported relative to the constant-free objective.
ProjectedGradientResult MinimizeBoxQp(const Eigen::MatrixXd& hessian,
                                      const Eigen::VectorXd& linear,
                                      const Eigen::VectorXd& x0,
                                      const Eigen::VectorXd& lower,
                                      const Eigen::VectorXd& upper,
                                      const ProjectedGradientOptions& options);

}  // namespace batchloop

#endif  // BATCHLOOP_BOX_QP_H_
