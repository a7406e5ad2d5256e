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

#ifndef BATCHLOOP_MLP_H_
#define BATCHLOOP_MLP_H_

#include <vector>

#include <Eigen/Dense>

#include "batchloop/common.h"
#include "batchloop/json_util.h"

namespace batchloop {

// Fully connected network with tanh hidden layers and a linear output
// layer. All weights and biases live in one flat vector so optimizers and
// checkpoints treat the network as a single tensor.
class Mlp {
 public:
  // Activations of one batched forward pass, kept for the backward pass.
  struct Cache {
    std::vector<Eigen::MatrixXd> activations;  // input, hidden..., output
  };

  Mlp() = default;
  // `layer_sizes` = {inputs, hidden..., outputs}.
  explicit Mlp(std::vector<int> layer_sizes);

  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
  void InitializeFanIn(Rng& rng);

  // Inputs are columns. Returns outputs as columns.
  Eigen::MatrixXd Forward(const Eigen::MatrixXd& inputs,
                          Cache* cache = nullptr) const;
  // Gradient of sum(output_grad .* output) with respect to the parameters.
  Eigen::VectorXd Backward(const Cache& cache,
                           const Eigen::MatrixXd& output_grad) const;

  const std::vector<int>& layer_sizes() const { return sizes_; }
  int num_layers() const { return static_cast<int>(sizes_.size()) - 1; }
  Eigen::Index num_params() const { return params_.size(); }
  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }
  // Offsets of the weight matrix and bias of layer `l` in params().
  Eigen::Index WeightOffset(int l) const { return offsets_[l]; }
  Eigen::Index BiasOffset(int l) const {
    return offsets_[l] + Eigen::Index{sizes_[l]} * sizes_[l + 1];
  }

 private:
  Eigen::Map<const Eigen::MatrixXd> Weight(int l) const;
  Eigen::Map<const Eigen::VectorXd> Bias(int l) const;

  std::vector<int> sizes_;
  std::vector<Eigen::Index> offsets_;
  Eigen::VectorXd params_;
};

Json MlpToJson(const Mlp& net);
Mlp MlpFromJson(const Json& j);

// Adaptive moment estimation minimizing a loss.
class Adam {
 public:
  Adam() = default;
  Adam(Eigen::Index n, double learning_rate, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  void Step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::VectorXd& grad);

  double learning_rate() const { return lr_; }
  long steps() const { return t_; }
  Json ToJson() const;
  static Adam FromJson(const Json& j);

 private:
  double lr_ = 1e-3;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long t_ = 0;
  Eigen::VectorXd m_;
  Eigen::VectorXd v_;
};

}  // namespace batchloop

#endif  // BATCHLOOP_MLP_H_
