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

#include "batchloop/mlp.h"

#include <cmath>
#include <utility>

namespace batchloop {

Mlp::Mlp(std::vector<int> layer_sizes) : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) throw Error("an MLP needs at least two layer sizes");
  Eigen::Index total = 0;
  for (int l = 0; l + 1 < static_cast<int>(sizes_.size()); ++l) {
    if (sizes_[l] < 1 || sizes_[l + 1] < 1) {
      throw Error("MLP layer sizes must be positive");
    }
    offsets_.push_back(total);
    total += Eigen::Index{sizes_[l]} * sizes_[l + 1] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(total);
}

void Mlp::InitializeFanIn(Rng& rng) {
  for (int l = 0; l < num_layers(); ++l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
    const Eigen::Index begin = offsets_[l];
    const Eigen::Index end = BiasOffset(l) + sizes_[l + 1];
    for (Eigen::Index i = begin; i < end; ++i) {
      params_[i] = rng.Uniform(-bound, bound);
    }
  }
}

Eigen::Map<const Eigen::MatrixXd> Mlp::Weight(int l) const {
  return {params_.data() + offsets_[l], sizes_[l + 1], sizes_[l]};
}

Eigen::Map<const Eigen::VectorXd> Mlp::Bias(int l) const {
  return {params_.data() + BiasOffset(l), sizes_[l + 1]};
}

Eigen::MatrixXd Mlp::Forward(const Eigen::MatrixXd& inputs,
                             Cache* cache) const {
  if (inputs.rows() != sizes_.front()) {
    throw Error("MLP input has " + std::to_string(inputs.rows()) +
                " rows, expected " + std::to_string(sizes_.front()));
  }
  if (cache) {
    cache->activations.clear();
    cache->activations.push_back(inputs);
  }
  Eigen::MatrixXd h = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd next = Weight(l) * h;
    next.colwise() += Bias(l);
    if (l + 1 < num_layers()) next = next.array().tanh().matrix();
    h = std::move(next);
    if (cache) cache->activations.push_back(h);
  }
  if (!h.allFinite()) throw NumericalError("non-finite MLP activation");
  return h;
}

Eigen::VectorXd Mlp::Backward(const Cache& cache,
                              const Eigen::MatrixXd& output_grad) const {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params_.size());
  Eigen::MatrixXd delta = output_grad;
  for (int l = num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = cache.activations[l];
    Eigen::Map<Eigen::MatrixXd>(grad.data() + offsets_[l], sizes_[l + 1],
                                sizes_[l]) = delta * input.transpose();
    grad.segment(BiasOffset(l), sizes_[l + 1]) = delta.rowwise().sum();
    if (l > 0) {
      // input holds tanh activations of the previous layer.
      delta = (Weight(l).transpose() * delta).array() *
              (1.0 - input.array().square());
    }
  }
  return grad;
}

Json MlpToJson(const Mlp& net) {
  return Json{{"layer_sizes", net.layer_sizes()},
              {"params", VectorToJson(net.params())}};
}

Mlp MlpFromJson(const Json& j) {
  Mlp net(j.at("layer_sizes").get<std::vector<int>>());
  const Eigen::VectorXd params = VectorFromJson(j.at("params"));
  if (params.size() != net.num_params()) {
    throw Error("MLP checkpoint parameter count does not match its layers");
  }
  net.params() = params;
  return net;
}

Adam::Adam(Eigen::Index n, double learning_rate, double beta1, double beta2,
           double epsilon)
    : lr_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      eps_(epsilon),
      m_(Eigen::VectorXd::Zero(n)),
      v_(Eigen::VectorXd::Zero(n)) {}

void Adam::Step(Eigen::Ref<Eigen::VectorXd> params,
                const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) {
    throw Error("Adam step size mismatch");
  }
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  params.array() -=
      lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

Json Adam::ToJson() const {
  return Json{{"learning_rate", lr_}, {"beta1", beta1_}, {"beta2", beta2_},
              {"epsilon", eps_},      {"steps", t_},     {"m", VectorToJson(m_)},
              {"v", VectorToJson(v_)}};
}

Adam Adam::FromJson(const Json& j) {
  Adam adam;
  adam.lr_ = j.at("learning_rate").get<double>();
  adam.beta1_ = j.at("beta1").get<double>();
  adam.beta2_ = j.at("beta2").get<double>();
  adam.eps_ = j.at("epsilon").get<double>();
  adam.t_ = j.at("steps").get<long>();
  adam.m_ = VectorFromJson(j.at("m"));
  adam.v_ = VectorFromJson(j.at("v"));
  return adam;
}

}  // namespace batchloop
