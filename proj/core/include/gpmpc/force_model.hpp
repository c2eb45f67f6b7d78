// Copyright 2026 The gpmpc Authors
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

#ifndef GPMPC_FORCE_MODEL_HPP_
#define GPMPC_FORCE_MODEL_HPP_

#include <array>

#include "gpmpc/geometry.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

// posterior over the human wrench at a pose
struct Prediction {
  Wrench mean;
  Vector6d var = Vector6d::Zero();  // latent per-axis variance, no noise
};

enum class VarianceMode {
  kNone,        // mean only
  kSimplified,  // one variance, that of the first linear axis, for all axes
  kFull,        // per-axis variance
};

struct JetRequest {
  VarianceMode variance = VarianceMode::kFull;
  // false: values only, derivative fields stay zero
  bool derivatives = true;
  bool var_hessian = false;
  // weights w for the Hessian of sum_i w_i var_i
  Vector6d var_weights = Vector6d::Zero();
  // per-channel Hessians of the mean
  bool mean_hessian = false;
};

// prediction plus derivatives w.r.t. the 6-dim query (p, r)
struct ForceJet {
  Vector6d mean = Vector6d::Zero();
  Vector6d var = Vector6d::Zero();
  Matrix6d dmean = Matrix6d::Zero();  // row i: d mean_i / d x
  Matrix6d dvar = Matrix6d::Zero();   // row i: d var_i / d x
  Matrix6d var_hessian = Matrix6d::Zero();
  std::array<Matrix6d, 6> mean_hessian{};  // filled on request, else zero
};

// A mode-conditioned stochastic model of human wrench over robot pose.
// Implementations are immutable after construction and safe to query
// concurrently.
class ForceModel {
 public:
  virtual ~ForceModel() = default;

  virtual Prediction predict(const Vector6d& x) const = 0;
  virtual ForceJet jet(const Vector6d& x, const JetRequest& request) const = 0;

  // measurement noise variance of channel i (for likelihoods)
  virtual double noise_var(int channel) const = 0;

  Prediction predict(const Pose& x) const { return predict(x.vector()); }
};

// pose-independent wrench distribution; the linear-quadratic reduction of
// the planner and a useful stand-in in tests
class ConstantForceModel final : public ForceModel {
 public:
  ConstantForceModel(const Vector6d& mean, const Vector6d& var,
                     const Vector6d& noise_var = Vector6d::Ones())
      : mean_(mean), var_(var), noise_var_(noise_var) {}

  Prediction predict(const Vector6d&) const override {
    return {Wrench::from_vector(mean_), var_};
  }

  ForceJet jet(const Vector6d&, const JetRequest& request) const override {
    ForceJet j;
    for (auto& h : j.mean_hessian) h.setZero();
    j.mean = mean_;
    if (request.variance == VarianceMode::kFull) j.var = var_;
    if (request.variance == VarianceMode::kSimplified) j.var.setConstant(var_(0));
    return j;
  }

  double noise_var(int channel) const override { return noise_var_(channel); }

 private:
  Vector6d mean_;
  Vector6d var_;
  Vector6d noise_var_;
};

}  // namespace gpmpc

#endif  // GPMPC_FORCE_MODEL_HPP_
