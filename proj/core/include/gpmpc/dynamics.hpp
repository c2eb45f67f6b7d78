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

#ifndef GPMPC_DYNAMICS_HPP_
#define GPMPC_DYNAMICS_HPP_

#include <vector>

#include "gpmpc/force_model.hpp"
#include "gpmpc/geometry.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

// Diagonal Cartesian admittance  M xdd + D xd + K (x - x0) = f_H - f_R.
struct AdmittanceParams {
  Vector6d M = (Vector6d() << 12, 12, 12, 1, 1, 1).finished();
  Vector6d D = (Vector6d() << 1100, 1100, 1100, 200, 200, 200).finished();
  Vector6d K = Vector6d::Zero();
  Pose x0;

  // throws NonPositiveInertia / Error
  void validate() const;
};

// xi = [x; xd]
struct State {
  Pose x;
  Vector6d xdot = Vector6d::Zero();

  Vector12d vector() const;
  static State from_vector(const Vector12d& xi);
};

// Discrete-time admittance over one sample Ts. Position rows are explicit
// Euler; the velocity damping uses exp(-Ts D/M) so it stays in (0, 1] for
// any Ts. Kept as per-axis scalars since M, D, K are diagonal.
struct DiscreteDynamics {
  double Ts = 0.1;
  Vector6d damping = Vector6d::Ones();     // exp(-Ts D/M)
  Vector6d spring = Vector6d::Zero();      // -Ts K/M
  Vector6d input_gain = Vector6d::Zero();  // Ts/M
  Vector6d rest = Vector6d::Zero();        // x0 as (p, r)

  Matrix12d A() const;
  Matrix12x6d B() const;
  // affine term from the stiffness rest pose; zero when K = 0 or x0 = 0
  Vector12d offset() const;
};

DiscreteDynamics discretize(const AdmittanceParams& params, double Ts);

// 1 - Ts D/M, the velocity coefficient plain explicit Euler would give
Vector6d euler_damping(const AdmittanceParams& params, double Ts);

// mu' = A mu + B (fH - fR) (+ offset)
Vector12d step_mean(const DiscreteDynamics& dyn, const Vector12d& mu,
                    const Vector6d& fH_mean, const Vector6d& fR);
Vector12d step_mean(const DiscreteDynamics& dyn, const Vector12d& mu,
                    const Wrench& fH_mean, const Wrench& fR);

// Sigma' = A Sigma A^T + B Sigma_H B^T, symmetrized
Matrix12d step_cov(const DiscreteDynamics& dyn, const Matrix12d& sigma,
                   const Matrix6d& fH_cov);

struct ModeRollout {
  std::vector<Vector12d> mu;     // H + 1 entries, mu[0] = xi_t
  std::vector<Matrix12d> sigma;  // H + 1 entries, sigma[0] = 0

  int horizon() const { return static_cast<int>(mu.size()) - 1; }
};

// Chains the force model at each rolled-out mean with the mean and
// covariance recursions. The model is queried at the mean pose only; state
// covariance does not feed back into the force model input.
ModeRollout rollout(const DiscreteDynamics& dyn, const ForceModel& model,
                    const State& xi, const std::vector<Wrench>& fR);

}  // namespace gpmpc

#endif  // GPMPC_DYNAMICS_HPP_
