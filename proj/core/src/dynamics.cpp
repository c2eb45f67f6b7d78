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

#include "gpmpc/dynamics.hpp"

#include <cmath>
#include <string>

namespace gpmpc {

void AdmittanceParams::validate() const {
  for (int i = 0; i < 6; ++i) {
    if (!(M(i) > 0.0)) {
      throw NonPositiveInertia("admittance inertia M[" + std::to_string(i) +
                               "] must be positive");
    }
    if (!(D(i) >= 0.0) || !(K(i) >= 0.0)) {
      throw Error("admittance damping and stiffness must be non-negative");
    }
  }
}

Vector12d State::vector() const {
  Vector12d xi;
  xi << x.vector(), xdot;
  return xi;
}

State State::from_vector(const Vector12d& xi) {
  State s;
  s.x = Pose::from_vector(xi.head<6>());
  s.xdot = xi.tail<6>();
  return s;
}

Matrix12d DiscreteDynamics::A() const {
  Matrix12d A = Matrix12d::Zero();
  A.topLeftCorner<6, 6>().setIdentity();
  A.topRightCorner<6, 6>().diagonal().setConstant(Ts);
  A.bottomLeftCorner<6, 6>().diagonal() = spring;
  A.bottomRightCorner<6, 6>().diagonal() = damping;
  return A;
}

Matrix12x6d DiscreteDynamics::B() const {
  Matrix12x6d B = Matrix12x6d::Zero();
  B.bottomRows<6>().diagonal() = input_gain;
  return B;
}

Vector12d DiscreteDynamics::offset() const {
  Vector12d c = Vector12d::Zero();
  c.tail<6>() = -spring.cwiseProduct(rest);
  return c;
}

DiscreteDynamics discretize(const AdmittanceParams& params, double Ts) {
  if (!(Ts > 0.0)) throw Error("discretize: sample time must be positive");
  params.validate();
  DiscreteDynamics dyn;
  dyn.Ts = Ts;
  for (int i = 0; i < 6; ++i) {
    dyn.damping(i) = std::exp(-Ts * params.D(i) / params.M(i));
    dyn.spring(i) = -Ts * params.K(i) / params.M(i);
    dyn.input_gain(i) = Ts / params.M(i);
  }
  dyn.rest = params.x0.vector();
  return dyn;
}

Vector6d euler_damping(const AdmittanceParams& params, double Ts) {
  return (Vector6d::Ones().array() - Ts * params.D.array() / params.M.array())
      .matrix();
}

Vector12d step_mean(const DiscreteDynamics& dyn, const Vector12d& mu,
                    const Vector6d& fH_mean, const Vector6d& fR) {
  Vector12d next;
  for (int i = 0; i < 6; ++i) {
    const double p = mu(i);
    const double v = mu(6 + i);
    next(i) = p + dyn.Ts * v;
    next(6 + i) = dyn.spring(i) * (p - dyn.rest(i)) + dyn.damping(i) * v +
                  dyn.input_gain(i) * (fH_mean(i) - fR(i));
  }
  return next;
}

Vector12d step_mean(const DiscreteDynamics& dyn, const Vector12d& mu,
                    const Wrench& fH_mean, const Wrench& fR) {
  return step_mean(dyn, mu, fH_mean.vector(), fR.vector());
}

Matrix12d step_cov(const DiscreteDynamics& dyn, const Matrix12d& sigma,
                   const Matrix6d& fH_cov) {
  const Matrix12d A = dyn.A();
  const Matrix12x6d B = dyn.B();
  Matrix12d next = A * sigma * A.transpose() + B * fH_cov * B.transpose();
  return 0.5 * (next + next.transpose());
}

ModeRollout rollout(const DiscreteDynamics& dyn, const ForceModel& model,
                    const State& xi, const std::vector<Wrench>& fR) {
  if (fR.empty()) throw Error("rollout: horizon must be at least 1");
  ModeRollout out;
  out.mu.reserve(fR.size() + 1);
  out.sigma.reserve(fR.size() + 1);
  out.mu.push_back(xi.vector());
  out.sigma.push_back(Matrix12d::Zero());
  for (const Wrench& u : fR) {
    const Vector12d& mu = out.mu.back();
    const Prediction pred = model.predict(Vector6d(mu.head<6>()));
    out.mu.push_back(step_mean(dyn, mu, pred.mean.vector(), u.vector()));
    out.sigma.push_back(
        step_cov(dyn, out.sigma.back(), pred.var.asDiagonal().toDenseMatrix()));
  }
  return out;
}

}  // namespace gpmpc
