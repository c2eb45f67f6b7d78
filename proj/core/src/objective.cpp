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

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "gpmpc/mpc.hpp"

namespace gpmpc {

void Weights::validate() const {
  const bool nonneg = (Q_mu.array() >= 0).all() && (Q_Sigma.array() >= 0).all() &&
                      (Q_H.array() >= 0).all() && (Q_SigmaH.array() >= 0).all() &&
                      (Q_J.array() >= 0).all() && (Q_u.array() >= 0).all() &&
                      (Q_dM.array() >= 0).all() && (Q_dD.array() >= 0).all() &&
                      Q_q >= 0;
  if (!nonneg) throw Error("weights: diagonal entries must be non-negative");
  if (objective == Objective::kRiskSensitive && !(alpha > 0)) {
    throw Error("weights: alpha must be positive for the risk-sensitive objective");
  }
}

double stage_cost(const Vector12d& mu, const Matrix12d& Sigma, const Vector6d& muH,
                  const Matrix6d& SigmaH, const Vector4d& tau, const Vector6d& u,
                  const Weights& w) {
  const Vector6d h = w.robust_force_variant ? Vector6d(muH + u) : muH;
  return mu.dot(w.Q_mu.cwiseProduct(mu)) + w.Q_Sigma.dot(Sigma.diagonal()) +
         h.dot(w.Q_H.cwiseProduct(h)) + w.Q_SigmaH.dot(SigmaH.diagonal()) +
         tau.dot(w.Q_J.cwiseProduct(tau)) + u.dot(w.Q_u.cwiseProduct(u));
}

double trajectory_cost(const ModeTrajectory& traj, std::span<const Wrench> fR,
                       const Weights& w) {
  const int H = traj.rollout.horizon();
  if (static_cast<int>(fR.size()) != H) {
    throw DimensionMismatch("trajectory_cost: fR length differs from the horizon");
  }
  double c = 0.0;
  for (int k = 1; k <= H; ++k) {
    const Vector4d tau =
        traj.torques.empty() ? Vector4d::Zero() : traj.torques[k];
    c += stage_cost(traj.rollout.mu[k], traj.rollout.sigma[k], traj.force_mean[k],
                    traj.force_var[k].asDiagonal(), tau, fR[k - 1].vector(), w);
  }
  return c;
}

namespace {

void check_sizes(std::size_t n, const Belief& b) {
  if (n == 0 || static_cast<int>(n) != b.size()) {
    throw DimensionMismatch("objective: mode count differs from belief size");
  }
}

std::vector<double> costs_of(std::span<const ModeTrajectory> modes,
                             std::span<const Wrench> fR, const Weights& w) {
  std::vector<double> c;
  c.reserve(modes.size());
  for (const auto& m : modes) c.push_back(trajectory_cost(m, fR, w));
  return c;
}

}  // namespace

double expected_objective(std::span<const double> mode_costs, const Belief& b) {
  check_sizes(mode_costs.size(), b);
  double j = 0.0;
  for (std::size_t n = 0; n < mode_costs.size(); ++n) j += b[n] * mode_costs[n];
  return j;
}

double expected_objective(std::span<const ModeTrajectory> modes,
                          std::span<const Wrench> fR, const Belief& b,
                          const Weights& w) {
  const auto c = costs_of(modes, fR, w);
  return expected_objective(c, b);
}

double risk_objective(std::span<const double> mode_costs, const Belief& b,
                      double alpha) {
  check_sizes(mode_costs.size(), b);
  if (!(alpha > 0)) throw Error("risk_objective: alpha must be positive");
  double top = -std::numeric_limits<double>::infinity();
  std::vector<double> e(mode_costs.size());
  for (std::size_t n = 0; n < mode_costs.size(); ++n) {
    e[n] = b[n] > 0 ? std::log(b[n]) - 0.5 * alpha * mode_costs[n]
                    : -std::numeric_limits<double>::infinity();
    top = std::max(top, e[n]);
  }
  double s = 0.0;
  for (double v : e) s += std::exp(v - top);
  return -(2.0 / alpha) * (top + std::log(s));
}

double risk_objective(std::span<const ModeTrajectory> modes,
                      std::span<const Wrench> fR, const Belief& b,
                      const Weights& w) {
  const auto c = costs_of(modes, fR, w);
  return risk_objective(c, b, w.alpha);
}

}  // namespace gpmpc
