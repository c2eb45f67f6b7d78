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

#include "gpmpc/arm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

namespace gpmpc {

namespace {

constexpr double kPi = std::numbers::pi;

struct Factor {
  Vector3d axis;
  double sign;
};

const std::array<Factor, 4> kFactors{{
    {Vector3d::UnitY(), -1.0},
    {Vector3d::UnitX(), 1.0},
    {Vector3d::UnitZ(), 1.0},
    {Vector3d::UnitY(), -1.0},
}};

Matrix3d factor(int k, double q, int order) {
  const Factor& f = kFactors[static_cast<std::size_t>(k)];
  Matrix3d R = Eigen::AngleAxisd(f.sign * q, f.axis).toRotationMatrix();
  const Matrix3d S = f.sign * skew(f.axis);
  for (int i = 0; i < order; ++i) R = S * R;
  return R;
}

// derivative of (hand - shoulder) with factor k differentiated orders[k] times
Vector3d chain(const ArmModel& arm, const Vector4d& q, const std::array<int, 4>& orders) {
  const Vector3d upper(0.0, 0.0, -arm.l1);
  const Vector3d fore(0.0, 0.0, -arm.l2);
  const Matrix3d shoulder = factor(0, q(0), orders[0]) * factor(1, q(1), orders[1]) *
                            factor(2, q(2), orders[2]);
  Vector3d out = shoulder * (factor(3, q(3), orders[3]) * fore);
  if (orders[3] == 0) out += shoulder * upper;
  return out;
}

void check_limits(const JointState& q) {
  if (!within_limits(q)) throw JointLimit("joint state outside the arm limits");
}

}  // namespace

void ArmModel::validate() const {
  if (!(l1 > 0.0) || !(l2 > 0.0)) throw Error("arm segment lengths must be positive");
}

bool within_limits(const JointState& s) {
  for (int i = 0; i < 3; ++i) {
    if (!(std::abs(s.q(i)) <= kPi)) return false;
  }
  return s.q(3) >= 0.0 && s.q(3) <= JointState::kElbowMax;
}

Vector3d fk(const ArmModel& arm, const JointState& q) {
  check_limits(q);
  return arm.shoulder + chain(arm, q.q, {0, 0, 0, 0});
}

Matrix34d jacobian(const ArmModel& arm, const JointState& q) {
  check_limits(q);
  Matrix34d J;
  for (int i = 0; i < 4; ++i) {
    std::array<int, 4> orders{0, 0, 0, 0};
    orders[static_cast<std::size_t>(i)] = 1;
    J.col(i) = chain(arm, q.q, orders);
  }
  return J;
}

std::array<std::array<Vector3d, 4>, 4> fk_hessian(const ArmModel& arm,
                                                  const JointState& q) {
  check_limits(q);
  std::array<std::array<Vector3d, 4>, 4> H;
  for (int i = 0; i < 4; ++i) {
    for (int j = i; j < 4; ++j) {
      std::array<int, 4> orders{0, 0, 0, 0};
      orders[static_cast<std::size_t>(i)] += 1;
      orders[static_cast<std::size_t>(j)] += 1;
      H[i][j] = chain(arm, q.q, orders);
      H[j][i] = H[i][j];
    }
  }
  return H;
}

Vector4d torques(const ArmModel& arm, const JointState& q, const Vector3d& f_lin) {
  Matrix34d J;
  for (int i = 0; i < 4; ++i) {
    std::array<int, 4> orders{0, 0, 0, 0};
    orders[static_cast<std::size_t>(i)] = 1;
    J.col(i) = chain(arm, q.q, orders);
  }
  return J.transpose() * f_lin;
}

Vector3d grasp_point(const ArmModel& arm, const Pose& tcp) {
  if (arm.grasp_offset.isZero(0.0)) return tcp.p;
  return tcp.p + rotvec_to_matrix(tcp.r) * arm.grasp_offset;
}

JointState ik_seed(const ArmModel& arm, const Vector3d& target) {
  arm.validate();
  if ((target - arm.shoulder).norm() > arm.l1 + arm.l2 + 1e-9) {
    throw Unreachable("ik_seed: target beyond arm reach");
  }
  // the elbow angle follows from the shoulder-hand distance alone; the
  // shoulder angles are searched from a coarse grid
  const double d2 = (target - arm.shoulder).squaredNorm();
  const double c4 = std::clamp((d2 - arm.l1 * arm.l1 - arm.l2 * arm.l2) / (2.0 * arm.l1 * arm.l2),
                               -1.0, 1.0);
  const double q4 = std::min(std::acos(c4), JointState::kElbowMax);
  std::vector<Vector4d> seeds;
  for (double q1 : {0.0, 1.0, -1.0, 2.0, -2.0}) {
    for (double q2 : {0.0, 1.0, -1.0, 2.0, -2.0}) seeds.emplace_back(q1, q2, 0.0, q4);
  }
  const Vector4d lo(-kPi, -kPi, -kPi, 0.0);
  const Vector4d hi(kPi, kPi, kPi, JointState::kElbowMax);
  constexpr double kDamping2 = 1e-4;

  JointState best;
  double best_err = std::numeric_limits<double>::infinity();
  for (const Vector4d& seed : seeds) {
    JointState s{seed};
    for (int it = 0; it < 300; ++it) {
      const Vector3d e = target - fk(arm, s);
      const double err = e.norm();
      if (err < best_err) {
        best_err = err;
        best = s;
      }
      if (err < 1e-9) break;
      const Matrix34d J = jacobian(arm, s);
      const Matrix3d JJt = J * J.transpose() + kDamping2 * Matrix3d::Identity();
      const Vector4d dq = J.transpose() * JJt.ldlt().solve(e);
      s.q = (s.q + dq).cwiseMax(lo).cwiseMin(hi);
    }
    if (best_err < 1e-6) break;
  }
  if (best_err >= 1e-3) throw Unreachable("ik_seed: no joint state reaches the target");
  return best;
}

}  // namespace gpmpc
