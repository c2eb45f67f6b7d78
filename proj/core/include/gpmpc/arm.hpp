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

#ifndef GPMPC_ARM_HPP_
#define GPMPC_ARM_HPP_

#include <array>

#include "gpmpc/geometry.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

// 4-DOF human arm. Zero pose hangs along -z from the shoulder.
//   q1 shoulder flexion   rotation about -y (positive swings the arm to +x)
//   q2 shoulder abduction rotation about +x
//   q3 internal rotation  rotation about +z (the upper-arm axis at q = 0)
//   q4 elbow flexion      rotation about -y after the shoulder
// hand = x_sh + Ry(-q1) Rx(q2) Rz(q3) ((0,0,-l1) + Ry(-q4) (0,0,-l2))
struct ArmModel {
  double l1 = 0.30;
  double l2 = 0.28;
  Vector3d shoulder = Vector3d(-0.35, 0.0, 0.30);
  // hand grasp point relative to the robot TCP, in the TCP frame
  Vector3d grasp_offset = Vector3d::Zero();

  void validate() const;
};

struct JointState {
  Vector4d q = Vector4d::Zero();

  static constexpr double kElbowMax = 2.8;
};

bool within_limits(const JointState& q);

// throws JointLimit
Vector3d fk(const ArmModel& arm, const JointState& q);
Matrix34d jacobian(const ArmModel& arm, const JointState& q);

// d^2 hand / dq_i dq_j for all i, j; entry [i][j] is a 3-vector
std::array<std::array<Vector3d, 4>, 4> fk_hessian(const ArmModel& arm,
                                                  const JointState& q);

// tau = J(q)^T f
Vector4d torques(const ArmModel& arm, const JointState& q, const Vector3d& f_lin);

// hand point the robot pose implies through the grasp transform
Vector3d grasp_point(const ArmModel& arm, const Pose& tcp);

// damped least squares from neutral seeds; throws Unreachable
JointState ik_seed(const ArmModel& arm, const Vector3d& target);

}  // namespace gpmpc

#endif  // GPMPC_ARM_HPP_
