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

#ifndef GPMPC_GEOMETRY_HPP_
#define GPMPC_GEOMETRY_HPP_

#include "gpmpc/types.hpp"

namespace gpmpc {

// Axis-angle orientation: direction is the rotation axis, norm is the angle.
// Values produced by this library are canonical, i.e. the angle lies in
// [0, pi]; at exactly pi the sign is fixed so the largest-magnitude
// component is positive.
struct RotVec {
  Vector3d v = Vector3d::Zero();

  RotVec() = default;
  explicit RotVec(const Vector3d& value) : v(value) {}
  RotVec(double x, double y, double z) : v(x, y, z) {}

  double angle() const { return v.norm(); }
};

struct Pose {
  Vector3d p = Vector3d::Zero();
  RotVec r;

  Pose() = default;
  Pose(const Vector3d& position, const RotVec& rotation)
      : p(position), r(rotation) {}

  // (p, r) stacked; this is the regression input space of the force models
  Vector6d vector() const;
  static Pose from_vector(const Vector6d& x);
};

// force (N) and moment (N m) in the TCP frame
struct Wrench {
  Vector3d f = Vector3d::Zero();
  Vector3d m = Vector3d::Zero();

  Wrench() = default;
  Wrench(const Vector3d& force, const Vector3d& moment) : f(force), m(moment) {}

  Vector6d vector() const;
  static Wrench from_vector(const Vector6d& w);
  bool finite() const;
};

RotVec canonical(const RotVec& r);

// Rodrigues formula
Matrix3d rotvec_to_matrix(const RotVec& r);

// throws NonOrthonormal when R is not a rotation within 1e-8
RotVec matrix_to_rotvec(const Matrix3d& R);

// (a.p - b.p, log(R_b^T R_a)); exactly zero when a == b
Vector6d pose_error(const Pose& a, const Pose& b);

// body-frame composition: orientation r followed by incremental rotation dr
RotVec compose(const RotVec& r, const Vector3d& dr);

// d(R(r) o)/dr for a fixed vector o
Matrix3d rotate_jacobian(const RotVec& r, const Vector3d& o);

Matrix3d skew(const Vector3d& v);

}  // namespace gpmpc

#endif  // GPMPC_GEOMETRY_HPP_
