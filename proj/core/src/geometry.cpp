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

#include "gpmpc/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

namespace gpmpc {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTwoPi = 2.0 * std::numbers::pi;

// at exactly pi, r and -r are the same rotation
Vector3d fix_half_turn_sign(const Vector3d& v) {
  Eigen::Index i = 0;
  v.cwiseAbs().maxCoeff(&i);
  return v(i) < 0.0 ? Vector3d(-v) : v;
}

}  // namespace

Vector6d Pose::vector() const {
  Vector6d x;
  x << p, r.v;
  return x;
}

Pose Pose::from_vector(const Vector6d& x) {
  return Pose(x.head<3>(), RotVec(x.tail<3>()));
}

Vector6d Wrench::vector() const {
  Vector6d w;
  w << f, m;
  return w;
}

Wrench Wrench::from_vector(const Vector6d& w) {
  return Wrench(w.head<3>(), w.tail<3>());
}

bool Wrench::finite() const { return f.allFinite() && m.allFinite(); }

Matrix3d skew(const Vector3d& v) {
  Matrix3d S;
  S << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return S;
}

RotVec canonical(const RotVec& r) {
  const double theta = r.v.norm();
  if (theta == 0.0) return RotVec();
  Vector3d v = r.v;
  if (theta > kPi) {
    const Vector3d axis = r.v / theta;
    double wrapped = std::fmod(theta, kTwoPi);
    if (wrapped > kPi) {
      v = -(kTwoPi - wrapped) * axis;
    } else {
      v = wrapped * axis;
    }
  }
  if (std::abs(v.norm() - kPi) < 1e-12) v = fix_half_turn_sign(v);
  return RotVec(v);
}

Matrix3d rotvec_to_matrix(const RotVec& r) {
  const double theta = r.v.norm();
  const Matrix3d K = skew(r.v);
  if (theta < 1e-8) {
    // second-order series; exact to double precision here
    return Matrix3d::Identity() + K + 0.5 * K * K;
  }
  const double a = std::sin(theta) / theta;
  const double b = (1.0 - std::cos(theta)) / (theta * theta);
  return Matrix3d::Identity() + a * K + b * K * K;
}

RotVec matrix_to_rotvec(const Matrix3d& R) {
  if (!R.allFinite() ||
      (R.transpose() * R - Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-8 ||
      R.determinant() < 0.0) {
    throw NonOrthonormal("matrix_to_rotvec: input is not a rotation matrix");
  }
  const double cos_theta = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  // sin(theta) * axis
  const Vector3d a(0.5 * (R(2, 1) - R(1, 2)), 0.5 * (R(0, 2) - R(2, 0)),
                   0.5 * (R(1, 0) - R(0, 1)));
  const double sin_theta = a.norm();
  const double theta = std::atan2(sin_theta, cos_theta);

  if (cos_theta > -0.9) {
    if (sin_theta < 1e-12) return RotVec(a);
    return canonical(RotVec(a * (theta / sin_theta)));
  }

  // near pi: axis from the largest diagonal of (R + R^T)/2 - cos I
  const Matrix3d B =
      0.5 * (R + R.transpose()) - cos_theta * Matrix3d::Identity();
  Eigen::Index i = 0;
  B.diagonal().maxCoeff(&i);
  Vector3d axis = B.col(i) / std::sqrt(B(i, i));
  axis.normalize();
  if (axis.dot(a) < 0.0) axis = -axis;
  return canonical(RotVec(theta * axis));
}

Vector6d pose_error(const Pose& a, const Pose& b) {
  Vector6d e;
  e.head<3>() = a.p - b.p;
  if (a.r.v == b.r.v) {
    e.tail<3>().setZero();
  } else {
    const Matrix3d Rrel =
        rotvec_to_matrix(b.r).transpose() * rotvec_to_matrix(a.r);
    e.tail<3>() = matrix_to_rotvec(Rrel).v;
  }
  return e;
}

RotVec compose(const RotVec& r, const Vector3d& dr) {
  if (dr.isZero(0.0)) return r;
  Matrix3d R = rotvec_to_matrix(r) * rotvec_to_matrix(RotVec(dr));
  // re-orthonormalize to keep long integrations inside the precondition
  const Eigen::JacobiSVD<Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  R = svd.matrixU() * svd.matrixV().transpose();
  return matrix_to_rotvec(R);
}

Matrix3d rotate_jacobian(const RotVec& r, const Vector3d& o) {
  const double theta = r.v.norm();
  const Matrix3d K = skew(r.v);
  Matrix3d left = Matrix3d::Identity();
  if (theta < 1e-6) {
    left += 0.5 * K + K * K / 6.0;
  } else {
    const double t2 = theta * theta;
    left += (1.0 - std::cos(theta)) / t2 * K +
            (theta - std::sin(theta)) / (t2 * theta) * K * K;
  }
  return -skew(rotvec_to_matrix(r) * o) * left;
}

}  // namespace gpmpc
