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


#include <gtest/gtest.h>

#include <cmath>

#include <Eigen/Geometry>

#include "gpmpc/arm.hpp"
#include "test_util.hpp"

namespace gpmpc {
namespace {

using testing::Gen;
using testing::kPi;

JointState random_joints(Gen& g) {
  return JointState{Vector4d(g.uniform(-1.5, 1.5), g.uniform(-1.5, 1.5), g.uniform(-1.5, 1.5),
                             g.uniform(0.1, 2.6))};
}

// homogeneous transforms: shoulder frame, three shoulder rotations, upper
// arm translation, elbow rotation, forearm translation
Vector3d chain_oracle(const ArmModel& arm, const Vector4d& q) {
  Eigen::Isometry3d T = Eigen::Isometry3d::Identity();
  T.translate(arm.shoulder);
  T.rotate(Eigen::AngleAxisd(-q(0), Vector3d::UnitY()));
  T.rotate(Eigen::AngleAxisd(q(1), Vector3d::UnitX()));
  T.rotate(Eigen::AngleAxisd(q(2), Vector3d::UnitZ()));
  T.translate(Vector3d(0, 0, -arm.l1));
  T.rotate(Eigen::AngleAxisd(-q(3), Vector3d::UnitY()));
  T.translate(Vector3d(0, 0, -arm.l2));
  return T.translation();
}

TEST(Fk, ZeroPoseHangsDown) {
  const ArmModel arm;
  const Vector3d h = fk(arm, JointState{});
  EXPECT_LT((h - (arm.shoulder + Vector3d(0, 0, -(arm.l1 + arm.l2)))).norm(), 1e-15);
}

TEST(Fk, RightAngleElbow) {
  const ArmModel arm;
  const Vector3d h = fk(arm, JointState{Vector4d(0, 0, 0, kPi / 2)});
  EXPECT_NEAR((h - arm.shoulder).norm(), std::hypot(arm.l1, arm.l2), 1e-14);
  // positive elbow flexion swings the forearm to +x
  EXPECT_GT(h(0), arm.shoulder(0));
}

TEST(Fk, FlexionSwingsToPlusX) {
  const ArmModel arm;
  EXPECT_GT(fk(arm, JointState{Vector4d(0.3, 0, 0, 0)})(0), arm.shoulder(0));
}

TEST(Fk, MatchesTransformChain) {
  Gen g(71);
  ArmModel arm;
  arm.l1 = 0.33;
  arm.l2 = 0.25;
  arm.shoulder = Vector3d(0.1, -0.2, 0.4);
  for (int i = 0; i < 500; ++i) {
    const JointState q = random_joints(g);
    EXPECT_LT((fk(arm, q) - chain_oracle(arm, q.q)).norm(), 1e-14);
  }
}

TEST(Fk, JointLimits) {
  const ArmModel arm;
  EXPECT_THROW(fk(arm, JointState{Vector4d(0, 0, 0, -0.01)}), JointLimit);
  EXPECT_THROW(fk(arm, JointState{Vector4d(0, 0, 0, 2.81)}), JointLimit);
  EXPECT_THROW(fk(arm, JointState{Vector4d(3.2, 0, 0, 1.0)}), JointLimit);
  EXPECT_THROW(jacobian(arm, JointState{Vector4d(0, -3.2, 0, 1.0)}), JointLimit);
  EXPECT_NO_THROW(fk(arm, JointState{Vector4d(kPi, -kPi, kPi, 2.8)}));
  EXPECT_TRUE(within_limits(JointState{}));
  EXPECT_FALSE(within_limits(JointState{Vector4d(0, 0, std::nan(""), 0)}));
}

TEST(Jacobian, MatchesCentralDifferences) {
  Gen g(72);
  const ArmModel arm;
  for (int i = 0; i < 100; ++i) {
    const JointState q = random_joints(g);
    const MatrixXd fd = testing::central_jacobian(
        [&](const VectorXd& v) -> VectorXd { return fk(arm, JointState{Vector4d(v)}); },
        q.q, 1e-6);
    EXPECT_LT(testing::scaled_err(jacobian(arm, q), fd), 1e-8);
  }
}

TEST(Hessian, MatchesDifferencedJacobian) {
  Gen g(73);
  const ArmModel arm;
  for (int t = 0; t < 50; ++t) {
    const JointState q = random_joints(g);
    const auto H = fk_hessian(arm, q);
    for (int j = 0; j < 4; ++j) {
      const MatrixXd fd = testing::central_jacobian(
          [&](const VectorXd& v) -> VectorXd {
            return jacobian(arm, JointState{Vector4d(v)}).col(j);
          },
          q.q, 1e-6);
      for (int i = 0; i < 4; ++i) {
        EXPECT_LT((H[i][j] - fd.col(i)).norm(), 1e-7);
        EXPECT_EQ(H[i][j], H[j][i]);
      }
    }
  }
}

TEST(Torques, Examples) {
  Gen g(74);
  const ArmModel arm;
  const JointState q = random_joints(g);
  EXPECT_EQ(torques(arm, q, Vector3d::Zero()), Vector4d::Zero());
  const Vector3d along = (fk(arm, q) - arm.shoulder).normalized() * 15.0;
  const Vector4d tau = torques(arm, q, along);
  EXPECT_LT(tau.head<3>().cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Torques, EqualTransposedJacobianAndVirtualWork) {
  Gen g(75);
  const ArmModel arm;
  for (int i = 0; i < 50; ++i) {
    const JointState q = random_joints(g);
    const Vector3d f = g.vec3(-20, 20);
    const Vector4d tau = torques(arm, q, f);
    EXPECT_LT((tau - jacobian(arm, q).transpose() * f).cwiseAbs().maxCoeff(), 1e-13);
    // power balance for a small joint motion
    const Vector4d dq = g.vecx(4, -1e-6, 1e-6);
    const Vector3d dx = fk(arm, JointState{q.q + dq}) - fk(arm, q);
    EXPECT_NEAR(tau.dot(dq), f.dot(dx), 1e-9);
  }
}

TEST(Ik, ZeroPoseTarget) {
  const ArmModel arm;
  const JointState q = ik_seed(arm, fk(arm, JointState{}));
  EXPECT_LT(q.q.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(Ik, RandomReachableTargets) {
  Gen g(76);
  const ArmModel arm;
  for (int i = 0; i < 100; ++i) {
    const Vector3d target = fk(arm, random_joints(g));
    const JointState q = ik_seed(arm, target);
    EXPECT_TRUE(within_limits(q));
    EXPECT_LT((fk(arm, q) - target).norm(), 1e-3) << i;
  }
}

TEST(Ik, BeyondReachThrows) {
  const ArmModel arm;
  EXPECT_THROW(ik_seed(arm, arm.shoulder + Vector3d(0.6, 0, 0)), Unreachable);
}

TEST(Ik, BuiltInGoalsAndStartReachable) {
  const ArmModel arm;
  for (const Vector3d& p : {Vector3d(0, 0, 0), Vector3d(0, 0.15, 0), Vector3d(0, -0.15, 0)}) {
    EXPECT_NO_THROW(ik_seed(arm, p));
  }
}

TEST(Grasp, OffsetRotatesWithTool) {
  ArmModel arm;
  EXPECT_EQ(grasp_point(arm, Pose(Vector3d(1, 2, 3), RotVec(0, 0, 1))), Vector3d(1, 2, 3));
  arm.grasp_offset = Vector3d(0.1, 0, 0);
  const Vector3d p = grasp_point(arm, Pose(Vector3d::Zero(), RotVec(0, 0, kPi / 2)));
  EXPECT_LT((p - Vector3d(0, 0.1, 0)).norm(), 1e-15);
}

TEST(Arm, Validation) {
  ArmModel arm;
  arm.l2 = 0.0;
  EXPECT_THROW(arm.validate(), Error);
  EXPECT_THROW(ik_seed(arm, Vector3d::Zero()), Error);
}

}  // namespace
}  // namespace gpmpc
