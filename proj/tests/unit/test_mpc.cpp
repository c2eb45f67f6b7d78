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
#include <memory>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gpmpc/mpc.hpp"
#include "test_util.hpp"

namespace gpmpc {
namespace {

using testing::field_models;
using testing::Gen;

TEST(StageCost, Examples) {
  const Weights w;
  EXPECT_EQ(stage_cost(Vector12d::Zero(), Matrix12d::Zero(), Vector6d::Zero(),
                       Matrix6d::Zero(), Vector4d::Zero(), Vector6d::Zero(), w),
            0.0);
  Vector12d mu = Vector12d::Zero();
  mu(7) = 1.0;
  EXPECT_NEAR(stage_cost(mu, Matrix12d::Zero(), Vector6d::Zero(), Matrix6d::Zero(),
                         Vector4d::Zero(), Vector6d::Zero(), w),
              0.1, 1e-15);
  mu.setZero();
  mu(0) = 1.0;  // position is not penalized
  EXPECT_EQ(stage_cost(mu, Matrix12d::Zero(), Vector6d::Zero(), Matrix6d::Zero(),
                       Vector4d::Zero(), Vector6d::Zero(), w),
            0.0);
  EXPECT_NEAR(stage_cost(Vector12d::Zero(), Matrix12d::Zero(), Vector6d::Zero(),
                         Matrix6d::Identity(), Vector4d::Zero(), Vector6d::Zero(), w),
              1620.0, 1e-12);
}

TEST(StageCost, MatchesQuadraticFormOracle) {
  Gen g(81);
  for (int t = 0; t < 100; ++t) {
    Weights w;
    w.Q_mu = Vector12d::NullaryExpr([&] { return g.uniform(0, 2); });
    w.Q_Sigma = Vector12d::NullaryExpr([&] { return g.uniform(0, 2); });
    w.Q_H = g.vec6(0, 2);
    w.Q_SigmaH = g.vec6(0, 300);
    w.Q_J = Vector4d(g.uniform(0, 1), g.uniform(0, 1), g.uniform(0, 1), g.uniform(0, 1));
    w.Q_u = g.vec6(0, 1);
    w.robust_force_variant = t % 2 == 1;
    const Vector12d mu = Vector12d::NullaryExpr([&] { return g.uniform(-1, 1); });
    MatrixXd L = MatrixXd::Random(12, 12);
    const Matrix12d S = L * L.transpose();
    const Vector6d muH = g.vec6(-10, 10), u = g.vec6(-10, 10);
    MatrixXd LH = MatrixXd::Random(6, 6);
    const Matrix6d SH = LH * LH.transpose();
    const Vector4d tau(g.uniform(-5, 5), g.uniform(-5, 5), g.uniform(-5, 5), g.uniform(-5, 5));
    const Vector6d h = w.robust_force_variant ? Vector6d(muH + u) : muH;
    const double want = mu.transpose() * w.Q_mu.asDiagonal() * mu +
                        (w.Q_Sigma.asDiagonal().toDenseMatrix() * S).trace() +
                        h.transpose() * w.Q_H.asDiagonal() * h +
                        (w.Q_SigmaH.asDiagonal().toDenseMatrix() * SH).trace() +
                        tau.transpose() * w.Q_J.asDiagonal() * tau +
                        u.transpose() * w.Q_u.asDiagonal() * u;
    EXPECT_NEAR(stage_cost(mu, S, muH, SH, tau, u, w), want, 1e-10 * std::abs(want));
  }
}

TEST(Objective, ExpectedExamples) {
  const std::vector<double> c = {10.0, 20.0};
  EXPECT_NEAR(expected_objective(c, Belief(VectorXd((VectorXd(2) << 0.3, 0.7).finished()))),
              17.0, 1e-13);
  const std::vector<double> one = {4.2};
  EXPECT_EQ(expected_objective(one, Belief::uniform(1)), 4.2);
  EXPECT_THROW(expected_objective(one, Belief::uniform(2)), DimensionMismatch);
}

TEST(Objective, RiskSingleModeIsItsCost) {
  const std::vector<double> one = {123.4};
  for (double a : {1e-4, 0.01, 1.0, 10.0}) {
    EXPECT_NEAR(risk_objective(one, Belief::uniform(1), a), 123.4, 1e-12 * 123.4);
  }
  EXPECT_THROW(risk_objective(one, Belief::uniform(1), 0.0), Error);
}

TEST(Objective, RiskMatchesSoftMinFormula) {
  Gen g(82);
  for (int t = 0; t < 200; ++t) {
    const int n = g.integer(1, 4);
    std::vector<double> c(n);
    for (auto& v : c) v = g.uniform(0, 20);
    VectorXd p = g.vecx(n, 0.05, 1.0);
    const Belief b(p / p.sum());
    const double a = g.uniform(0.01, 2.0);
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += b[i] * std::exp(-a * c[i] / 2.0);
    EXPECT_NEAR(risk_objective(c, b, a), -2.0 / a * std::log(s), 1e-10);
  }
}

TEST(Objective, RiskStableForHugeCosts) {
  const std::vector<double> c = {1e6, 2e6};
  const double r = risk_objective(c, Belief::uniform(2), 10.0);
  EXPECT_TRUE(std::isfinite(r));
  EXPECT_NEAR(r, 1e6 + 2.0 / 10.0 * std::log(2.0), 1e-6);
}

TEST(Objective, RiskLimitAndSoftMinDirection) {
  Gen g(83);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> c(3);
    for (auto& v : c) v = g.uniform(1, 100);
    VectorXd p = g.vecx(3, 0.05, 1.0);
    const Belief b(p / p.sum());
    const double je = expected_objective(c, b);
    EXPECT_LT(std::abs(risk_objective(c, b, 1e-4) - je) / std::abs(je), 1e-3);
    for (double a : {0.1, 1.0, 10.0}) EXPECT_LE(risk_objective(c, b, a), je);
  }
}

TEST(Objective, RiskGapMatchesSecondOrderExpansion) {
  // J_E - J_R = alpha Var_b(c) / 4 - alpha^2 k3 / 24 + ...; at fixed alpha
  // the relative gap grows with the cost spread, not only with alpha
  Gen g(84);
  for (int t = 0; t < 10; ++t) {
    std::vector<double> c(3);
    for (auto& v : c) v = g.uniform(1e3, 1e4);
    VectorXd p = g.vecx(3, 0.05, 1.0);
    const Belief b(p / p.sum());
    const double je = expected_objective(c, b);
    double var = 0.0;
    for (int n = 0; n < 3; ++n) var += b[n] * (c[n] - je) * (c[n] - je);
    const double alpha = 1e-6;
    const double gap = je - risk_objective(c, b, alpha);
    EXPECT_NEAR(gap, alpha * var / 4, 0.02 * alpha * var / 4);
  }
}

TEST(Objective, IdenticalModesIgnoreBelief) {
  const std::vector<double> c = {7.0, 7.0, 7.0};
  for (const VectorXd& p : {VectorXd((VectorXd(3) << 0.1, 0.2, 0.7).finished()),
                            VectorXd((VectorXd(3) << 0.8, 0.1, 0.1).finished())}) {
    EXPECT_NEAR(expected_objective(c, Belief(p)), 7.0, 1e-14);
    EXPECT_NEAR(risk_objective(c, Belief(p), 0.5), 7.0, 1e-13);
  }
}

TEST(Objective, TrajectoryCostSumsStages) {
  ModeTrajectory t;
  t.rollout.mu.assign(3, Vector12d::Zero());
  t.rollout.sigma.assign(3, Matrix12d::Zero());
  t.force_mean.assign(3, Vector6d::Zero());
  t.force_var.assign(3, Vector6d::Zero());
  t.rollout.mu[1](6) = 1.0;
  t.rollout.mu[2](7) = 2.0;
  t.rollout.mu[0](8) = 100.0;  // k = 0 is not a stage
  t.force_var[2](0) = 1.0;
  std::vector<Wrench> fR(2, Wrench(Vector3d(2, 0, 0), Vector3d::Zero()));
  const Weights w;
  EXPECT_NEAR(trajectory_cost(t, fR, w), 0.1 + 0.4 + 270.0 + 2 * 0.25 * 4.0, 1e-12);
  fR.pop_back();
  EXPECT_THROW(trajectory_cost(t, fR, w), DimensionMismatch);
}

struct ProblemCase {
  ProblemOptions options;
  bool robust = false;
  Objective objective = Objective::kExpected;
};

MpcProblem make_problem(const ModelSet& models, const ProblemCase& pc, const State& xi,
                        const Belief& b) {
  Weights w;
  w.robust_force_variant = pc.robust;
  w.objective = pc.objective;
  w.alpha = 0.05;
  w.Q_J = Vector4d::Constant(0.01);
  return build_problem(models, AdmittanceParams{}, b, xi, w, SolverConfig{}, pc.options);
}

TEST(Layout, ControlAndStateCounts) {
  Gen g(84);
  const ModelSet models = field_models(g, 10);
  const MpcProblem p =
      make_problem(models, ProblemCase{}, State{}, Belief::uniform(2));
  EXPECT_EQ(p.num_controls(), 36);
  EXPECT_EQ(p.num_shooting_states(), 144);
  EXPECT_EQ(p.num_variables(), 180);
  EXPECT_EQ(p.num_constraints(), 144);

  ProblemCase imp;
  imp.options.impedance_vars = true;
  const MpcProblem q = make_problem(models, imp, State{}, Belief::uniform(2));
  EXPECT_EQ(q.num_controls(), 48);
  EXPECT_EQ(q.num_variables(), 192);

  ProblemCase arm;
  arm.options.arm_vars = true;
  const MpcProblem r = make_problem(models, arm, State{}, Belief::uniform(2));
  EXPECT_EQ(r.num_controls(), 36 + 3 + 24);
  EXPECT_EQ(r.num_constraints(), 144 + 18);
}

TEST(Layout, BoxesFollowTheConfiguredLimits) {
  Gen g(85);
  ProblemCase pc;
  pc.options.impedance_vars = true;
  const MpcProblem p = make_problem(field_models(g, 10), pc, State{}, Belief::uniform(2));
  const auto& L = p.layout();
  EXPECT_EQ(p.upper()(0), 20.0);
  EXPECT_EQ(p.lower()(3), -6.0);
  EXPECT_EQ(p.upper()(L.impedance_offset), 6.0);
  EXPECT_EQ(p.lower()(L.impedance_offset + 6), -550.0);
  EXPECT_EQ(p.upper()(L.state_offset + 6), 0.5);
  EXPECT_EQ(p.upper()(L.state_offset + 9), 1.0);
  EXPECT_TRUE(std::isinf(p.upper()(L.state_offset)));
}

TEST(Problem, InitialGuessIsARollout) {
  Gen g(86);
  const ModelSet models = field_models(g);
  State xi;
  xi.x = Pose(Vector3d(0.01, 0.02, 0), RotVec(0.05, 0, 0));
  xi.xdot(1) = 0.05;
  const MpcProblem p = make_problem(models, ProblemCase{}, xi, Belief::uniform(2));
  const VectorXd z = p.initial_guess();
  EXPECT_LT(p.max_continuity_residual(z), 1e-14);
  const DecisionVariables u = p.decode(z);
  ASSERT_EQ(u.fR.size(), 6u);
  EXPECT_EQ(u.fR[0].vector(), Vector6d::Zero());
  EXPECT_FALSE(u.dM.has_value());
  // shooting states agree with the dynamics-module rollout
  const DiscreteDynamics dyn = discretize(AdmittanceParams{}, 0.1);
  const std::vector<ModeTrajectory> tr = p.trajectories(z);
  for (int n = 0; n < 2; ++n) {
    const ModeRollout r = rollout(dyn, *models[n], xi, u.fR);
    for (int k = 0; k <= 6; ++k) {
      EXPECT_LT((tr[n].rollout.mu[k] - r.mu[k]).cwiseAbs().maxCoeff(), 1e-14);
    }
  }
}

TEST(Problem, WarmGuessShiftsControls) {
  Gen g(87);
  const ModelSet models = field_models(g, 10);
  const MpcProblem p = make_problem(models, ProblemCase{}, State{}, Belief::uniform(2));
  MpcSolution warm;
  warm.z = VectorXd::Zero(p.num_variables());
  for (int k = 0; k < 6; ++k) warm.z(6 * k) = k + 1.0;
  const VectorXd z = p.initial_guess(&warm);
  for (int k = 0; k < 5; ++k) EXPECT_EQ(z(6 * k), k + 2.0);
  EXPECT_EQ(z(30), 6.0);
}

TEST(Problem, ObjectiveAgreesWithTrajectoryCosts) {
  Gen g(88);
  const ModelSet models = field_models(g);
  const Belief b(VectorXd((VectorXd(2) << 0.3, 0.7).finished()));
  for (bool full : {false, true}) {
    for (bool robust : {false, true}) {
      ProblemCase pc;
      pc.options.full_gp_cov = full;
      pc.robust = robust;
      State xi;
      xi.x = Pose(Vector3d(0.0, 0.03, 0.0), RotVec());
      const MpcProblem p = make_problem(models, pc, xi, b);
      VectorXd z = p.initial_guess();
      for (int k = 0; k < 36; ++k) z(k) = g.uniform(-5, 5);
      const MpcProblem::Evaluation ev = p.evaluate(z, false);
      const std::vector<ModeTrajectory> tr = p.trajectories(z);
      const std::vector<Wrench> fR = p.decode(z).fR;
      for (int n = 0; n < 2; ++n) {
        EXPECT_NEAR(ev.mode_costs[n], trajectory_cost(tr[n], fR, p.weights()),
                    1e-9 * std::abs(ev.mode_costs[n]));
      }
      EXPECT_NEAR(ev.f, expected_objective(tr, fR, b, p.weights()), 1e-9 * std::abs(ev.f));
    }
  }
}

TEST(Problem, SimplifiedCovarianceUsesFirstAxisVariance) {
  Gen g(89);
  const ModelSet models = field_models(g);
  ProblemCase simp, full;
  full.options.full_gp_cov = true;
  simp.options.state_cov = full.options.state_cov = false;
  State xi;
  xi.x = Pose(Vector3d(0.02, 0.05, 0.0), RotVec(0.3, 0, 0));
  const Belief b = Belief::uniform(2);
  const MpcProblem ps = make_problem(models, simp, xi, b);
  const MpcProblem pf = make_problem(models, full, xi, b);
  const VectorXd z = ps.initial_guess();
  const auto ts = ps.trajectories(z);
  const auto tf = pf.trajectories(z);
  double diff = 0.0;
  for (int n = 0; n < 2; ++n) {
    for (int k = 1; k <= 6; ++k) {
      const Vector6d v = ts[n].force_var[k];
      const Vector6d vf = tf[n].force_var[k];
      EXPECT_EQ(v(0), vf(0));
      EXPECT_TRUE((v.array() == v(0)).all());
      diff += b[n] * 270.0 * (vf.sum() - v.sum());
    }
  }
  EXPECT_NEAR(pf.objective(z) - ps.objective(z), diff, 1e-9 * std::abs(ps.objective(z)));
}

std::vector<ProblemCase> all_cases() {
  std::vector<ProblemCase> out;
  for (int mask = 0; mask < 16; ++mask) {
    ProblemCase pc;
    pc.options.full_gp_cov = mask & 1;
    pc.options.state_cov = mask & 2;
    pc.options.impedance_vars = mask & 4;
    pc.options.arm_vars = mask & 8;
    out.push_back(pc);
  }
  ProblemCase risk;
  risk.objective = Objective::kRiskSensitive;
  out.push_back(risk);
  ProblemCase robust;
  robust.robust = true;
  robust.options.impedance_vars = true;
  out.push_back(robust);
  ProblemCase everything;
  everything.options = {true, true, true, true};
  everything.robust = true;
  everything.objective = Objective::kRiskSensitive;
  out.push_back(everything);
  return out;
}

// random decision vector near the rolled-out guess, off the box boundaries
VectorXd random_point(Gen& g, const MpcProblem& p) {
  VectorXd z = p.initial_guess();
  const auto& L = p.layout();
  for (int i = 0; i < L.controls; ++i) z(i) = g.uniform(-8, 8);
  for (int i = 0; i < L.impedance; ++i) {
    z(L.impedance_offset + i) = 0.2 * g.uniform(-1, 1) * (p.upper()(L.impedance_offset + i));
  }
  if (L.arm) {
    for (int k = 0; k < L.H; ++k) {
      z(L.arm_offset + 3 + 4 * k + 3) = g.uniform(0.3, 2.0);
      for (int j = 0; j < 3; ++j) z(L.arm_offset + 3 + 4 * k + j) = g.uniform(-0.8, 0.8);
    }
  }
  for (int i = 0; i < L.states; ++i) {
    const double scale = (i % 12) < 6 ? 0.01 : 0.02;
    z(L.state_offset + i) += scale * g.uniform(-1, 1);
  }
  return z;
}

TEST(Problem, GradientMatchesCentralDifferences) {
  Gen g(90);
  const ModelSet models = field_models(g);
  const Belief b(VectorXd((VectorXd(2) << 0.35, 0.65).finished()));
  for (const ProblemCase& pc : all_cases()) {
    State xi;
    xi.x = Pose(Vector3d(0.01, 0.04, -0.01), RotVec(0.1, -0.05, 0.02));
    xi.xdot << 0.02, 0.03, 0, 0.01, 0, 0;
    const MpcProblem p = make_problem(models, pc, xi, b);
    const VectorXd z = random_point(g, p);
    const MpcProblem::Evaluation ev = p.evaluate(z, true);
    const VectorXd fd =
        testing::central_gradient([&](const VectorXd& v) { return p.objective(v); }, z, 1e-6);
    const double err = testing::scaled_err(ev.grad, fd);
    EXPECT_LT(err, 1e-5) << "options " << pc.options.full_gp_cov << pc.options.state_cov
                         << pc.options.impedance_vars << pc.options.arm_vars << pc.robust
                         << static_cast<int>(pc.objective);
  }
}

TEST(Problem, ConstraintJacobianMatchesCentralDifferences) {
  Gen g(91);
  const ModelSet models = field_models(g);
  const Belief b(VectorXd((VectorXd(2) << 0.6, 0.4).finished()));
  for (const ProblemCase& pc : all_cases()) {
    State xi;
    xi.x = Pose(Vector3d(0.0, -0.02, 0.01), RotVec(0.0, 0.1, 0.0));
    const MpcProblem p = make_problem(models, pc, xi, b);
    const VectorXd z = random_point(g, p);
    const MpcProblem::Evaluation ev = p.evaluate(z, true);
    const MatrixXd fd = testing::central_jacobian(
        [&](const VectorXd& v) -> VectorXd { return p.evaluate(v, false).c; }, z, 1e-6);
    EXPECT_LT(testing::scaled_err(ev.jac, fd), 1e-5)
        << pc.options.impedance_vars << pc.options.arm_vars;
  }
}

TEST(Problem, CurvatureModelIsPositiveSemidefinite) {
  Gen g(92);
  const ModelSet models = field_models(g);
  for (const ProblemCase& pc : all_cases()) {
    const MpcProblem p = make_problem(models, pc, State{}, Belief::uniform(2));
    const VectorXd z = random_point(g, p);
    const VectorXd lam = VectorXd::NullaryExpr(p.num_constraints(), [&] { return g.uniform(-10, 10); });
    const MpcProblem::Evaluation ev = p.evaluate(z, true, &lam, 1e8);
    const MatrixXd S = 0.5 * (ev.hess + ev.hess.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(S);
    EXPECT_GT(es.eigenvalues().minCoeff(), -1e-8 * std::max(1.0, es.eigenvalues().maxCoeff()))
        << "options " << pc.options.full_gp_cov << pc.options.state_cov
        << pc.options.impedance_vars << pc.options.arm_vars << pc.robust
        << static_cast<int>(pc.objective);
  }
}

TEST(Problem, RejectsInconsistentInputs) {
  Gen g(93);
  const ModelSet models = field_models(g, 5);
  EXPECT_THROW(make_problem(models, ProblemCase{}, State{}, Belief::uniform(3)),
               DimensionMismatch);
  EXPECT_THROW(make_problem({}, ProblemCase{}, State{}, Belief::uniform(1)), DimensionMismatch);
  SolverConfig bad;
  bad.H = 0;
  EXPECT_THROW(build_problem(models, AdmittanceParams{}, Belief::uniform(2), State{},
                             Weights{}, bad, ProblemOptions{}),
               Error);
  Weights w;
  w.Q_u(0) = -1.0;
  EXPECT_THROW(build_problem(models, AdmittanceParams{}, Belief::uniform(2), State{}, w,
                             SolverConfig{}, ProblemOptions{}),
               Error);
  State nan;
  nan.xdot(0) = std::nan("");
  EXPECT_THROW(make_problem(models, ProblemCase{}, nan, Belief::uniform(2)), Error);
  const MpcProblem p = make_problem(models, ProblemCase{}, State{}, Belief::uniform(2));
  EXPECT_THROW(p.evaluate(VectorXd::Zero(3), false), DimensionMismatch);
}

}  // namespace
}  // namespace gpmpc
