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

#ifndef GPMPC_MPC_HPP_
#define GPMPC_MPC_HPP_

#include <optional>
#include <span>
#include <vector>

#include "gpmpc/arm.hpp"
#include "gpmpc/dynamics.hpp"
#include "gpmpc/force_model.hpp"
#include "gpmpc/inference.hpp"
#include "gpmpc/types.hpp"

namespace gpmpc {

enum class Objective { kExpected, kRiskSensitive };

// Diagonal stage-cost weights. Defaults are the experiment weights: only
// velocity is penalized in the state term, the human-force covariance
// weight dominates.
struct Weights {
  Vector12d Q_mu = (Vector12d() << Vector6d::Zero(), Vector6d::Constant(0.1)).finished();
  Vector12d Q_Sigma = Vector12d::Constant(0.1);
  Vector6d Q_H = Vector6d::Constant(0.1);
  Vector6d Q_SigmaH = Vector6d::Constant(270.0);
  Vector4d Q_J = Vector4d::Zero();
  Vector6d Q_u = Vector6d::Constant(0.25);
  // regularizers for the optional decision variables
  Vector6d Q_dM = Vector6d::Constant(1e-6);
  Vector6d Q_dD = Vector6d::Constant(1e-8);
  double Q_q = 1e-3;  // joint-trajectory smoothness
  double alpha = 0.01;
  Objective objective = Objective::kExpected;
  // penalize (mu_H + f_R) instead of mu_H
  bool robust_force_variant = false;

  void validate() const;
};

// problem-statement toggles (one per benchmark column)
struct ProblemOptions {
  bool full_gp_cov = false;  // false: tr(Q_SigmaH) * Sigma_H[0,0]
  bool state_cov = true;     // propagate and penalize state covariance
  bool impedance_vars = false;
  bool arm_vars = false;
};

struct SolverConfig {
  int H = 6;
  double Ts = 0.10;
  double rho = 1e-5;       // mean continuity slack
  // covariance continuity slack; unused while covariances are propagated by
  // substitution inside each shooting interval
  double rho_cov = 1e-5;
  int max_iterations = 200;
  int max_outer_iterations = 40;
  double tolerance = 1e-8;  // relative Newton decrement
  bool warm_start = true;
  Vector6d velocity_limit = (Vector6d() << 0.5, 0.5, 0.5, 1.0, 1.0, 1.0).finished();
  double force_limit = 20.0;
  double moment_limit = 6.0;
  double impedance_fraction = 0.5;  // |dM| <= f M, |dD| <= f D
  double joint_box = 0.3;           // shoulder search box half-width (m)

  void validate() const;
};

struct DecisionVariables {
  std::vector<Wrench> fR;
  std::optional<Vector6d> dM;
  std::optional<Vector6d> dD;
  std::optional<Vector3d> shoulder;
  std::vector<JointState> q;  // H entries when arm variables are enabled
};

// per-mode predicted trajectory and the force-model terms along it;
// index k refers to mu[k], k = 0..H
struct ModeTrajectory {
  ModeRollout rollout;
  std::vector<Vector6d> force_mean;
  std::vector<Vector6d> force_var;
  std::vector<Vector4d> torques;
};

struct SolverStats {
  int iterations = 0;
  int outer_iterations = 0;
  double wall_ms = 0.0;
  bool converged = false;
  double max_continuity_residual = 0.0;
  double penalty = 0.0;
};

struct MpcSolution {
  DecisionVariables u;
  std::vector<ModeTrajectory> modes;
  double objective = 0.0;
  SolverStats stats;

  // raw iterate for warm starting
  VectorXd z;
  VectorXd multipliers;
};

// mu^T Q_mu mu + tr(Q_Sigma Sigma) + muH^T Q_H muH + tr(Q_SigmaH SigmaH)
//   + tau^T Q_J tau + u^T Q_u u
double stage_cost(const Vector12d& mu, const Matrix12d& Sigma, const Vector6d& muH,
                  const Matrix6d& SigmaH, const Vector4d& tau, const Vector6d& u,
                  const Weights& w);

// sum over steps k = 1..H of the stage cost at mu[k] paired with fR[k-1]
double trajectory_cost(const ModeTrajectory& traj, std::span<const Wrench> fR,
                       const Weights& w);

// sum_n b[n] c_n
double expected_objective(std::span<const double> mode_costs, const Belief& b);
double expected_objective(std::span<const ModeTrajectory> modes,
                          std::span<const Wrench> fR, const Belief& b,
                          const Weights& w);

// -(2/alpha) ln E_b[exp(-alpha c_n / 2)], log-sum-exp stabilized
double risk_objective(std::span<const double> mode_costs, const Belief& b,
                      double alpha);
double risk_objective(std::span<const ModeTrajectory> modes,
                      std::span<const Wrench> fR, const Belief& b,
                      const Weights& w);

// Multiple-shooting NLP. Decision vector, in order:
//   fR[0..H-1] (6 each), [dM, dD] (12), [x_sh (3), q[1..H] (4 each)],
//   mu^n_k for n = 0..N-1, k = 1..H (12 each).
// Constraints: continuity mu^n_{k+1} - f(mu^n_k, u_k) = 0 (met to rho) and,
// with arm variables, fk(q_k, x_sh) = T(belief-weighted mean pose at k).
class MpcProblem {
 public:
  struct Layout {
    int H = 0;
    int N = 0;
    int controls = 0;
    int impedance_offset = 0, impedance = 0;
    int arm_offset = 0, arm = 0;
    int state_offset = 0, states = 0;
    int variables = 0;
    int continuity = 0;
    int attachment = 0;
    int constraints = 0;
  };

  struct Evaluation {
    double f = 0.0;
    VectorXd c;
    VectorXd grad;
    MatrixXd hess;  // positive semidefinite cost curvature model
    MatrixXd jac;
    std::vector<double> mode_costs;
  };

  MpcProblem(ModelSet models, const AdmittanceParams& params, const Belief& b,
             const State& xi, const Weights& w, const SolverConfig& cfg,
             const ProblemOptions& options, const ArmModel& arm = {});

  const Layout& layout() const { return layout_; }
  int num_variables() const { return layout_.variables; }
  int num_controls() const { return layout_.controls + layout_.impedance + layout_.arm; }
  int num_shooting_states() const { return layout_.states; }
  int num_constraints() const { return layout_.constraints; }

  const VectorXd& lower() const { return lower_; }
  const VectorXd& upper() const { return upper_; }
  const VectorXd& constraint_lower() const { return c_lower_; }
  const VectorXd& constraint_upper() const { return c_upper_; }
  // allowed distance of c outside [lower, upper] at convergence
  const VectorXd& constraint_tolerance() const { return c_tol_; }

  // with_derivatives fills grad, hess and jac. Given augmented-Lagrangian
  // multipliers and penalty, hess also carries the constraint curvature
  // sum_i y_i d2c_i with y the shifted multipliers; curvature blocks are
  // clipped to be positive semidefinite.
  Evaluation evaluate(const VectorXd& z, bool with_derivatives,
                      const VectorXd* multipliers = nullptr,
                      double penalty = 0.0) const;
  double objective(const VectorXd& z) const { return evaluate(z, false).f; }

  // feasible starting point: previous solution shifted one step, or zero
  // controls; shooting states are rolled out from xi either way
  VectorXd initial_guess(const MpcSolution* warm = nullptr) const;
  VectorXd initial_multipliers(const MpcSolution* warm = nullptr) const;

  DecisionVariables decode(const VectorXd& z) const;
  std::vector<ModeTrajectory> trajectories(const VectorXd& z) const;

  const State& state() const { return xi_; }
  const Belief& belief() const { return belief_; }
  const SolverConfig& config() const { return cfg_; }
  const ProblemOptions& options() const { return options_; }
  const Weights& weights() const { return weights_; }

  // continuity residuals only (no slack)
  double max_continuity_residual(const VectorXd& z) const;

 private:
  struct AxisModel {
    Vector6d a, spring, gain;
    // derivatives w.r.t. dM and dD per axis
    Vector6d da_dM, da_dD, dspring_dM, dgain_dM;
  };
  AxisModel axis_model(const VectorXd& z) const;
  Vector12d rollout_step(const AxisModel& ax, const Vector12d& mu,
                         const Vector6d& fH, const Vector6d& fR) const;
  VectorXd pack_rollout(VectorXd z) const;

  ModelSet models_;
  AdmittanceParams params_;
  Belief belief_;
  State xi_;
  Weights weights_;
  SolverConfig cfg_;
  ProblemOptions options_;
  ArmModel arm_;
  Layout layout_;
  VectorXd lower_, upper_, c_lower_, c_upper_, c_tol_;
};

MpcProblem build_problem(ModelSet models, const AdmittanceParams& params,
                         const Belief& b, const State& xi, const Weights& w,
                         const SolverConfig& cfg, const ProblemOptions& options,
                         const ArmModel& arm = {});

// Augmented Lagrangian on the continuity/attachment constraints with a
// projected (Gauss-)Newton inner solver on the variable boxes. Never throws
// for numerical trouble; check stats.converged.
MpcSolution solve(const MpcProblem& problem, const MpcSolution* warm = nullptr);

// Receding-horizon controller: owns the warm-start state, so one solve at a
// time per engine.
class MpcEngine {
 public:
  struct StepResult {
    Wrench fR;
    MpcSolution solution;
    bool fallback = false;
  };

  MpcEngine(ModelSet models, AdmittanceParams params, Weights weights,
            SolverConfig cfg, ProblemOptions options, ArmModel arm = {});

  StepResult step(const State& xi, const Belief& b);
  void reset() { last_.reset(); }

  const SolverConfig& config() const { return cfg_; }
  const ProblemOptions& options() const { return options_; }
  const Weights& weights() const { return weights_; }
  const ModelSet& models() const { return models_; }
  const AdmittanceParams& admittance() const { return params_; }

 private:
  ModelSet models_;
  AdmittanceParams params_;
  Weights weights_;
  SolverConfig cfg_;
  ProblemOptions options_;
  ArmModel arm_;
  std::optional<MpcSolution> last_;
};

// first control of a warm-started solve; zero wrench when the solver fails
MpcEngine::StepResult mpc_step(MpcEngine& engine, const State& xi, const Belief& b);

}  // namespace gpmpc

#endif  // GPMPC_MPC_HPP_
