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
#include <numbers>
#include <utility>
#include <vector>

#include <Eigen/Eigenvalues>

#include "gpmpc/mpc.hpp"

namespace gpmpc {

namespace {

// Continuity rows are driven to zero by the multiplier method and accepted
// once inside this fraction of rho. Exploiting the slack band buys nothing
// at rho = 1e-5 and would make the penalty term nonsmooth.
constexpr double kBandTolerance = 0.5;
constexpr double kAttachTolerance = 1e-7;

Matrix6d psd_part(const Matrix6d& H) {
  const Matrix6d S = 0.5 * (H + H.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix6d> es(S);
  if (es.eigenvalues().minCoeff() >= 0.0) return S;
  const Vector6d ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

Eigen::Matrix2d axis_transition(double Ts, double spring, double a) {
  Eigen::Matrix2d A;
  A << 1.0, Ts, spring, a;
  return A;
}

}  // namespace

void SolverConfig::validate() const {
  if (H < 1) throw Error("solver config: H must be at least 1");
  if (!(Ts > 0)) throw Error("solver config: Ts must be positive");
  if (!(rho > 0) || !(rho_cov > 0)) throw Error("solver config: rho must be positive");
  if (max_iterations < 1 || max_outer_iterations < 1) {
    throw Error("solver config: iteration limits must be positive");
  }
  if (!(force_limit > 0) || !(moment_limit > 0) || (velocity_limit.array() <= 0).any()) {
    throw Error("solver config: box limits must be positive");
  }
  if (!(impedance_fraction > 0 && impedance_fraction < 1)) {
    throw Error("solver config: impedance_fraction must lie in (0, 1)");
  }
}

MpcProblem::MpcProblem(ModelSet models, const AdmittanceParams& params,
                       const Belief& b, const State& xi, const Weights& w,
                       const SolverConfig& cfg, const ProblemOptions& options,
                       const ArmModel& arm)
    : models_(std::move(models)),
      params_(params),
      belief_(b),
      xi_(xi),
      weights_(w),
      cfg_(cfg),
      options_(options),
      arm_(arm) {
  if (models_.empty()) throw DimensionMismatch("mpc: at least one mode model is required");
  for (const auto& m : models_) {
    if (!m) throw Error("mpc: null mode model");
  }
  if (b.size() != static_cast<int>(models_.size())) {
    throw DimensionMismatch("mpc: belief size differs from the number of modes");
  }
  b.validate(1e-6);
  params_.validate();
  weights_.validate();
  cfg_.validate();
  if (options_.arm_vars) arm_.validate();
  if (!xi.vector().allFinite()) throw Error("mpc: non-finite state");

  Layout& L = layout_;
  L.H = cfg.H;
  L.N = static_cast<int>(models_.size());
  L.controls = 6 * L.H;
  L.impedance_offset = L.controls;
  L.impedance = options.impedance_vars ? 12 : 0;
  L.arm_offset = L.impedance_offset + L.impedance;
  L.arm = options.arm_vars ? 3 + 4 * L.H : 0;
  L.state_offset = L.arm_offset + L.arm;
  L.states = 12 * L.N * L.H;
  L.variables = L.state_offset + L.states;
  L.continuity = 12 * L.N * L.H;
  L.attachment = options.arm_vars ? 3 * L.H : 0;
  L.constraints = L.continuity + L.attachment;

  constexpr double inf = std::numeric_limits<double>::infinity();
  lower_ = VectorXd::Constant(L.variables, -inf);
  upper_ = VectorXd::Constant(L.variables, inf);
  Vector6d ulim;
  ulim << Vector3d::Constant(cfg.force_limit), Vector3d::Constant(cfg.moment_limit);
  for (int k = 0; k < L.H; ++k) {
    lower_.segment<6>(6 * k) = -ulim;
    upper_.segment<6>(6 * k) = ulim;
  }
  if (L.impedance) {
    const double f = cfg.impedance_fraction;
    lower_.segment<6>(L.impedance_offset) = -f * params_.M;
    upper_.segment<6>(L.impedance_offset) = f * params_.M;
    lower_.segment<6>(L.impedance_offset + 6) = -f * params_.D;
    upper_.segment<6>(L.impedance_offset + 6) = f * params_.D;
  }
  if (L.arm) {
    lower_.segment<3>(L.arm_offset) = arm_.shoulder.array() - cfg.joint_box;
    upper_.segment<3>(L.arm_offset) = arm_.shoulder.array() + cfg.joint_box;
    const Vector4d qlo(-std::numbers::pi, -std::numbers::pi, -std::numbers::pi, 0.0);
    const Vector4d qhi(std::numbers::pi, std::numbers::pi, std::numbers::pi,
                       JointState::kElbowMax);
    for (int k = 0; k < L.H; ++k) {
      lower_.segment<4>(L.arm_offset + 3 + 4 * k) = qlo;
      upper_.segment<4>(L.arm_offset + 3 + 4 * k) = qhi;
    }
  }
  for (int s = 0; s < L.N * L.H; ++s) {
    lower_.segment<6>(L.state_offset + 12 * s + 6) = -cfg.velocity_limit;
    upper_.segment<6>(L.state_offset + 12 * s + 6) = cfg.velocity_limit;
  }

  c_lower_ = VectorXd::Zero(L.constraints);
  c_upper_ = VectorXd::Zero(L.constraints);
  c_tol_ = VectorXd::Constant(L.constraints, kAttachTolerance);
  c_tol_.head(L.continuity).setConstant(kBandTolerance * cfg.rho);
}

MpcProblem build_problem(ModelSet models, const AdmittanceParams& params,
                         const Belief& b, const State& xi, const Weights& w,
                         const SolverConfig& cfg, const ProblemOptions& options,
                         const ArmModel& arm) {
  return MpcProblem(std::move(models), params, b, xi, w, cfg, options, arm);
}

MpcProblem::AxisModel MpcProblem::axis_model(const VectorXd& z) const {
  AxisModel ax;
  const double Ts = cfg_.Ts;
  for (int i = 0; i < 6; ++i) {
    double M = params_.M(i);
    double D = params_.D(i);
    if (layout_.impedance) {
      M += z(layout_.impedance_offset + i);
      D += z(layout_.impedance_offset + 6 + i);
    }
    const double K = params_.K(i);
    ax.a(i) = std::exp(-Ts * D / M);
    ax.spring(i) = -Ts * K / M;
    ax.gain(i) = Ts / M;
    ax.da_dM(i) = ax.a(i) * Ts * D / (M * M);
    ax.da_dD(i) = -ax.a(i) * Ts / M;
    ax.dspring_dM(i) = Ts * K / (M * M);
    ax.dgain_dM(i) = -Ts / (M * M);
  }
  return ax;
}

Vector12d MpcProblem::rollout_step(const AxisModel& ax, const Vector12d& mu,
                                   const Vector6d& fH, const Vector6d& fR) const {
  const Vector6d rest = params_.x0.vector();
  Vector12d next;
  for (int i = 0; i < 6; ++i) {
    next(i) = mu(i) + cfg_.Ts * mu(6 + i);
    next(6 + i) = ax.spring(i) * (mu(i) - rest(i)) + ax.a(i) * mu(6 + i) +
                  ax.gain(i) * (fH(i) - fR(i));
  }
  return next;
}

VectorXd MpcProblem::pack_rollout(VectorXd z) const {
  const Layout& L = layout_;
  const AxisModel ax = axis_model(z);
  for (int n = 0; n < L.N; ++n) {
    Vector12d mu = xi_.vector();
    for (int k = 0; k < L.H; ++k) {
      const Vector6d fH = models_[n]->predict(Vector6d(mu.head<6>())).mean.vector();
      mu = rollout_step(ax, mu, fH, z.segment<6>(6 * k));
      z.segment<12>(L.state_offset + 12 * (n * L.H + k)) = mu;
    }
  }
  return z;
}

VectorXd MpcProblem::initial_guess(const MpcSolution* warm) const {
  const Layout& L = layout_;
  VectorXd z = VectorXd::Zero(L.variables);
  const bool use_warm = warm != nullptr && warm->z.size() == L.variables;
  if (use_warm) {
    for (int k = 0; k < L.H; ++k) {
      const int src = std::min(k + 1, L.H - 1);
      z.segment<6>(6 * k) = warm->z.segment<6>(6 * src);
    }
    z.segment(L.impedance_offset, L.impedance) =
        warm->z.segment(L.impedance_offset, L.impedance);
    if (L.arm) {
      z.segment<3>(L.arm_offset) = warm->z.segment<3>(L.arm_offset);
      for (int k = 0; k < L.H; ++k) {
        const int src = std::min(k + 1, L.H - 1);
        z.segment<4>(L.arm_offset + 3 + 4 * k) =
            warm->z.segment<4>(L.arm_offset + 3 + 4 * src);
      }
    }
  } else if (L.arm) {
    z.segment<3>(L.arm_offset) = arm_.shoulder;
    Vector4d q0(0.0, 0.0, 0.0, 0.5);
    try {
      q0 = ik_seed(arm_, grasp_point(arm_, xi_.x)).q;
    } catch (const Unreachable&) {
      // start from a bent elbow and let the shoulder variables move
    }
    for (int k = 0; k < L.H; ++k) z.segment<4>(L.arm_offset + 3 + 4 * k) = q0;
  }
  z = pack_rollout(std::move(z));
  return z.cwiseMax(lower_).cwiseMin(upper_);
}

VectorXd MpcProblem::initial_multipliers(const MpcSolution* warm) const {
  const Layout& L = layout_;
  VectorXd lam = VectorXd::Zero(L.constraints);
  if (warm == nullptr || warm->multipliers.size() != L.constraints) return lam;
  for (int n = 0; n < L.N; ++n) {
    for (int k = 0; k < L.H; ++k) {
      const int src = std::min(k + 1, L.H - 1);
      lam.segment<12>(12 * (n * L.H + k)) =
          warm->multipliers.segment<12>(12 * (n * L.H + src));
    }
  }
  for (int k = 0; k < L.attachment / 3; ++k) {
    const int src = std::min(k + 1, L.H - 1);
    lam.segment<3>(L.continuity + 3 * k) =
        warm->multipliers.segment<3>(L.continuity + 3 * src);
  }
  return lam;
}

DecisionVariables MpcProblem::decode(const VectorXd& z) const {
  const Layout& L = layout_;
  if (z.size() != L.variables) throw DimensionMismatch("mpc: decision vector size");
  DecisionVariables u;
  for (int k = 0; k < L.H; ++k) {
    u.fR.push_back(Wrench::from_vector(z.segment<6>(6 * k)));
  }
  if (L.impedance) {
    u.dM = z.segment<6>(L.impedance_offset);
    u.dD = z.segment<6>(L.impedance_offset + 6);
  }
  if (L.arm) {
    u.shoulder = z.segment<3>(L.arm_offset);
    for (int k = 0; k < L.H; ++k) {
      u.q.push_back(JointState{z.segment<4>(L.arm_offset + 3 + 4 * k)});
    }
  }
  return u;
}

MpcProblem::Evaluation MpcProblem::evaluate(const VectorXd& z, bool derivs,
                                            const VectorXd* multipliers,
                                            double penalty) const {
  const Layout& L = layout_;
  if (z.size() != L.variables) throw DimensionMismatch("mpc: decision vector size");
  const int H = L.H;
  const int N = L.N;
  const double Ts = cfg_.Ts;
  const Weights& w = weights_;
  const AxisModel ax = axis_model(z);
  const Vector12d xi = xi_.vector();
  const Vector6d rest = params_.x0.vector();

  auto state_index = [&](int n, int k) { return L.state_offset + 12 * (n * H + k - 1); };
  auto mu_at = [&](int n, int k) -> Vector12d {
    return k == 0 ? xi : Vector12d(z.segment<12>(state_index(n, k)));
  };
  auto fR_at = [&](int k) -> Vector6d { return z.segment<6>(6 * k); };
  auto q_index = [&](int k) { return L.arm_offset + 3 + 4 * (k - 1); };

  Evaluation ev;
  ev.c.resize(L.constraints);
  ev.mode_costs.assign(N, 0.0);
  if (derivs) {
    ev.grad = VectorXd::Zero(L.variables);
    ev.hess = MatrixXd::Zero(L.variables, L.variables);
    ev.jac = MatrixXd::Zero(L.constraints, L.variables);
  }

  // adjoint weights of the state-covariance cost per axis, P[k] for k = 1..H
  std::vector<std::array<Eigen::Matrix2d, 6>> P(H + 1);
  if (options_.state_cov) {
    for (int i = 0; i < 6; ++i) {
      const Eigen::Matrix2d Q =
          Eigen::Vector2d(w.Q_Sigma(i), w.Q_Sigma(6 + i)).asDiagonal();
      const Eigen::Matrix2d A = axis_transition(Ts, ax.spring(i), ax.a(i));
      P[H][i] = Q;
      for (int k = H - 1; k >= 1; --k) P[k][i] = Q + A.transpose() * P[k + 1][i] * A;
    }
  }
  const bool need_var =
      (w.Q_SigmaH.array() > 0).any() ||
      (options_.state_cov && (w.Q_Sigma.array() > 0).any());
  const VarianceMode vmode = !need_var ? VarianceMode::kNone
                             : options_.full_gp_cov ? VarianceMode::kFull
                                                    : VarianceMode::kSimplified;
  const bool torque_terms = L.arm > 0 && (w.Q_J.array() > 0).any();
  ArmModel arm = arm_;
  if (L.arm) arm.shoulder = z.segment<3>(L.arm_offset);

  // pass 1: force-model jets, mode costs and constraint values
  std::vector<std::vector<ForceJet>> jets(N, std::vector<ForceJet>(H + 1));
  std::vector<std::vector<Vector6d>> var_weights(N, std::vector<Vector6d>(H + 1));
  std::vector<std::vector<std::array<Eigen::Matrix2d, 6>>> S(N);
  double shared = 0.0;  // mode-independent terms
  for (int k = 0; k < H; ++k) shared += fR_at(k).dot(w.Q_u.cwiseProduct(fR_at(k)));
  if (L.impedance) {
    const Vector6d dM = z.segment<6>(L.impedance_offset);
    const Vector6d dD = z.segment<6>(L.impedance_offset + 6);
    shared += dM.dot(w.Q_dM.cwiseProduct(dM)) + dD.dot(w.Q_dD.cwiseProduct(dD));
  }
  if (L.arm) {
    for (int k = 2; k <= H; ++k) {
      shared += w.Q_q * (z.segment<4>(q_index(k)) - z.segment<4>(q_index(k - 1))).squaredNorm();
    }
  }

  for (int n = 0; n < N; ++n) {
    double C = shared;
    for (int k = 0; k <= H; ++k) {
      Vector6d wv = Vector6d::Zero();
      if (k >= 1) wv += w.Q_SigmaH;
      if (options_.state_cov && k <= H - 1) {
        for (int i = 0; i < 6; ++i) wv(i) += ax.gain(i) * ax.gain(i) * P[k + 1][i](1, 1);
      }
      var_weights[n][k] = wv;
      JetRequest req;
      req.variance = vmode;
      req.derivatives = derivs;
      req.var_hessian = derivs && k >= 1;
      req.mean_hessian = derivs && k >= 1;
      req.var_weights = wv;
      jets[n][k] = models_[n]->jet(Vector6d(mu_at(n, k).head<6>()), req);
    }
    for (int k = 1; k <= H; ++k) {
      const Vector12d mu = mu_at(n, k);
      const ForceJet& j = jets[n][k];
      const Vector6d r = w.robust_force_variant ? Vector6d(j.mean + fR_at(k - 1)) : j.mean;
      C += mu.dot(w.Q_mu.cwiseProduct(mu)) + r.dot(w.Q_H.cwiseProduct(r)) +
           w.Q_SigmaH.dot(j.var);
      if (torque_terms) {
        const Vector4d t = torques(arm, JointState{z.segment<4>(q_index(k))},
                                   j.mean.head<3>());
        C += t.dot(w.Q_J.cwiseProduct(t));
      }
    }
    if (options_.state_cov) {
      S[n].resize(H + 1);
      for (int i = 0; i < 6; ++i) {
        const Eigen::Matrix2d A = axis_transition(Ts, ax.spring(i), ax.a(i));
        Eigen::Matrix2d s = Eigen::Matrix2d::Zero();
        S[n][0][i] = s;
        for (int k = 0; k < H; ++k) {
          s = A * s * A.transpose();
          s(1, 1) += ax.gain(i) * ax.gain(i) * jets[n][k].var(i);
          S[n][k + 1][i] = s;
          C += w.Q_Sigma(i) * s(0, 0) + w.Q_Sigma(6 + i) * s(1, 1);
        }
      }
    }
    ev.mode_costs[n] = C;

    for (int k = 0; k < H; ++k) {
      const Vector12d mu = mu_at(n, k);
      const Vector12d pred = rollout_step(ax, mu, jets[n][k].mean, fR_at(k));
      ev.c.segment<12>(12 * (n * H + k)) = mu_at(n, k + 1) - pred;
    }
  }

  if (L.attachment) {
    for (int k = 1; k <= H; ++k) {
      Vector6d mean_pose = Vector6d::Zero();
      for (int n = 0; n < N; ++n) mean_pose += belief_[n] * mu_at(n, k).head<6>();
      const Vector3d target = grasp_point(arm, Pose::from_vector(mean_pose));
      ev.c.segment<3>(L.continuity + 3 * (k - 1)) =
          fk(arm, JointState{z.segment<4>(q_index(k))}) - target;
    }
  }

  // mode weights
  std::vector<double> omega(N);
  if (w.objective == Objective::kExpected) {
    ev.f = expected_objective(ev.mode_costs, belief_);
    for (int n = 0; n < N; ++n) omega[n] = belief_[n];
  } else {
    ev.f = risk_objective(ev.mode_costs, belief_, w.alpha);
    double top = -std::numeric_limits<double>::infinity();
    for (int n = 0; n < N; ++n) {
      omega[n] = belief_[n] > 0 ? std::log(belief_[n]) - 0.5 * w.alpha * ev.mode_costs[n]
                                : -std::numeric_limits<double>::infinity();
      top = std::max(top, omega[n]);
    }
    double sum = 0.0;
    for (double& o : omega) sum += (o = std::exp(o - top));
    for (double& o : omega) o /= sum;
  }
  if (!derivs) return ev;

  VectorXd& g = ev.grad;
  MatrixXd& Hs = ev.hess;
  VectorXd y = VectorXd::Zero(L.constraints);
  if (multipliers != nullptr && penalty > 0) {
    for (int i = 0; i < L.constraints; ++i) {
      const double s = ev.c(i) + (*multipliers)(i) / penalty;
      y(i) = penalty * (s - std::clamp(s, c_lower_(i), c_upper_(i)));
    }
  }

  // shared terms carry total weight 1
  for (int k = 0; k < H; ++k) {
    g.segment<6>(6 * k) += 2.0 * w.Q_u.cwiseProduct(fR_at(k));
    Hs.diagonal().segment<6>(6 * k) += 2.0 * w.Q_u;
  }
  if (L.impedance) {
    g.segment<6>(L.impedance_offset) +=
        2.0 * w.Q_dM.cwiseProduct(z.segment<6>(L.impedance_offset));
    g.segment<6>(L.impedance_offset + 6) +=
        2.0 * w.Q_dD.cwiseProduct(z.segment<6>(L.impedance_offset + 6));
    Hs.diagonal().segment<6>(L.impedance_offset) += 2.0 * w.Q_dM;
    Hs.diagonal().segment<6>(L.impedance_offset + 6) += 2.0 * w.Q_dD;
  }
  if (L.arm) {
    for (int k = 2; k <= H; ++k) {
      const Vector4d d = z.segment<4>(q_index(k)) - z.segment<4>(q_index(k - 1));
      g.segment<4>(q_index(k)) += 2.0 * w.Q_q * d;
      g.segment<4>(q_index(k - 1)) -= 2.0 * w.Q_q * d;
      const Eigen::Matrix4d I4 = 2.0 * w.Q_q * Eigen::Matrix4d::Identity();
      Hs.block<4, 4>(q_index(k), q_index(k)) += I4;
      Hs.block<4, 4>(q_index(k - 1), q_index(k - 1)) += I4;
      Hs.block<4, 4>(q_index(k), q_index(k - 1)) -= I4;
      Hs.block<4, 4>(q_index(k - 1), q_index(k)) -= I4;
    }
  }

  for (int n = 0; n < N; ++n) {
    const double om = omega[n];
    if (om == 0.0) continue;
    for (int k = 1; k <= H; ++k) {
      const int si = state_index(n, k);
      const Vector12d mu = mu_at(n, k);
      const ForceJet& j = jets[n][k];
      g.segment<12>(si) += om * 2.0 * w.Q_mu.cwiseProduct(mu);
      Hs.diagonal().segment<12>(si) += om * 2.0 * w.Q_mu;

      const Vector6d r = w.robust_force_variant ? Vector6d(j.mean + fR_at(k - 1)) : j.mean;
      const Vector6d qr = w.Q_H.cwiseProduct(r);
      const Matrix6d QJ = w.Q_H.asDiagonal() * j.dmean;
      g.segment<6>(si) += om * 2.0 * j.dmean.transpose() * qr;
      // pose curvature: force terms, variance terms and, through the
      // velocity rows leaving this node, the constraint curvature
      const Matrix6d gn = om * 2.0 * j.dmean.transpose() * QJ;
      Matrix6d B = om * j.var_hessian;
      for (int c = 0; c < 6; ++c) {
        double wc = om * 2.0 * qr(c);
        if (k < H) wc -= y(12 * (n * H + k) + 6 + c) * ax.gain(c);
        if (wc != 0.0) B += wc * j.mean_hessian[c];
      }
      // the robust variant couples the Gauss-Newton block to the controls,
      // so only the second-order part may be clipped there
      if (w.robust_force_variant) {
        Hs.block<6, 6>(si, si) += gn + psd_part(B);
      } else {
        Hs.block<6, 6>(si, si) += psd_part(gn + B);
      }
      if (w.robust_force_variant) {
        const int ui = 6 * (k - 1);
        g.segment<6>(ui) += om * 2.0 * qr;
        Hs.diagonal().segment<6>(ui) += om * 2.0 * w.Q_H;
        Hs.block<6, 6>(si, ui) += om * 2.0 * QJ.transpose();
        Hs.block<6, 6>(ui, si) += om * 2.0 * QJ;
      }

      // variance: stage term plus state-covariance propagation weights
      g.segment<6>(si) += om * j.dvar.transpose() * var_weights[n][k];

      if (torque_terms) {
        const JointState q{z.segment<4>(q_index(k))};
        const Matrix34d Jq = jacobian(arm, q);
        const auto Hq = fk_hessian(arm, q);
        const Vector3d f = j.mean.head<3>();
        const Vector4d t = Jq.transpose() * f;
        Eigen::Matrix<double, 4, 10> Jt;
        Jt.leftCols<6>() = Jq.transpose() * j.dmean.topRows<3>();
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) Jt(a, 6 + b) = Hq[a][b].dot(f);
        }
        const Eigen::Matrix<double, 10, 1> gt = 2.0 * Jt.transpose() * w.Q_J.cwiseProduct(t);
        const Eigen::Matrix<double, 10, 10> Ht =
            2.0 * Jt.transpose() * w.Q_J.asDiagonal() * Jt;
        const int qi = q_index(k);
        g.segment<6>(si) += om * gt.head<6>();
        g.segment<4>(qi) += om * gt.tail<4>();
        Hs.block<6, 6>(si, si) += om * Ht.topLeftCorner<6, 6>();
        Hs.block<6, 4>(si, qi) += om * Ht.topRightCorner<6, 4>();
        Hs.block<4, 6>(qi, si) += om * Ht.bottomLeftCorner<4, 6>();
        Hs.block<4, 4>(qi, qi) += om * Ht.bottomRightCorner<4, 4>();
      }
    }

    // dependence of the state-covariance cost on the impedance deltas
    if (options_.state_cov && L.impedance) {
      for (int i = 0; i < 6; ++i) {
        const Eigen::Matrix2d A = axis_transition(Ts, ax.spring(i), ax.a(i));
        double d_a = 0.0, d_spring = 0.0, d_gain = 0.0;
        for (int k = 0; k < H; ++k) {
          const Eigen::Matrix2d Mx = S[n][k][i] * A.transpose() * P[k + 1][i];
          d_spring += 2.0 * Mx(0, 1);
          d_a += 2.0 * Mx(1, 1);
          d_gain += 2.0 * ax.gain(i) * jets[n][k].var(i) * P[k + 1][i](1, 1);
        }
        g(L.impedance_offset + i) +=
            om * (d_a * ax.da_dM(i) + d_spring * ax.dspring_dM(i) + d_gain * ax.dgain_dM(i));
        g(L.impedance_offset + 6 + i) += om * d_a * ax.da_dD(i);
      }
    }

    // continuity Jacobian
    for (int k = 0; k < H; ++k) {
      const int row = 12 * (n * H + k);
      const Vector12d mu = mu_at(n, k);
      const ForceJet& j = jets[n][k];
      ev.jac.block<12, 12>(row, state_index(n, k + 1)).setIdentity();
      if (k >= 1) {
        const int si = state_index(n, k);
        auto blk = ev.jac.block<12, 12>(row, si);
        blk.topLeftCorner<6, 6>() = -Matrix6d::Identity();
        blk.topRightCorner<6, 6>().diagonal().setConstant(-Ts);
        blk.bottomLeftCorner<6, 6>() = -(ax.gain.asDiagonal() * j.dmean);
        blk.bottomLeftCorner<6, 6>().diagonal() -= ax.spring;
        blk.bottomRightCorner<6, 6>().diagonal() = -ax.a;
      }
      ev.jac.block<6, 6>(row + 6, 6 * k).diagonal() = ax.gain;
      if (L.impedance) {
        const Vector6d fR = fR_at(k);
        for (int i = 0; i < 6; ++i) {
          const double p = mu(i) - rest(i);
          const double v = mu(6 + i);
          const double u = j.mean(i) - fR(i);
          ev.jac(row + 6 + i, L.impedance_offset + i) =
              -(ax.dspring_dM(i) * p + ax.da_dM(i) * v + ax.dgain_dM(i) * u);
          ev.jac(row + 6 + i, L.impedance_offset + 6 + i) = -ax.da_dD(i) * v;
        }
      }
    }
  }

  if (L.attachment) {
    for (int k = 1; k <= H; ++k) {
      const int row = L.continuity + 3 * (k - 1);
      Vector6d mean_pose = Vector6d::Zero();
      for (int n = 0; n < N; ++n) mean_pose += belief_[n] * mu_at(n, k).head<6>();
      const Matrix3d dr = rotate_jacobian(RotVec(Vector3d(mean_pose.tail<3>())),
                                          arm.grasp_offset);
      const JointState q{z.segment<4>(q_index(k))};
      ev.jac.block<3, 4>(row, q_index(k)) = jacobian(arm, q);
      const Vector3d yk = y.segment<3>(row);
      if (!yk.isZero()) {
        const auto Hq = fk_hessian(arm, q);
        Eigen::Matrix4d B;
        for (int a = 0; a < 4; ++a) {
          for (int b = 0; b < 4; ++b) B(a, b) = yk.dot(Hq[a][b]);
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(0.5 * (B + B.transpose()));
        const Vector4d ev4 = es.eigenvalues().cwiseMax(0.0);
        Hs.block<4, 4>(q_index(k), q_index(k)) +=
            es.eigenvectors() * ev4.asDiagonal() * es.eigenvectors().transpose();
      }
      ev.jac.block<3, 3>(row, L.arm_offset).setIdentity();
      for (int n = 0; n < N; ++n) {
        const int si = state_index(n, k);
        ev.jac.block<3, 3>(row, si) -= belief_[n] * Matrix3d::Identity();
        ev.jac.block<3, 3>(row, si + 3) -= belief_[n] * dr;
      }
    }
  }
  return ev;
}

double MpcProblem::max_continuity_residual(const VectorXd& z) const {
  const Evaluation ev = evaluate(z, false);
  return ev.c.head(layout_.continuity).cwiseAbs().maxCoeff();
}

std::vector<ModeTrajectory> MpcProblem::trajectories(const VectorXd& z) const {
  const Layout& L = layout_;
  const AxisModel ax = axis_model(z);
  DiscreteDynamics dyn;
  dyn.Ts = cfg_.Ts;
  dyn.damping = ax.a;
  dyn.spring = ax.spring;
  dyn.input_gain = ax.gain;
  dyn.rest = params_.x0.vector();
  ArmModel arm = arm_;
  if (L.arm) arm.shoulder = z.segment<3>(L.arm_offset);
  JetRequest req;
  req.variance = options_.full_gp_cov ? VarianceMode::kFull : VarianceMode::kSimplified;

  std::vector<ModeTrajectory> out(L.N);
  for (int n = 0; n < L.N; ++n) {
    ModeTrajectory& t = out[n];
    for (int k = 0; k <= L.H; ++k) {
      const Vector12d mu =
          k == 0 ? xi_.vector()
                 : Vector12d(z.segment<12>(L.state_offset + 12 * (n * L.H + k - 1)));
      const ForceJet j = models_[n]->jet(Vector6d(mu.head<6>()), req);
      t.rollout.mu.push_back(mu);
      t.force_mean.push_back(j.mean);
      t.force_var.push_back(j.var);
      if (k == 0) {
        t.rollout.sigma.push_back(Matrix12d::Zero());
      } else {
        const Matrix6d cov =
            options_.state_cov ? Matrix6d(t.force_var[k - 1].asDiagonal()) : Matrix6d::Zero();
        t.rollout.sigma.push_back(step_cov(dyn, t.rollout.sigma.back(), cov));
      }
      if (L.arm) {
        const int kq = std::max(k, 1);
        t.torques.push_back(torques(
            arm, JointState{z.segment<4>(L.arm_offset + 3 + 4 * (kq - 1))},
            j.mean.head<3>()));
      }
    }
  }
  return out;
}

}  // namespace gpmpc
