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
#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/SparseCore>

#include "gpmpc/mpc.hpp"

namespace gpmpc {

namespace {

constexpr double kPenaltyInit = 1e8;
constexpr double kPenaltyMax = 1e12;
constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 30;
constexpr double kInnerTolerance = 1e-4;

struct Merit {
  double phi = 0.0;
  double f = 0.0;
  VectorXd c;
  VectorXd y;  // first-order multiplier estimate rho (s - P(s)), s = c + lambda/rho
};

class AugmentedLagrangian {
 public:
  explicit AugmentedLagrangian(const MpcProblem& problem) : p_(problem) {}

  Merit merit(const MpcProblem::Evaluation& ev, const VectorXd& lambda, double rho) const {
    Merit m;
    m.f = ev.f;
    m.c = ev.c;
    m.y.resize(ev.c.size());
    double pen = 0.0;
    const VectorXd& lo = p_.constraint_lower();
    const VectorXd& hi = p_.constraint_upper();
    for (Eigen::Index i = 0; i < ev.c.size(); ++i) {
      const double s = ev.c(i) + lambda(i) / rho;
      const double d = s - std::clamp(s, lo(i), hi(i));
      m.y(i) = rho * d;
      pen += 0.5 * rho * d * d - 0.5 * lambda(i) * lambda(i) / rho;
    }
    m.phi = ev.f + pen;
    return m;
  }

  double violation(const VectorXd& c) const {
    // worst violation in units of the row tolerance
    double v = 0.0;
    const VectorXd& lo = p_.constraint_lower();
    const VectorXd& hi = p_.constraint_upper();
    const VectorXd& tol = p_.constraint_tolerance();
    for (Eigen::Index i = 0; i < c.size(); ++i) {
      const double d = std::abs(c(i) - std::clamp(c(i), lo(i), hi(i)));
      v = std::max(v, d / tol(i));
    }
    return v;
  }

 private:
  const MpcProblem& p_;
};

VectorXd project(const VectorXd& z, const VectorXd& lo, const VectorXd& hi) {
  return z.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

MpcSolution solve(const MpcProblem& problem, const MpcSolution* warm) {
  const auto start = std::chrono::steady_clock::now();
  const SolverConfig& cfg = problem.config();
  const VectorXd& lo = problem.lower();
  const VectorXd& hi = problem.upper();
  const Eigen::Index n = problem.num_variables();
  const AugmentedLagrangian al(problem);

  const bool use_warm = cfg.warm_start && warm != nullptr;
  VectorXd z = problem.initial_guess(use_warm ? warm : nullptr);
  VectorXd lambda = problem.initial_multipliers(use_warm ? warm : nullptr);
  double rho = kPenaltyInit;
  if (use_warm && warm->stats.penalty > 0) {
    rho = std::clamp(warm->stats.penalty, kPenaltyInit, kPenaltyMax);
  }

  SolverStats stats;
  bool converged = false;
  double last_violation = std::numeric_limits<double>::infinity();
  MpcProblem::Evaluation ev = problem.evaluate(z, true, &lambda, rho);
  Merit m = al.merit(ev, lambda, rho);

  // Single loop: projected Newton steps on the augmented Lagrangian, with a
  // multiplier update whenever the subproblem is solved to the current
  // inner tolerance (or can make no progress).
  double eta = kInnerTolerance;
  stats.outer_iterations = 1;
  while (stats.iterations < cfg.max_iterations && std::isfinite(m.phi)) {
    const VectorXd g = ev.grad + ev.jac.transpose() * m.y;
    MatrixXd Hm = ev.hess;
    {
      const Eigen::SparseMatrix<double> Js = ev.jac.sparseView();
      const Eigen::SparseMatrix<double> JtJ = Js.transpose() * Js;
      Hm += rho * JtJ;
    }

    // binding bounds: at the bound with the gradient pushing outward
    std::vector<Eigen::Index> free;
    std::vector<char> bound(n, 0);
    free.reserve(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double width = std::isfinite(hi(i) - lo(i)) ? hi(i) - lo(i) : 1.0;
      const double eps = 1e-10 * std::max(1.0, width);
      if ((z(i) <= lo(i) + eps && g(i) > 0) || (z(i) >= hi(i) - eps && g(i) < 0)) {
        bound[i] = 1;
      } else {
        free.push_back(i);
      }
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(free.size());
    MatrixXd Hf(nf, nf);
    VectorXd gf(nf);
    for (Eigen::Index a = 0; a < nf; ++a) {
      gf(a) = g(free[a]);
      for (Eigen::Index b = 0; b <= a; ++b) Hf(a, b) = Hm(free[a], free[b]);
    }
    VectorXd df;
    double shift = 1e-12;
    for (int attempt = 0; attempt < 12; ++attempt) {
      MatrixXd R = Hf.selfadjointView<Eigen::Lower>();
      R.diagonal() += shift * (Hf.diagonal().cwiseAbs().array() + 1.0).matrix();
      Eigen::LLT<MatrixXd> llt(R);
      if (llt.info() == Eigen::Success) {
        df = -llt.solve(gf);
        if (df.allFinite()) break;
      }
      df.resize(0);
      shift *= 100.0;
    }
    if (df.size() != nf) break;
    ++stats.iterations;

    const double decrement = -gf.dot(df);
    const double scale = 1.0 + std::abs(m.phi);
    const double viol = al.violation(ev.c);
    if (decrement <= cfg.tolerance * scale && viol <= 1.0) {
      converged = true;
      break;
    }
    bool update = decrement <= eta * scale;
    if (decrement > cfg.tolerance * scale) {
      VectorXd d = VectorXd::Zero(n);
      for (Eigen::Index a = 0; a < nf; ++a) d(free[a]) = df(a);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (bound[i]) d(i) = -g(i) / std::max(Hm(i, i), 1e-12);
      }
      double alpha = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < kMaxBacktracks; ++bt) {
        const VectorXd trial = project(z + alpha * d, lo, hi);
        double pred = alpha * decrement;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (bound[i]) pred += g(i) * (z(i) - trial(i));
        }
        const Merit tm = al.merit(problem.evaluate(trial, false), lambda, rho);
        if (std::isfinite(tm.phi) && tm.phi <= m.phi - kArmijo * pred) {
          z = trial;
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (accepted) {
        ev = problem.evaluate(z, true, &lambda, rho);
        m = al.merit(ev, lambda, rho);
      } else {
        update = true;
      }
    }
    if (update) {
      if (stats.outer_iterations >= cfg.max_outer_iterations) break;
      const double v = al.violation(ev.c);
      lambda = m.y;
      if (v > 0.25 * last_violation) rho = std::min(rho * 10.0, kPenaltyMax);
      last_violation = std::min(last_violation, v);
      eta = std::max(cfg.tolerance, 0.1 * eta);
      ++stats.outer_iterations;
      m = al.merit(ev, lambda, rho);
    }
  }

  MpcSolution sol;
  sol.z = z;
  sol.multipliers = m.y;
  sol.u = problem.decode(z);
  sol.modes = problem.trajectories(z);
  sol.objective = ev.f;
  stats.converged = converged;
  stats.penalty = rho;
  stats.max_continuity_residual =
      ev.c.head(problem.layout().continuity).cwiseAbs().maxCoeff();
  stats.wall_ms = std::chrono::duration<double, std::milli>(
                      std::chrono::steady_clock::now() - start)
                      .count();
  sol.stats = stats;
  return sol;
}

}  // namespace gpmpc
