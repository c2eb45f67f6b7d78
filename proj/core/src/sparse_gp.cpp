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

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "gpmpc/gp.hpp"
#include "kernel_detail.hpp"

namespace gpmpc {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// gradient of kappa(z, x) w.r.t. z, unit amplitude
inline Vector6d kappa_grad(const Eigen::Ref<const Vector6d>& z,
                           const Eigen::Ref<const Vector6d>& x, double kappa,
                           const Vector6d& w) {
  return -2.0 * kappa * w.cwiseProduct(z - x);
}

MatrixXd kmeans(const MatrixXd& X, int R, const Vector6d& w, int iterations) {
  const Eigen::Index S = X.rows();
  MatrixXd centers(R, 6);
  for (int i = 0; i < R; ++i) {
    const Eigen::Index idx =
        R == 1 ? S / 2
               : static_cast<Eigen::Index>(std::llround(
                     static_cast<double>(i) * static_cast<double>(S - 1) / (R - 1)));
    centers.row(i) = X.row(idx);
  }
  std::vector<int> assign(static_cast<std::size_t>(S), -1);
  for (int it = 0; it < iterations; ++it) {
    bool changed = false;
    for (Eigen::Index s = 0; s < S; ++s) {
      int best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (int c = 0; c < R; ++c) {
        const double d =
            ((X.row(s) - centers.row(c)).array().square() * w.transpose().array()).sum();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (assign[static_cast<std::size_t>(s)] != best) {
        assign[static_cast<std::size_t>(s)] = best;
        changed = true;
      }
    }
    MatrixXd sum = MatrixXd::Zero(R, 6);
    VectorXd count = VectorXd::Zero(R);
    for (Eigen::Index s = 0; s < S; ++s) {
      sum.row(assign[static_cast<std::size_t>(s)]) += X.row(s);
      count(assign[static_cast<std::size_t>(s)]) += 1.0;
    }
    for (int c = 0; c < R; ++c) {
      if (count(c) > 0.0) centers.row(c) = sum.row(c) / count(c);
    }
    if (!changed) break;
  }
  return centers;
}

}  // namespace

double elbo(const TrainingSet& data, const GpHyperparams& h, const MatrixXd& Z) {
  return elbo(data, h, Z, nullptr);
}

double elbo(const TrainingSet& data, const GpHyperparams& h, const MatrixXd& Z,
            MatrixXd* gradient) {
  h.validate();
  const Eigen::Index S = data.X.rows();
  const Eigen::Index R = Z.rows();
  const Vector6d w = h.inverse_sq_lengths();
  const MatrixXd kmm = detail::unit_gram(Z, Z, w);
  const MatrixXd kmn = detail::unit_gram(Z, data.X, w);
  const MatrixXd I = MatrixXd::Identity(R, R);

  MatrixXd GU = MatrixXd::Zero(R, S);  // dF/dU scaled to unit kernel
  MatrixXd GW = MatrixXd::Zero(R, R);
  double value = 0.0;
  for (int g = 0; g < 2; ++g) {
    const Hyperparams& hg = h.group(g);
    const double sf2 = hg.sigma_f * hg.sigma_f;
    const double s2 = hg.sigma_n * hg.sigma_n;
    const double sn = hg.sigma_n;
    const MatrixXd Y = detail::group_targets(data, g);
    const double channels = static_cast<double>(Y.cols());

    const MatrixXd U = sf2 * kmn;
    MatrixXd W = sf2 * kmm;
    W.diagonal().array() += detail::kJitter * sf2;
    const Eigen::LLT<MatrixXd> L(W);
    if (L.info() != Eigen::Success) throw Error("elbo: Kmm not positive definite");
    const MatrixXd A = L.matrixL().solve(U) / sn;
    MatrixXd B = A * A.transpose();
    B.diagonal().array() += 1.0;
    const Eigen::LLT<MatrixXd> LB(B);
    if (LB.info() != Eigen::Success) throw Error("elbo: B not positive definite");
    const MatrixXd c = LB.matrixL().solve(A * Y) / sn;

    value += channels * (-0.5 * static_cast<double>(S) * kLog2Pi -
                         LB.matrixLLT().diagonal().array().log().sum() -
                         static_cast<double>(S) * std::log(sn) -
                         0.5 * static_cast<double>(S) * sf2 / s2 +
                         0.5 * A.squaredNorm()) +
             (-0.5 * Y.squaredNorm() / s2 + 0.5 * c.squaredNorm());

    if (gradient == nullptr) continue;
    const MatrixXd Linv = L.matrixL().solve(I);
    const MatrixXd Winv = Linv.transpose() * Linv;
    const MatrixXd SigInv = Linv.transpose() * LB.solve(Linv);
    const MatrixXd SigInvU = SigInv * U;
    const MatrixXd WinvU = Winv * U;
    const MatrixXd V = SigInvU * Y;  // R x 3
    const MatrixXd gU = channels * (WinvU - SigInvU) / s2 +
                        (V * Y.transpose() - V * (V.transpose() * U) / s2) / (s2 * s2);
    const MatrixXd gW = channels * (0.5 * (Winv - SigInv) -
                                    0.5 / s2 * WinvU * WinvU.transpose()) -
                        0.5 / (s2 * s2) * V * V.transpose();
    GU += sf2 * gU;
    GW += sf2 * gW;
  }

  if (gradient != nullptr) {
    gradient->setZero(R, 6);
    for (Eigen::Index i = 0; i < R; ++i) {
      Vector6d gi = Vector6d::Zero();
      const Vector6d zi = Z.row(i).transpose();
      for (Eigen::Index j = 0; j < S; ++j) {
        gi += GU(i, j) * kappa_grad(zi, data.X.row(j).transpose(), kmn(i, j), w);
      }
      for (Eigen::Index j = 0; j < R; ++j) {
        if (j == i) continue;
        const double gw = GW(i, j) + GW(j, i);
        gi += gw * kappa_grad(zi, Z.row(j).transpose(), kmm(i, j), w);
      }
      gradient->row(i) = gi.transpose();
    }
  }
  return value;
}

GpModel sparsify(const GpModel& model, int R, const SparsifyOptions& options) {
  const TrainingSet& data = model.data();
  const int S = data.size();
  if (R < 1 || R > S) {
    throw Error("sparsify: inducing count must be in [1, training count]");
  }
  const GpHyperparams& h = model.hyperparams();
  if (R == S) return GpModel::sparse(data, h, data.X, model.mode());

  const Vector6d w = h.inverse_sq_lengths();
  const Vector6d scale = w.cwiseSqrt();  // to dimensionless coordinates
  const Eigen::RowVectorXd lo = data.X.colwise().minCoeff();
  const Eigen::RowVectorXd hi = data.X.colwise().maxCoeff();
  auto project = [&](MatrixXd& Z) {
    for (Eigen::Index i = 0; i < Z.rows(); ++i) {
      Z.row(i) = Z.row(i).cwiseMax(lo).cwiseMin(hi);
    }
  };

  MatrixXd Z = kmeans(data.X, R, w, options.kmeans_iterations);
  MatrixXd grad;
  double f = elbo(data, h, Z, &grad);
  // ascent in scaled coordinates: dF/dzeta = dF/dZ / scale
  auto scaled = [&](const MatrixXd& g) {
    MatrixXd out = g;
    for (int d = 0; d < 6; ++d) out.col(d) /= scale(d);
    return out;
  };
  MatrixXd gz = scaled(grad);
  double step = 1e-2 / std::max(1e-12, gz.cwiseAbs().maxCoeff());
  for (int it = 0; it < options.max_iterations; ++it) {
    bool accepted = false;
    MatrixXd Znew, gnew;
    double fnew = f;
    for (int ls = 0; ls < 30; ++ls) {
      Znew = Z;
      for (int d = 0; d < 6; ++d) Znew.col(d) += step * gz.col(d) / scale(d);
      project(Znew);
      MatrixXd dzeta = Znew - Z;
      for (int d = 0; d < 6; ++d) dzeta.col(d) *= scale(d);
      try {
        fnew = elbo(data, h, Znew, &gnew);
      } catch (const Error&) {
        step *= 0.5;
        continue;
      }
      if (fnew >= f + 1e-4 * (gz.array() * dzeta.array()).sum()) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    MatrixXd dzeta = Znew - Z;
    for (int d = 0; d < 6; ++d) dzeta.col(d) *= scale(d);
    const MatrixXd gznew = scaled(gnew);
    const double improvement = fnew - f;
    const double sy = -(dzeta.array() * (gznew - gz).array()).sum();
    Z = Znew;
    f = fnew;
    gz = gznew;
    // Barzilai-Borwein step for the next iteration
    if (sy > 1e-16) step = dzeta.squaredNorm() / sy;
    if (improvement < options.tolerance * (1.0 + std::abs(f))) break;
  }
  return GpModel::sparse(data, h, Z, model.mode());
}

}  // namespace gpmpc
