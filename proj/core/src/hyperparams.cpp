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
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "gpmpc/gp.hpp"

namespace gpmpc {

namespace {

// theta = log(l_lin, l_rot, sf_lin, sn_lin, sf_rot, sn_rot)
Vector6d to_theta(const GpHyperparams& h) {
  Vector6d t;
  t << h.linear.l, h.rotational.l, h.linear.sigma_f, h.linear.sigma_n,
      h.rotational.sigma_f, h.rotational.sigma_n;
  return t.array().log().matrix();
}

GpHyperparams from_theta(const Vector6d& theta) {
  const Vector6d v = theta.array().exp().matrix();
  GpHyperparams h;
  h.linear = {v(0), v(2), v(3)};
  h.rotational = {v(1), v(4), v(5)};
  return h;
}

struct LocalResult {
  Vector6d theta;
  double value = -std::numeric_limits<double>::infinity();
  bool ok = false;
};

LocalResult ascend(const TrainingSet& data, const Vector6d& lo, const Vector6d& hi,
                   Vector6d theta, const HyperFitOptions& options) {
  auto project = [&](const Vector6d& t) { return t.cwiseMax(lo).cwiseMin(hi); };
  theta = project(theta);
  LocalResult out;
  double f = log_marginal_likelihood(data, from_theta(theta));
  Vector6d g = log_marginal_likelihood_gradient(data, from_theta(theta));
  double step = 0.1 / std::max(1e-12, g.cwiseAbs().maxCoeff());
  for (int it = 0; it < options.max_iterations; ++it) {
    const Vector6d pg = project(theta + g) - theta;
    if (pg.cwiseAbs().maxCoeff() < options.tolerance) break;
    bool accepted = false;
    Vector6d tnew;
    double fnew = f;
    for (int ls = 0; ls < 40; ++ls) {
      tnew = project(theta + step * g);
      try {
        fnew = log_marginal_likelihood(data, from_theta(tnew));
      } catch (const Error&) {
        step *= 0.5;
        continue;
      }
      if (fnew >= f + 1e-4 * g.dot(tnew - theta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    const Vector6d gnew = log_marginal_likelihood_gradient(data, from_theta(tnew));
    const Vector6d s = tnew - theta;
    const double sy = -s.dot(gnew - g);
    const double gain = fnew - f;
    theta = tnew;
    f = fnew;
    g = gnew;
    step = sy > 1e-16 ? s.squaredNorm() / sy : step * 2.0;
    if (gain < options.tolerance * (1.0 + std::abs(f))) break;
  }
  out.theta = theta;
  out.value = f;
  out.ok = std::isfinite(f);
  return out;
}

}  // namespace

GpHyperparams fit_hyperparams(const TrainingSet& data, const HyperBounds& bounds,
                              const GpHyperparams& init,
                              const HyperFitOptions& options) {
  bounds.lower.validate();
  bounds.upper.validate();
  init.validate();
  const Vector6d lo = to_theta(bounds.lower);
  const Vector6d hi = to_theta(bounds.upper);
  const Vector6d t0 = to_theta(init);
  if ((lo.array() > hi.array()).any() || (t0.array() < lo.array() - 1e-12).any() ||
      (t0.array() > hi.array() + 1e-12).any()) {
    throw Error("fit_hyperparams: bounds must contain the initial point");
  }

  std::vector<Vector6d> starts{t0};
  const std::array<std::array<double, 2>, 4> fractions{
      {{0.25, 0.25}, {0.75, 0.75}, {0.25, 0.75}, {0.75, 0.25}}};
  for (const auto& f : fractions) {
    Vector6d t;
    // length-scales at f[0], amplitudes and noises at f[1]
    for (int i = 0; i < 6; ++i) {
      const double frac = i < 2 ? f[0] : f[1];
      t(i) = lo(i) + frac * (hi(i) - lo(i));
    }
    starts.push_back(t);
  }

  LocalResult best;
  for (const Vector6d& s : starts) {
    LocalResult r;
    try {
      r = ascend(data, lo, hi, s, options);
    } catch (const Error&) {
      continue;
    }
    if (r.ok && r.value > best.value) best = r;
  }
  if (!best.ok) throw OptimizerFailure("fit_hyperparams: every start failed");
  return from_theta(best.theta);
}

GpHyperparams fit_hyperparams(const std::vector<Demonstration>& demos,
                              const HyperBounds& bounds, const GpHyperparams& init,
                              int cap) {
  PreprocessOptions options;
  options.cap = cap;
  return fit_hyperparams(preprocess(demos, options), bounds, init);
}

}  // namespace gpmpc
