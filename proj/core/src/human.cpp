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
#include <numbers>

#include "gpmpc/sim.hpp"

namespace gpmpc {
namespace {

// source set for sparse models; inducing points summarize this many samples
constexpr int kSparseSourcePoints = 200;

Vector3d clip_norm(const Vector3d& v, double cap) {
  const double n = v.norm();
  return n > cap ? Vector3d(v * (cap / n)) : v;
}

std::vector<Pose> demo_starts(const Scenario& s, const Pose& goal, int n) {
  std::vector<Pose> out;
  if (!s.demo_starts.empty()) {
    for (int i = 0; i < n; ++i) out.push_back(s.demo_starts[i % s.demo_starts.size()]);
    return out;
  }
  // evenly on a horizontal circle around the goal, the first start at the
  // initial pose, so the data surrounds the goal; the radius keeps
  // neighbouring starts at least 0.1 m apart
  Vector3d d = s.initial.x.p - goal.p;
  d.z() = 0.0;
  double radius = d.norm();
  const double th0 = radius > 1e-9 ? std::atan2(d.y(), d.x()) : 0.0;
  if (n > 1) radius = std::max(radius, 0.06 / std::sin(std::numbers::pi / n));
  radius = std::max(radius, 0.1);
  for (int i = 0; i < n; ++i) {
    const double th = th0 + 2.0 * std::numbers::pi * i / n;
    Pose p = s.initial.x;
    p.p = goal.p + radius * Vector3d(std::cos(th), std::sin(th), 0.0);
    p.p.z() = s.initial.x.p.z();
    out.push_back(p);
  }
  return out;
}

}  // namespace

bool rate_tick(std::int64_t tick, double rate, double base_rate) {
  if (tick == 0) return true;
  const double r = rate / base_rate;
  return std::floor(static_cast<double>(tick) * r + 1e-9) >
         std::floor(static_cast<double>(tick - 1) * r + 1e-9);
}

Wrench synthetic_human(const Pose& goal, const Pose& x, const HumanParams& params,
                       Rng& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Wrench w;
  const Vector3d d = goal.p - x.p;
  if (d.norm() > params.deadband) w.f = clip_norm(params.K_h * d, params.f_cap);
  if (params.pin_contact && d.norm() < params.pin_radius && d.norm() > 0.0) {
    w.f -= params.pin_gain * (params.pin_radius - d.norm()) * d.normalized();
  }
  // rotation still to go, in the current TCP frame
  const Vector3d e = pose_error(goal, x).tail<3>();
  if (e.norm() > params.deadband_rot) w.m = clip_norm(params.K_rot * e, params.m_cap);
  for (int i = 0; i < 3; ++i) w.f(i) += params.noise * gauss(rng);
  for (int i = 0; i < 3; ++i) w.m(i) += params.moment_noise * gauss(rng);
  return w;
}

State simulate_step(const DiscreteDynamics& dyn, const State& xi, const Wrench& fH,
                    const Wrench& fR, const Vector6d& velocity_limit) {
  State next;
  next.x.p = xi.x.p + dyn.Ts * xi.xdot.head<3>();
  next.x.r = compose(xi.x.r, dyn.Ts * xi.xdot.tail<3>());
  const Vector6d drive = fH.vector() - fR.vector();
  const Vector6d e = pose_error(xi.x, Pose::from_vector(dyn.rest));
  for (int i = 0; i < 6; ++i) {
    const double v = dyn.spring(i) * e(i) + dyn.damping(i) * xi.xdot(i) +
                     dyn.input_gain(i) * drive(i);
    next.xdot(i) = std::clamp(v, -velocity_limit(i), velocity_limit(i));
  }
  return next;
}

DemoSet generate_demos(const Scenario& s, int n_demos, Rng& rng) {
  if (n_demos < 1) throw Error("generate_demos: n_demos must be positive");
  const DiscreteDynamics dyn = discretize(s.admittance, 1.0 / s.base_rate);
  const auto max_ticks = static_cast<std::int64_t>(std::ceil(s.demo_timeout * s.base_rate));

  DemoSet out;
  for (const auto& mode : s.modes) {
    const auto starts = demo_starts(s, mode.goal, n_demos);
    std::vector<Demonstration> demos;
    std::vector<bool> flags;
    for (const auto& start : starts) {
      State xi;
      xi.x = start;
      Demonstration demo;
      bool reached = false;
      std::int64_t stop_tick = max_ticks;
      for (std::int64_t k = 0; k <= stop_tick; ++k) {
        const double t = static_cast<double>(k) / s.base_rate;
        const Wrench fH = synthetic_human(mode.goal, xi.x, mode.human, rng);
        const bool inside = (mode.goal.p - xi.x.p).norm() < mode.human.deadband &&
                            pose_error(mode.goal, xi.x).tail<3>().norm() < mode.human.deadband_rot;
        if (!reached && inside) {
          reached = true;
          stop_tick = k + static_cast<std::int64_t>(std::llround(s.demo_dwell * s.base_rate));
        }
        // noise can walk the hand out of the deadband while dwelling; the
        // demo ends on the first tick back inside
        if (reached && k == stop_tick && !inside) stop_tick = std::min(k + 1, max_ticks);
        if (rate_tick(k, s.demo_rate, s.base_rate) || k == stop_tick) {
          demo.samples.push_back({t, xi.x, xi.xdot, fH});
        }
        xi = simulate_step(dyn, xi, fH, Wrench(), s.solver.velocity_limit);
      }
      demos.push_back(std::move(demo));
      flags.push_back(!reached);
    }
    out.per_mode.push_back(std::move(demos));
    out.timed_out.push_back(std::move(flags));
  }
  return out;
}

Commissioned commission(const Scenario& s) {
  s.validate();
  Rng rng(s.seed);
  Commissioned c;
  c.demos = generate_demos(s, s.demos_per_mode, rng);
  for (size_t n = 0; n < s.modes.size(); ++n) {
    const auto& files = s.modes[n].demo_files;
    if (files.empty()) continue;
    c.demos.per_mode[n].clear();
    c.demos.timed_out[n].clear();
    for (const auto& f : files) {
      c.demos.per_mode[n].push_back(read_demonstration(f));
      c.demos.timed_out[n].push_back(false);
    }
  }
  for (size_t n = 0; n < s.modes.size(); ++n) {
    const int mode = static_cast<int>(n);
    if (s.inducing_points > 0) {
      TrainingSet big = preprocess(c.demos.per_mode[n],
                                   {3.0, std::max(kSparseSourcePoints, s.inducing_points)});
      GpModel full = GpModel::exact(std::move(big), s.hyperparams, mode);
      c.gps.push_back(sparsify(full, std::min(s.inducing_points, full.support_size())));
    } else {
      c.gps.push_back(fit(c.demos.per_mode[n], s.hyperparams, s.gp_points, mode));
    }
  }
  for (const auto& gp : c.gps) c.models.push_back(std::make_shared<GpModel>(gp));
  return c;
}

MpcEngine make_engine(const Scenario& s, const ModelSet& models) {
  return MpcEngine(models, s.admittance, s.weights, s.solver, s.options,
                   s.arm.value_or(ArmModel{}));
}

}  // namespace gpmpc
