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


#include <cmath>

#include "gpmpc/sim.hpp"

namespace gpmpc {
namespace {

// the episode stream is decorrelated from the commissioning stream, which
// is seeded with the raw scenario seed
constexpr std::uint64_t kEpisodeStream = 0x9e3779b97f4a7c15ULL;

EpisodeMeta make_meta(const Scenario& s) {
  EpisodeMeta m;
  m.scenario = s.name;
  m.scenario_hash = scenario_hash(s);
  m.seed = s.seed;
  m.modes = static_cast<int>(s.modes.size());
  m.horizon = s.solver.H;
  m.base_rate = s.base_rate;
  m.belief_rate = s.belief_rate;
  m.control_rate = s.control_rate;
  for (const auto& mode : s.modes) m.goals.push_back(mode.goal.vector());
  return m;
}

PlanSnapshot snapshot(const MpcEngine::StepResult& r) {
  PlanSnapshot p;
  for (const auto& mode : r.solution.modes) {
    std::vector<Vector6d> poses;
    for (size_t k = 1; k < mode.rollout.mu.size(); ++k) {
      poses.push_back(mode.rollout.mu[k].head<6>());
    }
    p.poses.push_back(std::move(poses));
  }
  for (const auto& f : r.solution.u.fR) p.fR.push_back(f.vector());
  p.iterations = r.solution.stats.iterations;
  p.converged = r.solution.stats.converged;
  p.fallback = r.fallback;
  p.residual = r.solution.stats.max_continuity_residual;
  p.objective = r.solution.objective;
  return p;
}

}  // namespace

EpisodeRunner::EpisodeRunner(const Scenario& s, ModelSet models)
    : scenario_(s),
      models_(std::move(models)),
      dyn_(discretize(s.admittance, 1.0 / s.base_rate)),
      engine_(make_engine(s, models_)),
      estimator_(models_, s.inference),
      rng_(s.seed ^ kEpisodeStream) {
  scenario_.validate();
  if (models_.size() != scenario_.modes.size()) {
    throw DimensionMismatch("EpisodeRunner: one model per mode is required");
  }
  total_ticks_ = std::llround(scenario_.duration * scenario_.base_rate);
  reset();
}

void EpisodeRunner::reset() {
  tick_ = 0;
  state_ = scenario_.initial;
  held_fR_ = Wrench();
  rng_.seed(scenario_.seed ^ kEpisodeStream);
  estimator_.reset();
  engine_.reset();
  external_.reset();
  last_plan_.reset();
  last_solve_ms_ = 0.0;
  log_ = EpisodeLog{};
  log_.meta = make_meta(scenario_);
}

bool EpisodeRunner::done() const { return tick_ >= total_ticks_; }

double EpisodeRunner::time() const {
  return static_cast<double>(tick_) / scenario_.base_rate;
}

bool EpisodeRunner::is_tick(double rate) const {
  return rate_tick(tick_, rate, scenario_.base_rate);
}

void EpisodeRunner::set_schedule(std::vector<IntentSwitch> schedule) {
  Scenario s = scenario_;
  s.intent_schedule = std::move(schedule);
  s.validate();
  scenario_ = std::move(s);
}

const TickRecord& EpisodeRunner::step() {
  TickRecord rec;
  rec.tick = tick_;
  rec.t = time();
  rec.x = state_.x.vector();
  rec.xdot = state_.xdot;
  rec.intent = intent_at(scenario_, rec.t);

  Wrench fH;
  const Disturbance* push = nullptr;
  for (const auto& d : scenario_.disturbances) {
    if (rec.t >= d.t_start && rec.t < d.t_end) push = &d;
  }
  if (external_) {
    fH = *external_;
    rec.source = ForceSource::kExternal;
  } else if (push) {
    fH = push->wrench;
    rec.source = ForceSource::kDisturbance;
  } else {
    const auto& mode = scenario_.modes[rec.intent];
    fH = synthetic_human(mode.goal, state_.x, mode.human, rng_);
  }
  rec.fH = fH.vector();

  if (is_tick(scenario_.belief_rate)) {
    rec.belief_tick = true;
    estimator_.observe(state_.x, fH);
  }
  rec.belief = estimator_.belief().b;

  if (is_tick(scenario_.control_rate)) {
    auto r = mpc_step(engine_, state_, estimator_.belief());
    held_fR_ = r.fR;
    last_solve_ms_ = r.solution.stats.wall_ms;
    if (!keep_history_) log_.solve_ms.clear();
    log_.solve_ms.push_back(last_solve_ms_);
    if (record_plans_) rec.plan = snapshot(r);
    last_plan_ = std::move(r.solution);
  }
  rec.fR = held_fR_.vector();

  state_ = simulate_step(dyn_, state_, fH, held_fR_, scenario_.solver.velocity_limit);
  ++tick_;
  if (!keep_history_) log_.ticks.clear();
  log_.ticks.push_back(std::move(rec));
  return log_.ticks.back();
}

EpisodeLog run_episode(const Scenario& s, const ModelSet& models) {
  EpisodeRunner runner(s, models);
  while (!runner.done()) runner.step();
  return runner.take_log();
}

EpisodeOutcome evaluate_episode(const Scenario& s, const EpisodeLog& log,
                                double tolerance, double threshold) {
  EpisodeOutcome out;
  if (log.ticks.empty()) return out;
  const auto& last = log.ticks.back();
  const Pose goal = s.modes[intent_at(s, last.t)].goal;
  out.final_error = (last.x.head<3>() - goal.p).norm();
  out.reached = out.final_error <= tolerance;

  const IntentSwitch* sw = nullptr;
  for (const auto& e : s.intent_schedule) {
    if (e.t > 0.0) sw = &e;
  }
  if (sw) {
    for (const auto& rec : log.ticks) {
      if (rec.t >= sw->t && rec.belief(sw->mode) > threshold) {
        out.belief_latency = rec.t - sw->t;
        break;
      }
    }
  }
  for (const auto& rec : log.ticks) {
    if (rec.plan && rec.plan->fallback) ++out.fallbacks;
  }
  return out;
}

}  // namespace gpmpc
