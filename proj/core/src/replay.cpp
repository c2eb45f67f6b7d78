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

#include "gpmpc/sim.hpp"

namespace gpmpc {

std::vector<VectorXd> replay_beliefs(const EpisodeLog& log, const ModelSet& models,
                                     const InferenceConfig& cfg) {
  ModeEstimator est(models, cfg);
  std::vector<VectorXd> out;
  out.reserve(log.ticks.size());
  for (const auto& r : log.ticks) {
    if (r.belief_tick) est.observe(Pose::from_vector(r.x), Wrench::from_vector(r.fH));
    out.push_back(est.belief().b);
  }
  return out;
}

std::vector<BenchRow> table1_rows() {
  auto row = [](std::string label, bool full, bool state, int points, Objective obj,
                bool imp, bool arm) {
    BenchRow r;
    r.label = std::move(label);
    r.options = {full, state, imp, arm};
    r.gp_points = points;
    r.objective = obj;
    return r;
  };
  const auto E = Objective::kExpected;
  return {row("full_gp_cov", true, true, 50, E, false, false),
          row("baseline", false, true, 50, E, false, false),
          row("no_state_cov", false, false, 50, E, false, false),
          row("gp35", false, true, 35, E, false, false),
          row("impedance", false, true, 50, E, true, false),
          row("arm", false, true, 50, E, false, true),
          row("risk_sensitive", false, true, 50, Objective::kRiskSensitive, false, false)};
}

BenchResult replay_bench(const EpisodeLog& log, const Scenario& s,
                         const Commissioned& base, const BenchRow& row, int stride,
                         int max_solves) {
  if (stride < 1) throw Error("replay_bench: stride must be positive");
  if (static_cast<int>(base.models.size()) != log.meta.modes) {
    throw DimensionMismatch("replay_bench: model count differs from the log");
  }
  ModelSet models = base.models;
  if (row.gp_points != s.gp_points || s.inducing_points > 0) {
    models.clear();
    for (size_t n = 0; n < base.demos.per_mode.size(); ++n) {
      models.push_back(std::make_shared<GpModel>(
          fit(base.demos.per_mode[n], s.hyperparams, row.gp_points, static_cast<int>(n))));
    }
  }
  Weights w = s.weights;
  w.objective = row.objective;
  MpcEngine engine(models, s.admittance, w, s.solver, row.options,
                   s.arm.value_or(ArmModel{}));

  BenchResult out;
  out.row = row;
  double warm_sum = 0.0;
  double iter_sum = 0.0;
  int control_index = 0;
  for (const auto& r : log.ticks) {
    if (!rate_tick(r.tick, log.meta.control_rate, log.meta.base_rate)) continue;
    if (control_index++ % stride != 0) continue;
    if (max_solves > 0 && out.solves >= max_solves) break;

    State xi;
    xi.x = Pose::from_vector(r.x);
    xi.xdot = r.xdot;
    const auto t0 = std::chrono::steady_clock::now();
    auto res = engine.step(xi, Belief(r.belief));
    const double ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
            .count();
    if (out.solves == 0) {
      out.cold_ms = ms;
    } else {
      warm_sum += ms;
      out.warm_worst_ms = std::max(out.warm_worst_ms, ms);
    }
    ++out.solves;
    if (res.solution.stats.converged) ++out.converged;
    iter_sum += res.solution.stats.iterations;
    out.first_controls.push_back(res.fR.vector());
  }
  if (out.solves > 1) out.warm_avg_ms = warm_sum / (out.solves - 1);
  if (out.solves > 0) out.avg_iterations = iter_sum / out.solves;
  return out;
}

}  // namespace gpmpc
