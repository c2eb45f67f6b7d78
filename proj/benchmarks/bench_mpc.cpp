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


#include <benchmark/benchmark.h>

#include "gpmpc/sim.hpp"

namespace gpmpc {
namespace {

const Commissioned& two_goal() {
  static const Commissioned c = commission(builtin_scenario("two_goal"));
  return c;
}

// one solve from a fixed state between the goals; arg 0 cold, 1 warm
void BM_MpcSolve(benchmark::State& state, int row) {
  const BenchRow r = table1_rows()[row];
  const Scenario s = builtin_scenario("two_goal");
  const Commissioned& base = two_goal();
  ModelSet models = base.models;
  if (r.gp_points != s.gp_points) {
    models.clear();
    for (size_t n = 0; n < base.demos.per_mode.size(); ++n) {
      models.push_back(std::make_shared<GpModel>(
          fit(base.demos.per_mode[n], s.hyperparams, r.gp_points, static_cast<int>(n))));
    }
  }
  Weights w = s.weights;
  w.objective = r.objective;
  State xi;
  xi.x.p = Vector3d(0.0, 0.03, 0.0);
  xi.xdot.head<3>() = Vector3d(0.0, 0.05, 0.0);
  const Belief b(VectorXd((VectorXd(2) << 0.7, 0.3).finished()));
  const MpcProblem p = build_problem(models, s.admittance, b, xi, w, s.solver, r.options);
  const bool warm = state.range(0) == 1;
  const MpcSolution first = solve(p);
  for (auto _ : state) benchmark::DoNotOptimize(solve(p, warm ? &first : nullptr));
  state.SetLabel(r.label);
}

BENCHMARK_CAPTURE(BM_MpcSolve, full_gp_cov, 0)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, baseline, 1)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, no_state_cov, 2)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, gp35, 3)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, impedance, 4)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, arm, 5)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_MpcSolve, risk_sensitive, 6)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace gpmpc
