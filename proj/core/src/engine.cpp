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
#include <utility>

#include "gpmpc/mpc.hpp"

namespace gpmpc {

namespace {

// a non-converged iterate is still used while its continuity error stays
// this many slacks away; beyond it the planner output is not trusted
constexpr double kFallbackResidual = 100.0;

}  // namespace

MpcEngine::MpcEngine(ModelSet models, AdmittanceParams params, Weights weights,
                     SolverConfig cfg, ProblemOptions options, ArmModel arm)
    : models_(std::move(models)),
      params_(std::move(params)),
      weights_(std::move(weights)),
      cfg_(std::move(cfg)),
      options_(options),
      arm_(std::move(arm)) {
  if (models_.empty()) throw DimensionMismatch("mpc engine: no mode models");
  params_.validate();
  weights_.validate();
  cfg_.validate();
}

MpcEngine::StepResult MpcEngine::step(const State& xi, const Belief& b) {
  const MpcProblem problem =
      build_problem(models_, params_, b, xi, weights_, cfg_, options_, arm_);
  StepResult out;
  out.solution = solve(problem, cfg_.warm_start && last_ ? &*last_ : nullptr);
  const SolverStats& st = out.solution.stats;
  const bool usable = st.converged || (std::isfinite(out.solution.objective) &&
                                       st.max_continuity_residual <= kFallbackResidual * cfg_.rho);
  if (usable && out.solution.u.fR.front().finite()) {
    out.fR = out.solution.u.fR.front();
    last_ = out.solution;
  } else {
    out.fallback = true;
    out.fR = Wrench();
    last_.reset();
  }
  return out;
}

MpcEngine::StepResult mpc_step(MpcEngine& engine, const State& xi, const Belief& b) {
  return engine.step(xi, b);
}

}  // namespace gpmpc
