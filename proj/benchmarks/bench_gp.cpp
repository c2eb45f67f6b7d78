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

#include <random>

#include "gpmpc/gp.hpp"

namespace gpmpc {
namespace {

TrainingSet synthetic(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.2, 0.2);
  TrainingSet d;
  d.X.resize(n, 6);
  d.Y.resize(n, 6);
  for (int i = 0; i < n; ++i) {
    for (int c = 0; c < 6; ++c) d.X(i, c) = u(rng);
    for (int c = 0; c < 6; ++c) d.Y(i, c) = 50.0 * u(rng);
  }
  return d;
}

Vector6d query(int i) {
  Vector6d x;
  x << 0.01 * (i % 17), -0.01 * (i % 13), 0.005 * (i % 7), 0.0, 0.02 * (i % 5), 0.0;
  return x;
}

void BM_PredictExact(benchmark::State& state) {
  const GpModel m = GpModel::exact(synthetic(static_cast<int>(state.range(0)), 1), GpHyperparams{});
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(query(i++)));
}
BENCHMARK(BM_PredictExact)->Arg(35)->Arg(50)->Arg(200);

void BM_PredictSparse(benchmark::State& state) {
  const GpModel full = GpModel::exact(synthetic(200, 2), GpHyperparams{});
  SparsifyOptions opt;
  opt.max_iterations = 20;
  const GpModel m = sparsify(full, static_cast<int>(state.range(0)), opt);
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.predict(query(i++)));
}
BENCHMARK(BM_PredictSparse)->Arg(10)->Arg(35)->Arg(50);

void BM_JetWithHessians(benchmark::State& state) {
  const GpModel m = GpModel::exact(synthetic(50, 3), GpHyperparams{});
  JetRequest req;
  req.var_hessian = true;
  req.var_weights.setConstant(270.0);
  req.mean_hessian = true;
  int i = 0;
  for (auto _ : state) benchmark::DoNotOptimize(m.jet(query(i++), req));
}
BENCHMARK(BM_JetWithHessians);

void BM_LogMarginalLikelihood(benchmark::State& state) {
  const TrainingSet d = synthetic(50, 4);
  for (auto _ : state) benchmark::DoNotOptimize(log_marginal_likelihood(d, GpHyperparams{}));
}
BENCHMARK(BM_LogMarginalLikelihood);

}  // namespace
}  // namespace gpmpc
