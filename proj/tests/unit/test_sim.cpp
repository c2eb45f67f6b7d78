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


#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "gpmpc/sim.hpp"
#include "test_util.hpp"

namespace gpmpc {
namespace {

using testing::Gen;

// commissioning is the slow part; share one per scenario name
const Commissioned& commissioned(const std::string& name) {
  static std::map<std::string, Commissioned> cache;
  auto it = cache.find(name);
  if (it == cache.end()) it = cache.emplace(name, commission(builtin_scenario(name))).first;
  return it->second;
}

Scenario short_scenario(const std::string& name, double duration) {
  Scenario s = builtin_scenario(name);
  s.duration = duration;
  return s;
}

std::string dump(const EpisodeLog& log) {
  std::ostringstream out;
  write_episode_log(out, log);
  return out.str();
}

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("gpmpc_sim_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST(SyntheticHuman, AtTheGoalOnlyNoiseRemains) {
  HumanParams p;
  Rng rng(3);
  const Pose goal(Vector3d(0, 0.15, 0), RotVec());
  const int n = 20000;
  Vector3d sum = Vector3d::Zero(), sq = Vector3d::Zero();
  for (int i = 0; i < n; ++i) {
    const Wrench w = synthetic_human(goal, goal, p, rng);
    sum += w.f;
    sq += w.f.cwiseProduct(w.f);
  }
  const Vector3d mean = sum / n;
  const Vector3d var = sq / n - mean.cwiseProduct(mean);
  for (int i = 0; i < 3; ++i) {
    EXPECT_LT(std::abs(mean(i)), 4.0 * p.noise / std::sqrt(n));
    EXPECT_NEAR(std::sqrt(var(i)), p.noise, 0.05 * p.noise);
  }
}

TEST(SyntheticHuman, FarFromTheGoalForceSaturates) {
  HumanParams p;
  p.noise = 0.0;
  p.moment_noise = 0.0;
  Rng rng(1);
  const Pose goal(Vector3d(0, 0.15, 0), RotVec());
  const Pose far(Vector3d(0, -1.0, 0), RotVec());
  const Wrench w = synthetic_human(goal, far, p, rng);
  EXPECT_NEAR(w.f.norm(), p.f_cap, 1e-12);
  EXPECT_NEAR(w.f(1), p.f_cap, 1e-12);
  // within the linear range: K_h times the offset
  const Pose near(Vector3d(0, 0.10, 0), RotVec());
  EXPECT_NEAR(synthetic_human(goal, near, p, rng).f(1), p.K_h * 0.05, 1e-12);
  // inside the deadband the spring is off
  const Pose inside(Vector3d(0, 0.145, 0), RotVec());
  EXPECT_EQ(synthetic_human(goal, inside, p, rng).f.norm(), 0.0);
}

TEST(SyntheticHuman, SameSeedSameStream) {
  HumanParams p;
  const Pose goal(Vector3d(0.1, 0, 0), RotVec());
  Rng a(11), b(11);
  for (int i = 0; i < 100; ++i) {
    const Pose x(Vector3d(0, 0.001 * i, 0), RotVec());
    EXPECT_EQ(synthetic_human(goal, x, p, a).vector(), synthetic_human(goal, x, p, b).vector());
  }
}

TEST(SimulateStep, MatchesTheDiscreteModelAndClampsVelocity) {
  AdmittanceParams adm;
  const DiscreteDynamics dyn = discretize(adm, 0.01);
  Gen g(5);
  const Vector6d big = Vector6d::Constant(1e9);
  for (int trial = 0; trial < 50; ++trial) {
    State xi;
    xi.x.p = g.vec3(-0.2, 0.2);
    xi.xdot = g.vec6(-0.1, 0.1);
    xi.xdot.tail<3>().setZero();
    const Wrench fH(g.vec3(-20, 20), Vector3d::Zero());
    const Wrench fR(g.vec3(-20, 20), Vector3d::Zero());
    const State next = simulate_step(dyn, xi, fH, fR, big);
    const Vector12d lin = step_mean(dyn, xi.vector(), fH, fR);
    EXPECT_LT((next.vector() - lin).cwiseAbs().maxCoeff(), 1e-14);
  }
  State xi;
  const Wrench push(Vector3d(1e6, -1e6, 0), Vector3d(0, 0, 1e6));
  const Vector6d lim = (Vector6d() << 0.5, 0.5, 0.5, 1, 1, 1).finished();
  const State next = simulate_step(dyn, xi, push, Wrench(), lim);
  EXPECT_EQ(next.xdot(0), 0.5);
  EXPECT_EQ(next.xdot(1), -0.5);
  EXPECT_EQ(next.xdot(5), 1.0);
}

TEST(GenerateDemos, DemosEndAtTheirGoal) {
  const Scenario s = builtin_scenario("two_goal");
  Rng rng(s.seed);
  const DemoSet d = generate_demos(s, 6, rng);
  ASSERT_EQ(d.per_mode.size(), 2u);
  for (size_t n = 0; n < 2; ++n) {
    ASSERT_EQ(d.per_mode[n].size(), 6u);
    for (size_t i = 0; i < 6; ++i) {
      EXPECT_FALSE(d.timed_out[n][i]);
      const auto& demo = d.per_mode[n][i];
      EXPECT_NO_THROW(demo.validate());
      EXPECT_LT((demo.samples.back().pose.p - s.modes[n].goal.p).norm(), 0.01) << n << " " << i;
      for (size_t j = 0; j < i; ++j) {
        EXPECT_GE((demo.samples.front().pose.p - d.per_mode[n][j].samples.front().pose.p).norm(),
                  0.1 - 1e-12);
      }
    }
  }
  EXPECT_THROW(generate_demos(s, 0, rng), Error);
}

TEST(GenerateDemos, StartingAtTheGoalGivesAlmostNoData) {
  Scenario s = builtin_scenario("single_goal");
  s.demo_dwell = 0.0;
  s.demo_starts = {s.modes[0].goal};
  Rng rng(s.seed);
  const DemoSet d = generate_demos(s, 1, rng);
  const auto& demo = d.per_mode[0][0];
  EXPECT_LE(demo.samples.size(), 2u);
  int strong = 0;
  for (const auto& smp : demo.samples) strong += smp.wrench.f.norm() >= 3.0;
  EXPECT_LE(strong, 2);
}

TEST(GenerateDemos, Deterministic) {
  const Scenario s = builtin_scenario("two_goal");
  Rng a(9), b(9);
  const DemoSet x = generate_demos(s, 2, a), y = generate_demos(s, 2, b);
  for (size_t n = 0; n < 2; ++n) {
    for (size_t i = 0; i < 2; ++i) {
      ASSERT_EQ(x.per_mode[n][i].samples.size(), y.per_mode[n][i].samples.size());
      for (size_t k = 0; k < x.per_mode[n][i].samples.size(); ++k) {
        EXPECT_EQ(x.per_mode[n][i].samples[k].wrench.vector(),
                  y.per_mode[n][i].samples[k].wrench.vector());
      }
    }
  }
}

TEST(Commission, OneModelPerModeFromTheDemos) {
  const Commissioned& c = commissioned("two_goal");
  ASSERT_EQ(c.models.size(), 2u);
  ASSERT_EQ(c.gps.size(), 2u);
  for (int n = 0; n < 2; ++n) {
    EXPECT_LE(c.gps[n].support_size(), 50);
    EXPECT_GT(c.gps[n].support_size(), 10);
    EXPECT_EQ(c.gps[n].mode(), n);
  }
  // each model pushes toward its own goal from the start
  const Pose start;
  EXPECT_GT(c.models[0]->predict(start).mean.f(1), 3.0);
  EXPECT_LT(c.models[1]->predict(start).mean.f(1), -3.0);
}

TEST(Commission, SparseModels) {
  Scenario s = builtin_scenario("single_goal");
  s.inducing_points = 15;
  const Commissioned c = commission(s);
  EXPECT_TRUE(c.gps[0].is_sparse());
  EXPECT_EQ(c.gps[0].support_size(), 15);
}

TEST(Episode, SameSeedGivesByteIdenticalLogs) {
  const Scenario s = short_scenario("two_goal", 1.5);
  const auto& c = commissioned("two_goal");
  const std::string a = dump(run_episode(s, c.models));
  const std::string b = dump(run_episode(s, c.models));
  EXPECT_EQ(a, b);
  Scenario other = s;
  other.seed = s.seed + 1;
  EXPECT_NE(dump(run_episode(other, c.models)), a);
}

TEST(Episode, RatesAndZeroOrderHold) {
  const Scenario s = short_scenario("two_goal", 2.0);
  const auto& c = commissioned("two_goal");
  const EpisodeLog log = run_episode(s, c.models);
  ASSERT_EQ(log.ticks.size(), 200u);
  EXPECT_EQ(log.meta.modes, 2);
  EXPECT_EQ(log.meta.scenario_hash, scenario_hash(s));
  int beliefs = 0, plans = 0;
  Vector6d held = Vector6d::Zero();
  for (const auto& r : log.ticks) {
    beliefs += r.belief_tick;
    if (r.plan) {
      ++plans;
      held = r.fR;
      ASSERT_EQ(r.plan->fR.size(), static_cast<size_t>(s.solver.H));
      ASSERT_EQ(r.plan->poses.size(), 2u);
    } else {
      EXPECT_EQ(r.fR, held) << r.tick;
    }
    EXPECT_NEAR(r.belief.sum(), 1.0, 1e-9);
  }
  EXPECT_EQ(beliefs, 100);
  EXPECT_EQ(plans, 30);
  EXPECT_EQ(log.solve_ms.size(), 30u);
}

TEST(Episode, DisturbanceReplacesTheHuman) {
  Scenario s = short_scenario("two_goal", 1.0);
  s.disturbances = {Disturbance{0.2, 0.3, Wrench(Vector3d(25, 0, 0), Vector3d::Zero())}};
  const EpisodeLog log = run_episode(s, commissioned("two_goal").models);
  for (const auto& r : log.ticks) {
    if (r.t >= 0.2 - 1e-12 && r.t < 0.3 - 1e-12) {
      EXPECT_EQ(r.source, ForceSource::kDisturbance) << r.t;
      EXPECT_EQ(r.fH(0), 25.0);
    } else {
      EXPECT_EQ(r.source, ForceSource::kSynthetic) << r.t;
    }
  }
}

TEST(Episode, ReplayedBeliefsAreBitIdentical) {
  const Scenario s = short_scenario("flip", 5.0);
  const auto& c = commissioned("flip");
  const EpisodeLog log = run_episode(s, c.models);
  const auto beliefs = replay_beliefs(log, c.models, s.inference);
  ASSERT_EQ(beliefs.size(), log.ticks.size());
  for (size_t i = 0; i < beliefs.size(); ++i) {
    ASSERT_EQ(beliefs[i].size(), log.ticks[i].belief.size());
    for (Eigen::Index n = 0; n < beliefs[i].size(); ++n) {
      EXPECT_EQ(beliefs[i](n), log.ticks[i].belief(n)) << i;
    }
  }
  // and after a round trip through the text form
  std::stringstream text(dump(log));
  const EpisodeLog back = read_episode_log(text);
  const auto again = replay_beliefs(back, c.models, s.inference);
  for (size_t i = 0; i < again.size(); ++i) EXPECT_EQ(again[i], beliefs[i]) << i;
}

TEST(Runner, ExternalForceAndSchedule) {
  const Scenario s = short_scenario("two_goal", 1.0);
  EpisodeRunner r(s, commissioned("two_goal").models);
  r.set_external(Wrench(Vector3d(0, 7, 0), Vector3d::Zero()));
  const TickRecord& rec = r.step();
  EXPECT_EQ(rec.source, ForceSource::kExternal);
  EXPECT_EQ(rec.fH(1), 7.0);
  r.set_external(std::nullopt);
  EXPECT_EQ(r.step().source, ForceSource::kSynthetic);

  r.set_schedule({{0.0, 1}});
  EXPECT_EQ(r.step().intent, 1);
  EXPECT_THROW(r.set_schedule({{0.0, 5}}), Error);
  EXPECT_THROW(r.set_schedule({}), Error);
  EXPECT_EQ(r.step().intent, 1);

  r.reset();
  EXPECT_EQ(r.tick(), 0);
  EXPECT_TRUE(r.log().ticks.empty());
  EXPECT_EQ(r.state().x.p, s.initial.x.p);
  EXPECT_THROW(EpisodeRunner(s, ModelSet{commissioned("two_goal").models[0]}),
               DimensionMismatch);
}

TEST(Runner, KeepHistoryOff) {
  const Scenario s = short_scenario("two_goal", 0.5);
  EpisodeRunner r(s, commissioned("two_goal").models);
  r.set_keep_history(false);
  while (!r.done()) r.step();
  EXPECT_EQ(r.log().ticks.size(), 1u);
  EXPECT_EQ(r.log().ticks.back().tick, 49);
  EXPECT_LE(r.log().solve_ms.size(), 1u);
}

TEST(Evaluate, ErrorLatencyAndFallbacks) {
  Scenario s = builtin_scenario("flip");
  EpisodeLog log;
  log.meta.modes = 2;
  auto rec = [](double t, double y, double b1, bool fallback) {
    TickRecord r;
    r.t = t;
    r.x(1) = y;
    r.belief = (VectorXd(2) << 1 - b1, b1).finished();
    if (fallback) {
      r.plan = PlanSnapshot{};
      r.plan->fallback = true;
    }
    return r;
  };
  log.ticks = {rec(0.0, 0.0, 0.5, false), rec(2.9, 0.1, 0.95, true), rec(3.0, 0.1, 0.2, false),
               rec(3.5, 0.0, 0.91, true), rec(24.0, -0.14, 0.99, false)};
  const EpisodeOutcome o = evaluate_episode(s, log);
  EXPECT_NEAR(o.final_error, 0.01, 1e-12);
  EXPECT_TRUE(o.reached);
  EXPECT_NEAR(o.belief_latency, 0.5, 1e-12);
  EXPECT_EQ(o.fallbacks, 2);
  EXPECT_FALSE(evaluate_episode(s, log, 0.005).reached);
  EXPECT_LT(evaluate_episode(builtin_scenario("two_goal"), log).belief_latency, 0.0);
}

TEST_F(TempDir, LogFileRoundTrip) {
  const Scenario s = short_scenario("two_goal", 0.5);
  const EpisodeLog log = run_episode(s, commissioned("two_goal").models);
  write_episode_log(dir_ / "e.ndjson", log);
  const EpisodeLog back = read_episode_log(dir_ / "e.ndjson");
  EXPECT_EQ(dump(back), dump(log));
  EXPECT_EQ(back.meta.scenario_hash, log.meta.scenario_hash);
  EXPECT_EQ(back.meta.goals.size(), 2u);
  ASSERT_EQ(back.ticks.size(), log.ticks.size());
  EXPECT_EQ(back.ticks[0].plan.has_value(), true);
  EXPECT_EQ(back.ticks[1].plan.has_value(), false);
  EXPECT_THROW(read_episode_log(dir_ / "none.ndjson"), Error);
}

TEST(LogReader, RejectsMalformedInput) {
  const Scenario s = short_scenario("two_goal", 0.05);
  const std::string good = dump(run_episode(s, commissioned("two_goal").models));
  const auto first_nl = good.find('\n');
  const std::string header = good.substr(0, first_nl + 1);
  const std::string body = good.substr(first_nl + 1);
  const std::string first_tick = body.substr(0, body.find('\n') + 1);

  auto rejects = [](const std::string& text) {
    std::stringstream in(text);
    EXPECT_THROW(read_episode_log(in), ParseError) << text.substr(0, 80);
  };
  rejects("");
  rejects("{\"format\": \"other\"}\n");
  rejects(header + "{not json\n");
  rejects(header + first_tick + first_tick);  // time not increasing
  std::string bad_source = first_tick;
  bad_source.replace(bad_source.find("\"synthetic\""), 11, "\"robot\"");
  rejects(header + bad_source);
  std::string bad_header = header;
  bad_header.replace(bad_header.find("\"version\":1"), 11, "\"version\":7");
  rejects(bad_header);

  std::stringstream ok(header);
  EXPECT_TRUE(read_episode_log(ok).ticks.empty());
}

TEST_F(TempDir, TraceCsvAndDemonstration) {
  const Scenario s = short_scenario("two_goal", 0.3);
  const EpisodeLog log = run_episode(s, commissioned("two_goal").models);
  write_trace_csv(dir_ / "trace.csv", log);
  std::ifstream in(dir_ / "trace.csv");
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line,
            "t,b0,b1,H_fx,H_fy,H_fz,H_mx,H_my,H_mz,R_fx,R_fy,R_fz,R_mx,R_my,R_mz,px,py,pz,intent");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 18);
  }
  EXPECT_EQ(rows, 30);

  const Demonstration d = log_to_demonstration(log);
  ASSERT_EQ(d.samples.size(), log.ticks.size());
  EXPECT_NO_THROW(d.validate());
  write_demonstration(dir_ / "d.csv", d);
  const Demonstration back = read_demonstration(dir_ / "d.csv");
  for (size_t i = 0; i < d.samples.size(); ++i) {
    EXPECT_EQ(back.samples[i].wrench.vector(), log.ticks[i].fH);
    EXPECT_EQ(back.samples[i].pose.vector(), log.ticks[i].x);
  }
}

TEST(Bench, TableRowsAndReplay) {
  const auto rows = table1_rows();
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[1].label, "baseline");
  EXPECT_FALSE(rows[1].options.full_gp_cov);
  EXPECT_TRUE(rows[1].options.state_cov);
  EXPECT_EQ(rows[3].gp_points, 35);
  EXPECT_EQ(rows[6].objective, Objective::kRiskSensitive);

  const Scenario s = short_scenario("two_goal", 1.0);
  const auto& c = commissioned("two_goal");
  const EpisodeLog log = run_episode(s, c.models);
  const BenchResult a = replay_bench(log, s, c, rows[1], 3);
  EXPECT_EQ(a.solves, 5);
  EXPECT_EQ(a.first_controls.size(), 5u);
  const BenchResult b = replay_bench(log, s, c, rows[1], 3);
  for (size_t i = 0; i < a.first_controls.size(); ++i) {
    EXPECT_EQ(a.first_controls[i], b.first_controls[i]);
  }
  EXPECT_EQ(replay_bench(log, s, c, rows[3], 1, 2).solves, 2);
  EXPECT_THROW(replay_bench(log, s, c, rows[1], 0), Error);
}

}  // namespace
}  // namespace gpmpc
