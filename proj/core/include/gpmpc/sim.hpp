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

#ifndef GPMPC_SIM_HPP_
#define GPMPC_SIM_HPP_

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gpmpc/arm.hpp"
#include "gpmpc/dynamics.hpp"
#include "gpmpc/gp.hpp"
#include "gpmpc/inference.hpp"
#include "gpmpc/mpc.hpp"

namespace gpmpc {

using Rng = std::mt19937_64;

// Synthetic human: a saturated spring toward the intended goal plus noise.
struct HumanParams {
  double K_h = 120.0;         // N/m
  double f_cap = 25.0;        // N
  double noise = 2.0;         // N, per linear axis
  double K_rot = 20.0;        // N m/rad
  double m_cap = 3.0;         // N m
  double moment_noise = 0.2;  // N m, per rotational axis
  double deadband = 0.01;     // m
  double deadband_rot = 2.0 * 3.14159265358979323846 / 180.0;  // rad
  // short-range repulsive patch around the goal, mimicking pin contact
  bool pin_contact = false;
  double pin_radius = 0.015;
  double pin_gain = 400.0;
};

struct ModeSpec {
  std::string name;
  Pose goal;
  HumanParams human;
  // CSV demonstrations; empty means synthetic demonstrations
  std::vector<std::filesystem::path> demo_files;
};

struct IntentSwitch {
  double t = 0.0;
  int mode = 0;
};

// scripted push that replaces the human wrench during [t_start, t_end)
struct Disturbance {
  double t_start = 0.0;
  double t_end = 0.0;
  Wrench wrench;
};

struct Scenario {
  std::string name = "custom";
  std::vector<ModeSpec> modes;
  AdmittanceParams admittance;
  Weights weights;
  SolverConfig solver;
  ProblemOptions options;
  InferenceConfig inference;
  GpHyperparams hyperparams;
  int gp_points = 50;      // time-subsample cap per mode
  int inducing_points = 0;  // > 0: sparse models with this many points
  std::optional<ArmModel> arm;

  State initial;
  double duration = 30.0;
  double base_rate = 100.0;
  double belief_rate = 50.0;
  double control_rate = 15.0;
  std::uint64_t seed = 1;
  std::vector<IntentSwitch> intent_schedule{{0.0, 0}};
  std::vector<Disturbance> disturbances;

  // commissioning
  int demos_per_mode = 3;
  double demo_rate = 50.0;
  double demo_timeout = 60.0;
  // time the demonstrator keeps holding the part at the goal once inside
  // the deadband; this is where most low-force data is collected
  double demo_dwell = 5.0;
  // empty: per mode, starts on a circle around the goal through the initial pose
  std::vector<Pose> demo_starts;

  // throws Error naming the offending field
  void validate() const;
};

// built-ins: two_goal, single_goal, flip, perturb
Scenario builtin_scenario(const std::string& name);
std::vector<std::string> builtin_scenario_names();
bool is_builtin_scenario(const std::string& name);

// nested JSON; absent keys keep the defaults above
Scenario parse_scenario(const std::string& text);
Scenario load_scenario(const std::filesystem::path& path);
std::string scenario_to_json(const Scenario& s);
// FNV-1a 64 of the canonical JSON form, hex
std::string scenario_hash(const Scenario& s);

// active mode at time t
int intent_at(const Scenario& s, double t);

// whether base tick `tick` starts a period of a sub-loop running at `rate`
bool rate_tick(std::int64_t tick, double rate, double base_rate);

Wrench synthetic_human(const Pose& goal, const Pose& x, const HumanParams& params,
                       Rng& rng);

struct DemoSet {
  std::vector<std::vector<Demonstration>> per_mode;
  std::vector<std::vector<bool>> timed_out;
};

// passive admittance (fR = 0) driven by the synthetic human of each mode
// from distinct starts, recorded at demo_rate until the goal deadband
DemoSet generate_demos(const Scenario& s, int n_demos, Rng& rng);

// one sample-period step of the simulated robot: explicit position update,
// orientation by composing the incremental rotation, velocities clamped
State simulate_step(const DiscreteDynamics& dyn, const State& xi, const Wrench& fH,
                    const Wrench& fR, const Vector6d& velocity_limit);

struct Commissioned {
  DemoSet demos;
  std::vector<GpModel> gps;
  ModelSet models;
};

// demos (generated or loaded) and one GP per mode
Commissioned commission(const Scenario& s);

MpcEngine make_engine(const Scenario& s, const ModelSet& models);

// ---------------------------------------------------------------------------
// episode log

struct PlanSnapshot {
  std::vector<std::vector<Vector6d>> poses;  // [mode][k], k = 1..H
  std::vector<Vector6d> fR;                  // H entries
  int iterations = 0;
  bool converged = false;
  bool fallback = false;
  double residual = 0.0;
  double objective = 0.0;
};

enum class ForceSource { kSynthetic, kDisturbance, kExternal };

struct TickRecord {
  std::int64_t tick = 0;
  double t = 0.0;
  Vector6d x = Vector6d::Zero();
  Vector6d xdot = Vector6d::Zero();
  Vector6d fH = Vector6d::Zero();
  Vector6d fR = Vector6d::Zero();
  VectorXd belief;
  int intent = 0;
  ForceSource source = ForceSource::kSynthetic;
  bool belief_tick = false;
  std::optional<PlanSnapshot> plan;
};

struct EpisodeMeta {
  std::string format = "gpmpc-episode";
  int version = 1;
  std::string scenario;
  std::string scenario_hash;
  std::uint64_t seed = 0;
  int modes = 0;
  int horizon = 0;
  double base_rate = 0.0;
  double belief_rate = 0.0;
  double control_rate = 0.0;
  std::vector<Vector6d> goals;
};

struct EpisodeLog {
  EpisodeMeta meta;
  std::vector<TickRecord> ticks;
  // solver wall times per control tick; kept out of the record stream so
  // that logs are reproducible byte for byte
  std::vector<double> solve_ms;
};

// newline-delimited JSON: header object, then one object per tick
void write_episode_log(std::ostream& out, const EpisodeLog& log);
void write_episode_log(const std::filesystem::path& path, const EpisodeLog& log);
EpisodeLog read_episode_log(std::istream& in);
EpisodeLog read_episode_log(const std::filesystem::path& path);

// t, belief..., fH..., fR... per tick (plot-ready traces)
void write_trace_csv(const std::filesystem::path& path, const EpisodeLog& log);
// logged (pose, wrench) stream in the demonstration format
Demonstration log_to_demonstration(const EpisodeLog& log);

// ---------------------------------------------------------------------------
// episodes

// Deterministic stepper for one episode. Rates are scheduled sub-loops of
// the base clock. Per tick: record state, obtain the human wrench, update
// the belief (belief ticks), solve (control ticks), step the dynamics with
// the held robot wrench.
class EpisodeRunner {
 public:
  EpisodeRunner(const Scenario& s, ModelSet models);

  bool done() const;
  const TickRecord& step();
  double time() const;
  std::int64_t tick() const { return tick_; }

  const State& state() const { return state_; }
  const Belief& belief() const { return estimator_.belief(); }
  const EpisodeLog& log() const { return log_; }
  EpisodeLog take_log() { return std::move(log_); }
  const Scenario& scenario() const { return scenario_; }
  const std::optional<MpcSolution>& last_plan() const { return last_plan_; }
  double last_solve_ms() const { return last_solve_ms_; }

  // external wrench overriding the synthetic human while held
  void set_external(std::optional<Wrench> w) { external_ = std::move(w); }
  void set_schedule(std::vector<IntentSwitch> schedule);
  void reset();

  // plan snapshots in the log (default on)
  void set_record_plans(bool on) { record_plans_ = on; }
  // false: the log keeps only the latest record (long interactive sessions)
  void set_keep_history(bool on) { keep_history_ = on; }

 private:
  bool is_tick(double rate) const;

  Scenario scenario_;
  ModelSet models_;
  DiscreteDynamics dyn_;
  MpcEngine engine_;
  ModeEstimator estimator_;
  Rng rng_;
  State state_;
  Wrench held_fR_;
  std::int64_t tick_ = 0;
  std::int64_t total_ticks_ = 0;
  std::optional<Wrench> external_;
  std::optional<MpcSolution> last_plan_;
  double last_solve_ms_ = 0.0;
  bool record_plans_ = true;
  bool keep_history_ = true;
  EpisodeLog log_;
};

EpisodeLog run_episode(const Scenario& s, const ModelSet& models);

struct EpisodeOutcome {
  double final_error = 0.0;  // m, to the active goal at the end
  bool reached = false;      // final_error <= tolerance
  // first time after the last intent switch at which the new mode's belief
  // exceeded the threshold, relative to the switch; negative if never
  double belief_latency = -1.0;
  int fallbacks = 0;
};

EpisodeOutcome evaluate_episode(const Scenario& s, const EpisodeLog& log,
                                double tolerance = 0.02, double threshold = 0.9);

// recompute the belief trajectory from the logged (pose, wrench) stream;
// returns one belief per tick
std::vector<VectorXd> replay_beliefs(const EpisodeLog& log, const ModelSet& models,
                                     const InferenceConfig& cfg);

// ---------------------------------------------------------------------------
// benchmark over recorded data

struct BenchRow {
  std::string label;
  ProblemOptions options;
  int gp_points = 50;
  Objective objective = Objective::kExpected;
};

// the seven problem statements compared in the benchmark table
std::vector<BenchRow> table1_rows();

struct BenchResult {
  BenchRow row;
  double cold_ms = 0.0;
  double warm_avg_ms = 0.0;
  double warm_worst_ms = 0.0;
  int solves = 0;
  int converged = 0;
  double avg_iterations = 0.0;
  // first-step fR per solve, for determinism checks
  std::vector<Vector6d> first_controls;
};

// Re-solves the MPC at logged ticks (every `stride`-th control tick) under a
// row's options; models are re-fitted from demos at the row's GP size.
BenchResult replay_bench(const EpisodeLog& log, const Scenario& s,
                         const Commissioned& base, const BenchRow& row,
                         int stride = 1, int max_solves = 0);

// ---------------------------------------------------------------------------
// streaming session

struct ServeOptions {
  unsigned short port = 8765;
  std::string address = "127.0.0.1";
  double frame_rate = 30.0;
  bool realtime = true;
  // stop after this many simulated seconds (0: run until interrupted)
  double max_time = 0.0;
  // called once listening, with the bound port (useful with port 0)
  std::function<void(unsigned short)> on_ready;
};

// outbound frame as JSON text
std::string make_frame(const EpisodeRunner& runner);

// applies one inbound JSON message to the runner; throws ParseError
void apply_message(EpisodeRunner& runner, const std::string& text, bool& paused);

// WebSocket server; blocks. Returns when max_time is reached or on stop().
void serve(const Scenario& s, const ModelSet& models, const ServeOptions& options,
           const std::function<bool()>& stop = {});

}  // namespace gpmpc

#endif  // GPMPC_SIM_HPP_
