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


// gpmpc command-line tool: commissioning, inference replay, benchmarks,
// headless episodes and the streaming backend.

#include <algorithm>
#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "gpmpc/sim.hpp"

namespace fs = std::filesystem;
using namespace gpmpc;

namespace {

// exit codes
constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// options shared by the subcommands; toggles mirror the benchmark columns
struct RunConfig {
  std::string scenario = "two_goal";
  std::optional<std::uint64_t> seed;
  fs::path out_dir = ".";
  std::optional<bool> full_gp_cov;
  std::optional<bool> state_cov;
  std::optional<int> gp_points;
  std::optional<std::string> objective;
  std::optional<bool> impedance_vars;
  std::optional<bool> arm_vars;
  std::optional<double> duration;
};

void add_scenario_flags(CLI::App* app, RunConfig& cfg) {
  app->add_option("-s,--scenario", cfg.scenario,
                  "built-in scenario (two_goal, single_goal, flip, perturb) or JSON file")
      ->capture_default_str();
  app->add_option("--seed", cfg.seed, "random seed (overrides the scenario)");
}

void add_toggles(CLI::App* app, RunConfig& cfg) {
  app->add_option("--full-gp-cov", cfg.full_gp_cov, "per-axis GP covariance in the cost (on/off)");
  app->add_option("--state-cov", cfg.state_cov, "propagate state covariance (on/off)");
  app->add_option("--gp-points", cfg.gp_points, "training points per mode GP")
      ->check(CLI::PositiveNumber);
  app->add_option("--objective", cfg.objective, "expected or risk_sensitive")
      ->check(CLI::IsMember({"expected", "risk_sensitive"}));
  app->add_option("--impedance-vars", cfg.impedance_vars,
                  "optimize admittance offsets dM, dD (on/off)");
  app->add_option("--arm-vars", cfg.arm_vars, "optimize shoulder and joint trajectory (on/off)");
}

Scenario resolve_scenario(const RunConfig& cfg) {
  Scenario s;
  if (is_builtin_scenario(cfg.scenario)) {
    s = builtin_scenario(cfg.scenario);
  } else {
    if (!fs::exists(cfg.scenario)) {
      throw UsageError("scenario file not found: " + cfg.scenario);
    }
    s = load_scenario(cfg.scenario);
  }
  if (cfg.seed) s.seed = *cfg.seed;
  if (cfg.full_gp_cov) s.options.full_gp_cov = *cfg.full_gp_cov;
  if (cfg.state_cov) s.options.state_cov = *cfg.state_cov;
  if (cfg.gp_points) s.gp_points = *cfg.gp_points;
  if (cfg.objective) {
    s.weights.objective =
        *cfg.objective == "expected" ? Objective::kExpected : Objective::kRiskSensitive;
  }
  if (cfg.impedance_vars) s.options.impedance_vars = *cfg.impedance_vars;
  if (cfg.arm_vars) {
    s.options.arm_vars = *cfg.arm_vars;
    if (s.options.arm_vars && !s.arm) s.arm = ArmModel{};
  }
  if (cfg.duration) s.duration = *cfg.duration;
  s.validate();
  return s;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
}

std::string cpu_model() {
  std::ifstream in("/proc/cpuinfo");
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("model name", 0) == 0) {
      auto pos = line.find(':');
      if (pos != std::string::npos) return line.substr(pos + 2);
    }
  }
  return "unknown";
}

void print_environment(std::ostream& out) {
  out << "# cpu: " << cpu_model() << '\n'
      << "# hardware threads: " << std::thread::hardware_concurrency() << '\n'
      << "# compiler: " << GPMPC_COMPILER << '\n'
      << "# build: " << GPMPC_BUILD_TYPE << " flags:" << GPMPC_CXX_FLAGS << '\n';
}

// --------------------------------------------------------------------------

int cmd_fit(const RunConfig& cfg, bool fit_hyper) {
  Scenario s = resolve_scenario(cfg);
  if (fit_hyper) {
    Rng rng(s.seed);
    DemoSet demos = generate_demos(s, s.demos_per_mode, rng);
    std::vector<Demonstration> all;
    for (const auto& m : demos.per_mode) all.insert(all.end(), m.begin(), m.end());
    s.hyperparams = fit_hyperparams(all, HyperBounds{}, s.hyperparams, s.gp_points);
  }
  Commissioned c = commission(s);
  ensure_dir(cfg.out_dir);
  for (size_t n = 0; n < c.gps.size(); ++n) {
    for (size_t i = 0; i < c.demos.per_mode[n].size(); ++i) {
      write_demonstration(cfg.out_dir / ("demo_" + std::to_string(n) + "_" +
                                         std::to_string(i) + ".csv"),
                          c.demos.per_mode[n][i]);
    }
    const fs::path model = cfg.out_dir / ("model_" + std::to_string(n) + ".json");
    save_model(c.gps[n], model);
    std::cout << "mode " << n << " (" << s.modes[n].name << "): "
              << c.gps[n].support_size() << " points, log likelihood "
              << c.gps[n].log_likelihood() << " -> " << model.string() << '\n';
    for (size_t i = 0; i < c.demos.timed_out[n].size(); ++i) {
      if (c.demos.timed_out[n][i]) std::cout << "  demo " << i << " timed out\n";
    }
  }
  const auto& h = s.hyperparams;
  std::cout << "hyperparams linear l=" << h.linear.l << " sf=" << h.linear.sigma_f
            << " sn=" << h.linear.sigma_n << " rotational l=" << h.rotational.l
            << " sf=" << h.rotational.sigma_f << " sn=" << h.rotational.sigma_n << '\n';
  return kOk;
}

int cmd_sparsify(const fs::path& in, const fs::path& out, int inducing) {
  if (!fs::exists(in)) throw UsageError("model file not found: " + in.string());
  GpModel model = load_model(in);
  GpModel sparse = sparsify(model, inducing);
  save_model(sparse, out);
  std::cout << "inducing points " << sparse.support_size() << ", bound "
            << sparse.log_likelihood() << " (exact " << model.log_likelihood() << ") -> "
            << out.string() << '\n';
  return kOk;
}

int cmd_infer(const RunConfig& cfg, const fs::path& log_path, const fs::path& out) {
  if (!fs::exists(log_path)) throw UsageError("log file not found: " + log_path.string());
  EpisodeLog log = read_episode_log(log_path);
  RunConfig c = cfg;
  if (!c.seed) c.seed = log.meta.seed;
  Scenario s = resolve_scenario(c);
  if (scenario_hash(s) != log.meta.scenario_hash) {
    std::cerr << "warning: scenario hash differs from the log's\n";
  }
  Commissioned com = commission(s);
  auto beliefs = replay_beliefs(log, com.models, s.inference);
  double max_diff = 0.0;
  std::ofstream csv(out);
  if (!csv) throw Error("cannot write " + out.string());
  csv << "t";
  for (int n = 0; n < log.meta.modes; ++n) csv << ",b" << n << ",logged_b" << n;
  csv << '\n' << std::setprecision(17);
  for (size_t i = 0; i < beliefs.size(); ++i) {
    const auto& r = log.ticks[i];
    csv << r.t;
    for (Eigen::Index n = 0; n < beliefs[i].size(); ++n) {
      csv << ',' << beliefs[i](n) << ',' << r.belief(n);
      max_diff = std::max(max_diff, std::abs(beliefs[i](n) - r.belief(n)));
    }
    csv << '\n';
  }
  std::cout << "replayed " << beliefs.size() << " ticks, max |belief - logged| = " << max_diff
            << (max_diff == 0.0 ? " (bit-identical)" : "") << " -> " << out.string() << '\n';
  return kOk;
}

int cmd_sim(const RunConfig& cfg) {
  Scenario s = resolve_scenario(cfg);
  Commissioned c = commission(s);
  EpisodeLog log = run_episode(s, c.models);
  ensure_dir(cfg.out_dir);
  write_episode_log(cfg.out_dir / "episode.ndjson", log);
  write_trace_csv(cfg.out_dir / "trace.csv", log);
  {
    // wall times live outside the log so logs stay reproducible
    std::ofstream t(cfg.out_dir / "solve_ms.csv");
    t << "solve,ms\n";
    for (size_t i = 0; i < log.solve_ms.size(); ++i) t << i << ',' << log.solve_ms[i] << '\n';
  }
  EpisodeOutcome o = evaluate_episode(s, log);
  double avg = 0.0;
  for (double ms : log.solve_ms) avg += ms;
  if (!log.solve_ms.empty()) avg /= static_cast<double>(log.solve_ms.size());
  std::cout << "scenario " << s.name << " seed " << s.seed << " hash " << log.meta.scenario_hash
            << '\n'
            << "ticks " << log.ticks.size() << ", solves " << log.solve_ms.size()
            << ", avg solve " << std::fixed << std::setprecision(2) << avg << " ms\n"
            << "final error " << std::setprecision(4) << o.final_error << " m ("
            << (o.reached ? "reached" : "not reached") << "), fallbacks " << o.fallbacks;
  if (o.belief_latency >= 0.0) std::cout << ", belief latency " << o.belief_latency << " s";
  std::cout << "\nfinal belief";
  for (Eigen::Index n = 0; n < log.ticks.back().belief.size(); ++n) {
    std::cout << ' ' << log.ticks.back().belief(n);
  }
  std::cout << "\nwrote " << (cfg.out_dir / "episode.ndjson").string() << '\n';
  return kOk;
}

int cmd_bench(const RunConfig& cfg, const std::string& grid, const std::string& log_path,
              int stride, int max_solves, const std::string& csv_path) {
  Scenario s = resolve_scenario(cfg);
  Commissioned c = commission(s);
  EpisodeLog log;
  if (!log_path.empty()) {
    if (!fs::exists(log_path)) throw UsageError("log file not found: " + log_path);
    log = read_episode_log(fs::path(log_path));
  } else {
    EpisodeRunner runner(s, c.models);
    runner.set_record_plans(false);
    while (!runner.done()) runner.step();
    log = runner.take_log();
  }

  std::vector<BenchRow> rows;
  if (grid == "table1") {
    rows = table1_rows();
  } else {
    BenchRow r;
    r.label = "scenario";
    r.options = s.options;
    r.gp_points = s.gp_points;
    r.objective = s.weights.objective;
    rows = {r};
  }
  if (std::any_of(rows.begin(), rows.end(), [](const BenchRow& r) { return r.options.arm_vars; }) &&
      !s.arm) {
    s.arm = ArmModel{};
  }

  print_environment(std::cout);
  std::cout << "# scenario " << s.name << " seed " << s.seed << ", H=" << s.solver.H
            << " Ts=" << s.solver.Ts << ", stride " << stride << '\n';
  std::cout << std::left << std::setw(16) << "row" << std::setw(6) << "full" << std::setw(6)
            << "state" << std::setw(7) << "gp" << std::setw(10) << "J" << std::setw(5) << "imp"
            << std::setw(5) << "arm" << std::right << std::setw(11) << "cold_ms"
            << std::setw(11) << "avg_ms" << std::setw(11) << "worst_ms" << std::setw(8)
            << "solves" << std::setw(6) << "conv" << std::setw(7) << "iters" << '\n';
  std::ofstream csv;
  if (!csv_path.empty()) {
    csv.open(csv_path);
    if (!csv) throw Error("cannot write " + csv_path);
    csv << "row,full_gp_cov,state_cov,gp_points,objective,impedance_vars,arm_vars,cold_ms,"
           "warm_avg_ms,warm_worst_ms,solves,converged,avg_iterations\n";
  }
  auto yn = [](bool b) { return b ? "yes" : "no"; };
  for (const auto& row : rows) {
    BenchResult r = replay_bench(log, s, c, row, stride, max_solves);
    const char* obj = row.objective == Objective::kExpected ? "expected" : "risk";
    std::cout << std::left << std::setw(16) << row.label << std::setw(6)
              << yn(row.options.full_gp_cov) << std::setw(6) << yn(row.options.state_cov)
              << std::setw(7) << row.gp_points << std::setw(10) << obj << std::setw(5)
              << yn(row.options.impedance_vars) << std::setw(5) << yn(row.options.arm_vars)
              << std::right << std::fixed << std::setprecision(2) << std::setw(11) << r.cold_ms
              << std::setw(11) << r.warm_avg_ms << std::setw(11) << r.warm_worst_ms
              << std::setw(8) << r.solves << std::setw(6) << r.converged << std::setw(7)
              << std::setprecision(1) << r.avg_iterations << '\n';
    if (csv) {
      csv << row.label << ',' << row.options.full_gp_cov << ',' << row.options.state_cov << ','
          << row.gp_points << ',' << obj << ',' << row.options.impedance_vars << ','
          << row.options.arm_vars << ',' << r.cold_ms << ',' << r.warm_avg_ms << ','
          << r.warm_worst_ms << ',' << r.solves << ',' << r.converged << ','
          << r.avg_iterations << '\n';
    }
  }
  return kOk;
}

std::atomic<bool> g_interrupted{false};

int cmd_serve(const RunConfig& cfg, ServeOptions opts) {
  Scenario s = resolve_scenario(cfg);
  Commissioned c = commission(s);
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  opts.on_ready = [&](unsigned short port) {
    std::cout << "serving ws://" << opts.address << ':' << port << '/' << std::endl;
  };
  serve(s, c.models, opts, [] { return g_interrupted.load(); });
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"gpmpc: multi-modal GP force models and MPC for physical human-robot interaction"};
  app.require_subcommand(1);
  RunConfig cfg;

  auto* fit = app.add_subcommand("fit", "generate or load demonstrations and fit one GP per mode");
  add_scenario_flags(fit, cfg);
  fit->add_option("-o,--out", cfg.out_dir, "output directory")->capture_default_str();
  fit->add_option("--gp-points", cfg.gp_points, "training points per mode GP");
  bool fit_hyper = false;
  fit->add_flag("--fit-hyper", fit_hyper, "maximize the marginal likelihood first");

  auto* sp = app.add_subcommand("sparsify", "select variational inducing points for a model");
  std::string sp_in, sp_out;
  int inducing = 35;
  sp->add_option("-m,--model", sp_in, "input model file")->required();
  sp->add_option("-o,--out", sp_out, "output model file")->required();
  sp->add_option("-r,--inducing", inducing, "inducing point count")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* inf = app.add_subcommand("infer", "replay the belief update over a logged episode");
  add_scenario_flags(inf, cfg);
  std::string inf_log;
  std::string inf_out = "beliefs.csv";
  inf->add_option("-l,--log", inf_log, "episode log (NDJSON)")->required();
  inf->add_option("-o,--out", inf_out, "belief trace CSV")->capture_default_str();

  auto* bench = app.add_subcommand("mpc-bench", "time the MPC over recorded data");
  add_scenario_flags(bench, cfg);
  add_toggles(bench, cfg);
  std::string grid = "table1", bench_log, bench_csv;
  int stride = 1, max_solves = 0;
  bench->add_option("--grid", grid, "table1: the seven benchmark rows; single: scenario options")
      ->capture_default_str()
      ->check(CLI::IsMember({"table1", "single"}));
  bench->add_option("-l,--log", bench_log, "episode log to replay (default: simulate one)");
  bench->add_option("--stride", stride, "use every n-th control tick")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  bench->add_option("--max-solves", max_solves, "cap on solves per row (0: all)")
      ->capture_default_str();
  bench->add_option("--duration", cfg.duration, "episode length when simulating (s)");
  bench->add_option("--csv", bench_csv, "also write the table as CSV");

  auto* sim = app.add_subcommand("sim", "run a headless closed-loop episode");
  add_scenario_flags(sim, cfg);
  add_toggles(sim, cfg);
  sim->add_option("-o,--out", cfg.out_dir, "output directory")->capture_default_str();
  sim->add_option("--duration", cfg.duration, "episode length (s)");

  auto* srv = app.add_subcommand("serve", "stream a live episode over WebSocket");
  add_scenario_flags(srv, cfg);
  add_toggles(srv, cfg);
  ServeOptions sopts;
  srv->add_option("--port", sopts.port, "TCP port (0: any free port)")->capture_default_str();
  srv->add_option("--address", sopts.address, "listen address")->capture_default_str();
  srv->add_option("--frame-rate", sopts.frame_rate, "outbound frames per second")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  srv->add_option("--max-time", sopts.max_time, "stop after this many simulated seconds");
  bool fast = false;
  srv->add_flag("--no-realtime", fast, "step as fast as possible");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (fit->parsed()) return cmd_fit(cfg, fit_hyper);
    if (sp->parsed()) return cmd_sparsify(sp_in, sp_out, inducing);
    if (inf->parsed()) return cmd_infer(cfg, inf_log, inf_out);
    if (bench->parsed()) return cmd_bench(cfg, grid, bench_log, stride, max_solves, bench_csv);
    if (sim->parsed()) return cmd_sim(cfg);
    if (srv->parsed()) {
      sopts.realtime = !fast;
      return cmd_serve(cfg, sopts);
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
