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
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "gpmpc/sim.hpp"
#include "json.hpp"

namespace gpmpc {
namespace {

using nlohmann::json;

// Reads known keys from one JSON object and rejects the rest, so a typo in
// a scenario file is an error rather than a silently ignored setting.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j.is_object()) fail("", "expected an object");
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  const json& at(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  template <typename T>
  void get(const char* key, T& out) {
    if (!has(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(key, e.what());
    }
  }

  template <int N>
  void vec(const char* key, Eigen::Matrix<double, N, 1>& out) {
    if (!has(key)) return;
    out = read_vec<N>(j_.at(key), key);
  }

  template <int N>
  Eigen::Matrix<double, N, 1> read_vec(const json& v, const char* key) {
    if (!v.is_array() || v.size() != N) {
      fail(key, "expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> out;
    for (int i = 0; i < N; ++i) {
      if (!v[i].is_number()) fail(key, "expected numbers");
      out(i) = v[i].get<double>();
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) fail(it.key(), "unknown key");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& msg) const {
    std::string path = where_;
    if (!key.empty()) path += path.empty() ? key : "." + key;
    throw ParseError("scenario: " + (path.empty() ? std::string("<root>") : path) +
                     ": " + msg);
  }

  std::string child(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

json to_json(const Eigen::Ref<const VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Pose read_pose(Fields& f, const char* key) {
  Vector6d v = f.read_vec<6>(f.at(key), key);
  return Pose::from_vector(v);
}

json hyper_json(const Hyperparams& h) {
  return {{"l", h.l}, {"sigma_f", h.sigma_f}, {"sigma_n", h.sigma_n}};
}

void read_hyper(const json& j, const std::string& where, Hyperparams& h) {
  Fields f(j, where);
  f.get("l", h.l);
  f.get("sigma_f", h.sigma_f);
  f.get("sigma_n", h.sigma_n);
  f.finish();
}

void read_human(const json& j, const std::string& where, HumanParams& h) {
  Fields f(j, where);
  f.get("K_h", h.K_h);
  f.get("f_cap", h.f_cap);
  f.get("noise", h.noise);
  f.get("K_rot", h.K_rot);
  f.get("m_cap", h.m_cap);
  f.get("moment_noise", h.moment_noise);
  f.get("deadband", h.deadband);
  f.get("deadband_rot", h.deadband_rot);
  f.get("pin_contact", h.pin_contact);
  f.get("pin_radius", h.pin_radius);
  f.get("pin_gain", h.pin_gain);
  f.finish();
}

json human_json(const HumanParams& h) {
  return {{"K_h", h.K_h},
          {"f_cap", h.f_cap},
          {"noise", h.noise},
          {"K_rot", h.K_rot},
          {"m_cap", h.m_cap},
          {"moment_noise", h.moment_noise},
          {"deadband", h.deadband},
          {"deadband_rot", h.deadband_rot},
          {"pin_contact", h.pin_contact},
          {"pin_radius", h.pin_radius},
          {"pin_gain", h.pin_gain}};
}

Objective parse_objective(const std::string& s, Fields& f) {
  if (s == "expected") return Objective::kExpected;
  if (s == "risk_sensitive") return Objective::kRiskSensitive;
  f.fail("objective", "expected \"expected\" or \"risk_sensitive\", got \"" + s + "\"");
}

const char* objective_name(Objective o) {
  return o == Objective::kExpected ? "expected" : "risk_sensitive";
}

Scenario two_goal() {
  Scenario s;
  s.name = "two_goal";
  ModeSpec a;
  a.name = "A";
  a.goal = Pose(Vector3d(0.0, 0.15, 0.0), RotVec());
  ModeSpec b;
  b.name = "B";
  b.goal = Pose(Vector3d(0.0, -0.15, 0.0), RotVec());
  s.modes = {a, b};
  s.duration = 20.0;
  return s;
}

}  // namespace

void Scenario::validate() const {
  auto bad = [](const std::string& field, const std::string& msg) {
    throw Error("scenario: " + field + ": " + msg);
  };
  if (modes.empty()) bad("modes", "at least one mode is required");
  for (size_t i = 0; i < modes.size(); ++i) {
    const auto& h = modes[i].human;
    if (!(h.K_h >= 0 && h.f_cap >= 0 && h.noise >= 0 && h.K_rot >= 0 &&
          h.m_cap >= 0 && h.moment_noise >= 0 && h.deadband >= 0 &&
          h.deadband_rot >= 0)) {
      bad("modes[" + std::to_string(i) + "].human", "parameters must be non-negative");
    }
    for (size_t k = 0; k < i; ++k) {
      if (pose_error(modes[i].goal, modes[k].goal).norm() < 1e-9) {
        bad("modes", "goals must be distinct");
      }
    }
  }
  admittance.validate();
  weights.validate();
  solver.validate();
  inference.validate(static_cast<int>(modes.size()));
  hyperparams.validate();
  if (arm) arm->validate();
  if (options.arm_vars && !arm) bad("options.arm_vars", "requires an arm model");
  if (gp_points < 1) bad("gp.points", "must be positive");
  if (inducing_points < 0) bad("gp.inducing_points", "must be non-negative");
  if (!(duration > 0)) bad("duration", "must be positive");
  if (!(base_rate > 0) || !(belief_rate > 0) || !(control_rate > 0)) {
    bad("rates", "must be positive");
  }
  if (belief_rate > base_rate || control_rate > base_rate) {
    bad("rates", "belief and control rates cannot exceed the base rate");
  }
  if (intent_schedule.empty()) bad("intent_schedule", "must not be empty");
  for (size_t i = 0; i < intent_schedule.size(); ++i) {
    const auto& e = intent_schedule[i];
    if (e.mode < 0 || e.mode >= static_cast<int>(modes.size())) {
      bad("intent_schedule", "mode index out of range");
    }
    if (i > 0 && !(e.t > intent_schedule[i - 1].t)) {
      bad("intent_schedule", "times must be increasing");
    }
  }
  for (const auto& d : disturbances) {
    if (!(d.t_end > d.t_start)) bad("disturbances", "t_end must exceed t_start");
    if (!d.wrench.finite()) bad("disturbances", "wrench must be finite");
  }
  if (demos_per_mode < 1) bad("commissioning.demos_per_mode", "must be positive");
  if (!(demo_rate > 0) || demo_rate > base_rate) {
    bad("commissioning.rate", "must be in (0, base rate]");
  }
  if (!(demo_timeout > 0)) bad("commissioning.timeout", "must be positive");
  if (!(demo_dwell >= 0)) bad("commissioning.dwell", "must be non-negative");
}

Scenario builtin_scenario(const std::string& name) {
  if (name == "two_goal") return two_goal();
  if (name == "single_goal") {
    Scenario s = two_goal();
    s.name = "single_goal";
    s.modes.resize(1);
    return s;
  }
  if (name == "flip") {
    Scenario s = two_goal();
    s.name = "flip";
    s.intent_schedule = {{0.0, 0}, {3.0, 1}};
    s.duration = 25.0;
    return s;
  }
  if (name == "perturb") {
    Scenario s = two_goal();
    s.name = "perturb";
    s.duration = 25.0;
    Disturbance d;
    d.t_start = 10.0;
    d.t_end = 12.0;
    d.wrench = Wrench(Vector3d(25.0, 0.0, 0.0), Vector3d::Zero());
    s.disturbances = {d};
    return s;
  }
  throw Error("unknown built-in scenario: " + name);
}

std::vector<std::string> builtin_scenario_names() {
  return {"two_goal", "single_goal", "flip", "perturb"};
}

bool is_builtin_scenario(const std::string& name) {
  for (const auto& n : builtin_scenario_names()) {
    if (n == name) return true;
  }
  return false;
}

Scenario parse_scenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("scenario: ") + e.what());
  }
  Scenario s;
  Fields root(j, "");
  root.get("name", s.name);

  if (root.has("modes")) {
    const json& ms = root.at("modes");
    if (!ms.is_array()) root.fail("modes", "expected an array");
    s.modes.clear();
    for (size_t i = 0; i < ms.size(); ++i) {
      Fields f(ms[i], "modes[" + std::to_string(i) + "]");
      ModeSpec m;
      m.name = "mode" + std::to_string(i);
      f.get("name", m.name);
      if (!f.has("goal")) f.fail("goal", "required");
      m.goal = read_pose(f, "goal");
      if (f.has("human")) read_human(f.at("human"), f.child("human"), m.human);
      std::vector<std::string> files;
      f.get("demos", files);
      for (auto& p : files) m.demo_files.emplace_back(p);
      f.finish();
      s.modes.push_back(std::move(m));
    }
  }

  if (root.has("admittance")) {
    Fields f(root.at("admittance"), "admittance");
    f.vec("M", s.admittance.M);
    f.vec("D", s.admittance.D);
    f.vec("K", s.admittance.K);
    if (f.has("x0")) s.admittance.x0 = read_pose(f, "x0");
    f.finish();
  }

  if (root.has("weights")) {
    Fields f(root.at("weights"), "weights");
    auto& w = s.weights;
    f.vec("Q_mu", w.Q_mu);
    f.vec("Q_Sigma", w.Q_Sigma);
    f.vec("Q_H", w.Q_H);
    f.vec("Q_SigmaH", w.Q_SigmaH);
    f.vec("Q_J", w.Q_J);
    f.vec("Q_u", w.Q_u);
    f.vec("Q_dM", w.Q_dM);
    f.vec("Q_dD", w.Q_dD);
    f.get("Q_q", w.Q_q);
    f.get("alpha", w.alpha);
    std::string obj;
    f.get("objective", obj);
    if (!obj.empty()) w.objective = parse_objective(obj, f);
    f.get("robust_force", w.robust_force_variant);
    f.finish();
  }

  if (root.has("solver")) {
    Fields f(root.at("solver"), "solver");
    auto& c = s.solver;
    f.get("H", c.H);
    f.get("Ts", c.Ts);
    f.get("rho", c.rho);
    f.get("rho_cov", c.rho_cov);
    f.get("max_iterations", c.max_iterations);
    f.get("max_outer_iterations", c.max_outer_iterations);
    f.get("tolerance", c.tolerance);
    f.get("warm_start", c.warm_start);
    f.vec("velocity_limit", c.velocity_limit);
    f.get("force_limit", c.force_limit);
    f.get("moment_limit", c.moment_limit);
    f.get("impedance_fraction", c.impedance_fraction);
    f.get("joint_box", c.joint_box);
    f.finish();
  }

  if (root.has("options")) {
    Fields f(root.at("options"), "options");
    f.get("full_gp_cov", s.options.full_gp_cov);
    f.get("state_cov", s.options.state_cov);
    f.get("impedance_vars", s.options.impedance_vars);
    f.get("arm_vars", s.options.arm_vars);
    f.finish();
  }

  if (root.has("inference")) {
    Fields f(root.at("inference"), "inference");
    auto& c = s.inference;
    f.get("floor", c.floor);
    f.get("beta", c.beta);
    std::string lik;
    f.get("likelihood", lik);
    if (lik == "gaussian") {
      c.likelihood = LikelihoodMode::kGaussian;
    } else if (lik == "similarity") {
      c.likelihood = LikelihoodMode::kSimilarity;
    } else if (!lik.empty()) {
      f.fail("likelihood", "expected \"gaussian\" or \"similarity\"");
    }
    if (f.has("transitions")) {
      const json& t = f.at("transitions");
      if (!t.is_array()) f.fail("transitions", "expected an array of rows");
      const auto n = static_cast<Eigen::Index>(t.size());
      c.transitions.resize(n, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!t[i].is_array() || static_cast<Eigen::Index>(t[i].size()) != n) {
          f.fail("transitions", "expected a square matrix");
        }
        for (Eigen::Index k = 0; k < n; ++k) {
          if (!t[i][k].is_number()) f.fail("transitions", "expected numbers");
          c.transitions(i, k) = t[i][k].get<double>();
        }
      }
    }
    f.get("deadband", c.deadband);
    f.get("similarity_normalized", c.similarity_normalized);
    f.finish();
  }

  if (root.has("gp")) {
    Fields f(root.at("gp"), "gp");
    if (f.has("hyperparams")) {
      Fields h(f.at("hyperparams"), "gp.hyperparams");
      if (h.has("linear")) read_hyper(h.at("linear"), "gp.hyperparams.linear",
                                      s.hyperparams.linear);
      if (h.has("rotational")) {
        read_hyper(h.at("rotational"), "gp.hyperparams.rotational",
                   s.hyperparams.rotational);
      }
      h.finish();
    }
    f.get("points", s.gp_points);
    f.get("inducing_points", s.inducing_points);
    f.finish();
  }

  if (root.has("arm")) {
    Fields f(root.at("arm"), "arm");
    ArmModel arm;
    f.get("l1", arm.l1);
    f.get("l2", arm.l2);
    f.vec("shoulder", arm.shoulder);
    f.vec("grasp_offset", arm.grasp_offset);
    f.finish();
    s.arm = arm;
  }

  if (root.has("initial")) {
    Fields f(root.at("initial"), "initial");
    if (f.has("pose")) s.initial.x = read_pose(f, "pose");
    f.vec("velocity", s.initial.xdot);
    f.finish();
  }
  root.get("duration", s.duration);
  if (root.has("rates")) {
    Fields f(root.at("rates"), "rates");
    f.get("base", s.base_rate);
    f.get("belief", s.belief_rate);
    f.get("control", s.control_rate);
    f.finish();
  }
  root.get("seed", s.seed);

  if (root.has("intent_schedule")) {
    const json& a = root.at("intent_schedule");
    if (!a.is_array()) root.fail("intent_schedule", "expected an array");
    s.intent_schedule.clear();
    for (size_t i = 0; i < a.size(); ++i) {
      Fields f(a[i], "intent_schedule[" + std::to_string(i) + "]");
      IntentSwitch e;
      f.get("t", e.t);
      f.get("mode", e.mode);
      f.finish();
      s.intent_schedule.push_back(e);
    }
  }

  if (root.has("disturbances")) {
    const json& a = root.at("disturbances");
    if (!a.is_array()) root.fail("disturbances", "expected an array");
    for (size_t i = 0; i < a.size(); ++i) {
      Fields f(a[i], "disturbances[" + std::to_string(i) + "]");
      Disturbance d;
      f.get("t_start", d.t_start);
      f.get("t_end", d.t_end);
      Vector3d force = Vector3d::Zero(), moment = Vector3d::Zero();
      f.vec("force", force);
      f.vec("moment", moment);
      d.wrench = Wrench(force, moment);
      f.finish();
      s.disturbances.push_back(d);
    }
  }

  if (root.has("commissioning")) {
    Fields f(root.at("commissioning"), "commissioning");
    f.get("demos_per_mode", s.demos_per_mode);
    f.get("rate", s.demo_rate);
    f.get("timeout", s.demo_timeout);
    f.get("dwell", s.demo_dwell);
    if (f.has("starts")) {
      const json& a = f.at("starts");
      if (!a.is_array()) f.fail("starts", "expected an array of poses");
      for (const auto& p : a) s.demo_starts.push_back(Pose::from_vector(f.read_vec<6>(p, "starts")));
    }
    f.finish();
  }
  root.finish();

  s.validate();
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  Scenario s = parse_scenario(ss.str());
  // relative demo paths are resolved against the scenario's directory
  for (auto& m : s.modes) {
    for (auto& f : m.demo_files) {
      if (f.is_relative()) f = path.parent_path() / f;
    }
  }
  return s;
}

std::string scenario_to_json(const Scenario& s) {
  json j;
  j["name"] = s.name;
  json modes = json::array();
  for (const auto& m : s.modes) {
    json files = json::array();
    for (const auto& f : m.demo_files) files.push_back(f.string());
    modes.push_back({{"name", m.name},
                     {"goal", to_json(m.goal.vector())},
                     {"human", human_json(m.human)},
                     {"demos", files}});
  }
  j["modes"] = modes;
  j["admittance"] = {{"M", to_json(s.admittance.M)},
                     {"D", to_json(s.admittance.D)},
                     {"K", to_json(s.admittance.K)},
                     {"x0", to_json(s.admittance.x0.vector())}};
  const auto& w = s.weights;
  j["weights"] = {{"Q_mu", to_json(w.Q_mu)},         {"Q_Sigma", to_json(w.Q_Sigma)},
                  {"Q_H", to_json(w.Q_H)},           {"Q_SigmaH", to_json(w.Q_SigmaH)},
                  {"Q_J", to_json(w.Q_J)},           {"Q_u", to_json(w.Q_u)},
                  {"Q_dM", to_json(w.Q_dM)},         {"Q_dD", to_json(w.Q_dD)},
                  {"Q_q", w.Q_q},                    {"alpha", w.alpha},
                  {"objective", objective_name(w.objective)},
                  {"robust_force", w.robust_force_variant}};
  const auto& c = s.solver;
  j["solver"] = {{"H", c.H},
                 {"Ts", c.Ts},
                 {"rho", c.rho},
                 {"rho_cov", c.rho_cov},
                 {"max_iterations", c.max_iterations},
                 {"max_outer_iterations", c.max_outer_iterations},
                 {"tolerance", c.tolerance},
                 {"warm_start", c.warm_start},
                 {"velocity_limit", to_json(c.velocity_limit)},
                 {"force_limit", c.force_limit},
                 {"moment_limit", c.moment_limit},
                 {"impedance_fraction", c.impedance_fraction},
                 {"joint_box", c.joint_box}};
  j["options"] = {{"full_gp_cov", s.options.full_gp_cov},
                  {"state_cov", s.options.state_cov},
                  {"impedance_vars", s.options.impedance_vars},
                  {"arm_vars", s.options.arm_vars}};
  json trans = json::array();
  for (Eigen::Index i = 0; i < s.inference.transitions.rows(); ++i) {
    trans.push_back(to_json(s.inference.transitions.row(i).transpose()));
  }
  j["inference"] = {
      {"floor", s.inference.floor},
      {"beta", s.inference.beta},
      {"likelihood",
       s.inference.likelihood == LikelihoodMode::kGaussian ? "gaussian" : "similarity"},
      {"transitions", trans},
      {"deadband", s.inference.deadband},
      {"similarity_normalized", s.inference.similarity_normalized}};
  j["gp"] = {{"hyperparams",
              {{"linear", hyper_json(s.hyperparams.linear)},
               {"rotational", hyper_json(s.hyperparams.rotational)}}},
             {"points", s.gp_points},
             {"inducing_points", s.inducing_points}};
  if (s.arm) {
    j["arm"] = {{"l1", s.arm->l1},
                {"l2", s.arm->l2},
                {"shoulder", to_json(s.arm->shoulder)},
                {"grasp_offset", to_json(s.arm->grasp_offset)}};
  }
  j["initial"] = {{"pose", to_json(s.initial.x.vector())},
                  {"velocity", to_json(s.initial.xdot)}};
  j["duration"] = s.duration;
  j["rates"] = {{"base", s.base_rate}, {"belief", s.belief_rate}, {"control", s.control_rate}};
  j["seed"] = s.seed;
  json sched = json::array();
  for (const auto& e : s.intent_schedule) sched.push_back({{"t", e.t}, {"mode", e.mode}});
  j["intent_schedule"] = sched;
  json dist = json::array();
  for (const auto& d : s.disturbances) {
    dist.push_back({{"t_start", d.t_start},
                    {"t_end", d.t_end},
                    {"force", to_json(d.wrench.f)},
                    {"moment", to_json(d.wrench.m)}});
  }
  j["disturbances"] = dist;
  json starts = json::array();
  for (const auto& p : s.demo_starts) starts.push_back(to_json(p.vector()));
  j["commissioning"] = {{"demos_per_mode", s.demos_per_mode},
                        {"rate", s.demo_rate},
                        {"timeout", s.demo_timeout},
                        {"dwell", s.demo_dwell},
                        {"starts", starts}};
  return j.dump(2);
}

std::string scenario_hash(const Scenario& s) {
  const std::string text = scenario_to_json(s);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int intent_at(const Scenario& s, double t) {
  int mode = s.intent_schedule.front().mode;
  for (const auto& e : s.intent_schedule) {
    if (t >= e.t) mode = e.mode;
  }
  return mode;
}

}  // namespace gpmpc
