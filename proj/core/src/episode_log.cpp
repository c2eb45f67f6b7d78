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


#include <fstream>
#include <iomanip>
#include <sstream>

#include "gpmpc/sim.hpp"
#include "json.hpp"

namespace gpmpc {
namespace {

using nlohmann::json;

json arr(const Eigen::Ref<const VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector6d vec6(const json& j) {
  if (!j.is_array() || j.size() != 6) throw ParseError("episode log: expected a 6-vector");
  Vector6d v;
  for (int i = 0; i < 6; ++i) v(i) = j[i].get<double>();
  return v;
}

VectorXd vecx(const json& j) {
  if (!j.is_array()) throw ParseError("episode log: expected an array");
  VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

const char* source_name(ForceSource s) {
  switch (s) {
    case ForceSource::kSynthetic:
      return "synthetic";
    case ForceSource::kDisturbance:
      return "disturbance";
    case ForceSource::kExternal:
      return "external";
  }
  return "synthetic";
}

ForceSource parse_source(const std::string& s) {
  if (s == "synthetic") return ForceSource::kSynthetic;
  if (s == "disturbance") return ForceSource::kDisturbance;
  if (s == "external") return ForceSource::kExternal;
  throw ParseError("episode log: unknown force source \"" + s + "\"");
}

json plan_json(const PlanSnapshot& p) {
  json poses = json::array();
  for (const auto& mode : p.poses) {
    json m = json::array();
    for (const auto& x : mode) m.push_back(arr(x));
    poses.push_back(m);
  }
  json fR = json::array();
  for (const auto& f : p.fR) fR.push_back(arr(f));
  return {{"poses", poses},           {"fR", fR},
          {"iterations", p.iterations}, {"converged", p.converged},
          {"fallback", p.fallback},   {"residual", p.residual},
          {"objective", p.objective}};
}

PlanSnapshot parse_plan(const json& j) {
  PlanSnapshot p;
  for (const auto& mode : j.at("poses")) {
    std::vector<Vector6d> m;
    for (const auto& x : mode) m.push_back(vec6(x));
    p.poses.push_back(std::move(m));
  }
  for (const auto& f : j.at("fR")) p.fR.push_back(vec6(f));
  p.iterations = j.at("iterations").get<int>();
  p.converged = j.at("converged").get<bool>();
  p.fallback = j.at("fallback").get<bool>();
  p.residual = j.at("residual").get<double>();
  p.objective = j.at("objective").get<double>();
  return p;
}

}  // namespace

void write_episode_log(std::ostream& out, const EpisodeLog& log) {
  const auto& m = log.meta;
  json goals = json::array();
  for (const auto& g : m.goals) goals.push_back(arr(g));
  json header = {{"format", m.format},
                 {"version", m.version},
                 {"scenario", m.scenario},
                 {"scenario_hash", m.scenario_hash},
                 {"seed", m.seed},
                 {"modes", m.modes},
                 {"horizon", m.horizon},
                 {"rates",
                  {{"base", m.base_rate}, {"belief", m.belief_rate}, {"control", m.control_rate}}},
                 {"goals", goals}};
  out << header.dump() << '\n';
  for (const auto& r : log.ticks) {
    json j = {{"tick", r.tick},
              {"t", r.t},
              {"x", arr(r.x)},
              {"xdot", arr(r.xdot)},
              {"fH", arr(r.fH)},
              {"fR", arr(r.fR)},
              {"belief", arr(r.belief)},
              {"intent", r.intent},
              {"source", source_name(r.source)},
              {"belief_tick", r.belief_tick}};
    if (r.plan) j["plan"] = plan_json(*r.plan);
    out << j.dump() << '\n';
  }
}

void write_episode_log(const std::filesystem::path& path, const EpisodeLog& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write episode log: " + path.string());
  write_episode_log(out, log);
  if (!out) throw Error("failed writing episode log: " + path.string());
}

EpisodeLog read_episode_log(std::istream& in) {
  EpisodeLog log;
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  double last_t = -1.0;
  try {
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      json j = json::parse(line);
      if (!have_header) {
        auto& m = log.meta;
        m.format = j.at("format").get<std::string>();
        if (m.format != "gpmpc-episode") throw ParseError("not an episode log");
        m.version = j.at("version").get<int>();
        if (m.version != 1) throw ParseError("unsupported version " + std::to_string(m.version));
        m.scenario = j.at("scenario").get<std::string>();
        m.scenario_hash = j.at("scenario_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.modes = j.at("modes").get<int>();
        m.horizon = j.at("horizon").get<int>();
        m.base_rate = j.at("rates").at("base").get<double>();
        m.belief_rate = j.at("rates").at("belief").get<double>();
        m.control_rate = j.at("rates").at("control").get<double>();
        for (const auto& g : j.at("goals")) m.goals.push_back(vec6(g));
        have_header = true;
        continue;
      }
      TickRecord r;
      r.tick = j.at("tick").get<std::int64_t>();
      r.t = j.at("t").get<double>();
      if (!(r.t > last_t)) throw ParseError("time is not increasing");
      last_t = r.t;
      r.x = vec6(j.at("x"));
      r.xdot = vec6(j.at("xdot"));
      r.fH = vec6(j.at("fH"));
      r.fR = vec6(j.at("fR"));
      r.belief = vecx(j.at("belief"));
      if (r.belief.size() != log.meta.modes) throw ParseError("belief size mismatch");
      r.intent = j.at("intent").get<int>();
      r.source = parse_source(j.at("source").get<std::string>());
      r.belief_tick = j.at("belief_tick").get<bool>();
      if (j.contains("plan")) r.plan = parse_plan(j.at("plan"));
      log.ticks.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw ParseError("episode log line " + std::to_string(lineno) + ": " + e.what());
  } catch (const ParseError& e) {
    throw ParseError("episode log line " + std::to_string(lineno) + ": " + e.what());
  }
  if (!have_header) throw ParseError("episode log: missing header");
  return log;
}

EpisodeLog read_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open episode log: " + path.string());
  return read_episode_log(in);
}

void write_trace_csv(const std::filesystem::path& path, const EpisodeLog& log) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace file: " + path.string());
  out << "t";
  for (int n = 0; n < log.meta.modes; ++n) out << ",b" << n;
  for (const char* ax : {"fx", "fy", "fz", "mx", "my", "mz"}) out << ",H_" << ax;
  for (const char* ax : {"fx", "fy", "fz", "mx", "my", "mz"}) out << ",R_" << ax;
  out << ",px,py,pz,intent\n";
  out << std::setprecision(10);
  for (const auto& r : log.ticks) {
    out << r.t;
    for (Eigen::Index n = 0; n < r.belief.size(); ++n) out << ',' << r.belief(n);
    for (int i = 0; i < 6; ++i) out << ',' << r.fH(i);
    for (int i = 0; i < 6; ++i) out << ',' << r.fR(i);
    for (int i = 0; i < 3; ++i) out << ',' << r.x(i);
    out << ',' << r.intent << '\n';
  }
}

Demonstration log_to_demonstration(const EpisodeLog& log) {
  Demonstration d;
  for (const auto& r : log.ticks) {
    d.samples.push_back({r.t, Pose::from_vector(r.x), r.xdot, Wrench::from_vector(r.fH)});
  }
  return d;
}

}  // namespace gpmpc
