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


#include <chrono>
#include <deque>
#include <memory>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "gpmpc/sim.hpp"
#include "json.hpp"

namespace gpmpc {
namespace {

namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

// at most this many frames wait for a slow client; older ones are dropped
constexpr std::size_t kMaxQueuedFrames = 8;
// real-time catch-up limit per wake-up; beyond it ticks are dropped
constexpr int kMaxCatchUpTicks = 10;

json arr(const Eigen::Ref<const VectorXd>& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vector3d vec3(const json& j, const char* key) {
  if (!j.is_array() || j.size() != 3) {
    throw ParseError(std::string("message: ") + key + " must be a 3-vector");
  }
  Vector3d v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError(std::string("message: ") + key + " must be numeric");
    v(i) = j[i].get<double>();
  }
  return v;
}

struct Connection {
  explicit Connection(tcp::socket socket) : ws(std::move(socket)) {}
  websocket::stream<tcp::socket> ws;
  beast::flat_buffer buffer;
  std::deque<std::string> out;
  bool writing = false;
  bool open = false;
  bool closing = false;  // close frame goes out once the queue drains
};

class Server {
 public:
  Server(const Scenario& s, const ModelSet& models, const ServeOptions& options,
         const std::function<bool()>& stop)
      : options_(options),
        stop_(stop),
        acceptor_(ioc_),
        timer_(ioc_),
        shutdown_timer_(ioc_),
        runner_(s, models) {
    runner_.set_keep_history(false);
    tcp::endpoint ep(net::ip::make_address(options.address), options.port);
    acceptor_.open(ep.protocol());
    acceptor_.set_option(net::socket_base::reuse_address(true));
    acceptor_.bind(ep);
    acceptor_.listen();
  }

  void run() {
    if (options_.on_ready) options_.on_ready(acceptor_.local_endpoint().port());
    accept();
    start_ = Clock::now();
    schedule();
    ioc_.run();
  }

 private:
  void accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      auto conn = std::make_shared<Connection>(std::move(socket));
      conn->ws.set_option(websocket::stream_base::decorator(
          [](websocket::response_type& res) { res.set(beast::http::field::server, "gpmpc"); }));
      conn->ws.async_accept([this, conn](beast::error_code ec2) {
        if (ec2 || finished_) return;
        // latest client wins; the previous one is closed
        if (conn_) drop(conn_);
        conn->open = true;
        conn_ = conn;
        read(conn);
        send(make_frame(runner_));
      });
      accept();
    });
  }

  void read(const std::shared_ptr<Connection>& conn) {
    conn->ws.async_read(conn->buffer, [this, conn](beast::error_code ec, std::size_t) {
      if (ec) {
        drop(conn);
        return;
      }
      inbound_.push_back(beast::buffers_to_string(conn->buffer.data()));
      conn->buffer.consume(conn->buffer.size());
      read(conn);
    });
  }

  void drop(const std::shared_ptr<Connection>& conn) {
    if (!conn->open) return;
    conn->open = false;
    beast::error_code ignored;
    conn->ws.next_layer().close(ignored);
    if (conn_ == conn) {
      conn_.reset();
      // a dropped session releases any held force
      runner_.set_external(std::nullopt);
      if (finished_) shutdown_timer_.cancel();
    }
  }

  void send(std::string text) {
    if (!conn_ || finished_) return;
    auto conn = conn_;
    conn->out.push_back(std::move(text));
    while (conn->out.size() > kMaxQueuedFrames) conn->out.pop_front();
    if (!conn->writing) write(conn);
  }

  void write(const std::shared_ptr<Connection>& conn) {
    if (!conn->open || conn->out.empty()) {
      conn->writing = false;
      if (conn->open && conn->closing) close(conn);
      return;
    }
    conn->writing = true;
    auto msg = std::make_shared<std::string>(std::move(conn->out.front()));
    conn->out.pop_front();
    conn->ws.text(true);
    conn->ws.async_write(net::buffer(*msg), [this, conn, msg](beast::error_code ec, std::size_t) {
      if (ec) {
        conn->writing = false;
        drop(conn);
        return;
      }
      write(conn);
    });
  }

  void schedule() {
    if (options_.realtime) {
      timer_.expires_after(std::chrono::microseconds(
          static_cast<long>(1e6 / runner_.scenario().base_rate)));
    } else {
      timer_.expires_after(std::chrono::microseconds(0));
    }
    timer_.async_wait([this](beast::error_code ec) {
      if (!ec) tick();
    });
  }

  void tick() {
    while (!inbound_.empty()) {
      const std::string msg = std::move(inbound_.front());
      inbound_.pop_front();
      try {
        const bool was_paused = paused_;
        apply_message(runner_, msg, paused_);
        if (was_paused && !paused_) rebase();
      } catch (const ParseError& e) {
        send(json{{"type", "error"}, {"message", e.what()}}.dump());
      }
    }

    if ((stop_ && stop_()) ||
        (options_.max_time > 0.0 && runner_.time() >= options_.max_time) || runner_.done()) {
      finish();
      return;
    }

    const double base = runner_.scenario().base_rate;
    if (paused_) {
      const auto now = Clock::now();
      if (now - last_paused_frame_ > std::chrono::duration<double>(1.0 / options_.frame_rate)) {
        last_paused_frame_ = now;
        send(make_frame(runner_));
      }
    } else {
      int due = 1;
      if (options_.realtime) {
        const double elapsed = std::chrono::duration<double>(Clock::now() - start_).count();
        const auto target = static_cast<std::int64_t>(elapsed * base) + tick_origin_;
        due = static_cast<int>(target - runner_.tick());
        if (due > kMaxCatchUpTicks) {
          // solves overran; drop the backlog instead of fast-forwarding
          due = kMaxCatchUpTicks;
          rebase();
        }
      }
      for (int i = 0; i < due && !runner_.done(); ++i) {
        runner_.step();
        if (rate_tick(runner_.tick() - 1, options_.frame_rate, base)) send(make_frame(runner_));
      }
    }
    schedule();
  }

  void rebase() {
    start_ = Clock::now();
    tick_origin_ = runner_.tick();
  }

  // Queued frames go out first, then the close frame. The pending read
  // completes when the peer answers, drops the connection and the context
  // runs out of work. A peer that never answers is cut off after a second.
  void finish() {
    finished_ = true;
    beast::error_code ignored;
    acceptor_.close(ignored);
    timer_.cancel();
    if (!conn_) return;
    auto conn = conn_;
    conn->closing = true;
    if (!conn->writing) close(conn);
    shutdown_timer_.expires_after(std::chrono::seconds(1));
    shutdown_timer_.async_wait([this](beast::error_code ec) {
      if (!ec) ioc_.stop();
    });
  }

  void close(const std::shared_ptr<Connection>& conn) {
    conn->writing = true;
    conn->ws.async_close(websocket::close_code::normal, [this, conn](beast::error_code ec) {
      conn->writing = false;
      if (ec) drop(conn);
    });
  }

  ServeOptions options_;
  std::function<bool()> stop_;
  net::io_context ioc_;
  tcp::acceptor acceptor_;
  net::steady_timer timer_;
  net::steady_timer shutdown_timer_;
  bool finished_ = false;
  EpisodeRunner runner_;
  std::shared_ptr<Connection> conn_;
  std::deque<std::string> inbound_;
  bool paused_ = false;
  Clock::time_point start_;
  Clock::time_point last_paused_frame_;
  std::int64_t tick_origin_ = 0;
};

}  // namespace

std::string make_frame(const EpisodeRunner& runner) {
  const auto& s = runner.scenario();
  const State& xi = runner.state();
  json j;
  j["type"] = "frame";
  j["t"] = runner.time();
  j["tick"] = runner.tick();
  j["pose"] = arr(xi.x.vector());
  j["velocity"] = arr(xi.xdot);
  j["belief"] = arr(runner.belief().b);
  json names = json::array();
  json goals = json::array();
  for (const auto& m : s.modes) {
    names.push_back(m.name);
    goals.push_back(arr(m.goal.vector()));
  }
  j["modes"] = names;
  j["goals"] = goals;
  const auto& ticks = runner.log().ticks;
  if (!ticks.empty()) {
    const auto& last = ticks.back();
    j["fH"] = arr(last.fH);
    j["fR"] = arr(last.fR);
    j["intent"] = last.intent;
    j["source"] = last.source == ForceSource::kExternal      ? "external"
                  : last.source == ForceSource::kDisturbance ? "disturbance"
                                                             : "synthetic";
  } else {
    j["fH"] = arr(Vector6d::Zero());
    j["fR"] = arr(Vector6d::Zero());
    j["intent"] = intent_at(s, runner.time());
    j["source"] = "synthetic";
  }
  json plans = json::array();
  if (const auto& plan = runner.last_plan()) {
    json fR = json::array();
    for (const auto& f : plan->u.fR) fR.push_back(arr(f.vector()));
    for (size_t n = 0; n < plan->modes.size(); ++n) {
      json poses = json::array();
      const auto& mu = plan->modes[n].rollout.mu;
      for (size_t k = 1; k < mu.size(); ++k) poses.push_back(arr(mu[k].head<6>()));
      plans.push_back({{"mode", n}, {"poses", poses}, {"fR", fR}});
    }
  }
  j["plans"] = plans;
  j["solver_ms"] = runner.last_solve_ms();
  return j.dump();
}

namespace {

void apply_parsed(EpisodeRunner& runner, const json& j, bool& paused) {
  if (!j.is_object()) throw ParseError("message: expected an object");

  if (j.contains("command")) {
    if (!j.at("command").is_string()) throw ParseError("message: command must be a string");
    const auto cmd = j.at("command").get<std::string>();
    if (cmd == "reset") {
      runner.reset();
    } else if (cmd == "pause") {
      paused = j.contains("paused") ? j.at("paused").get<bool>() : true;
    } else if (cmd == "resume") {
      paused = false;
    } else if (cmd == "set_mode_schedule") {
      if (!j.contains("schedule") || !j.at("schedule").is_array()) {
        throw ParseError("message: set_mode_schedule needs a schedule array");
      }
      std::vector<IntentSwitch> sched;
      for (const auto& e : j.at("schedule")) {
        if (!e.is_object() || !e.contains("t") || !e.contains("mode") ||
            !e.at("t").is_number() || !e.at("mode").is_number_integer()) {
          throw ParseError("message: schedule entries need numeric t and integer mode");
        }
        sched.push_back({e.at("t").get<double>(), e.at("mode").get<int>()});
      }
      try {
        runner.set_schedule(std::move(sched));
      } catch (const Error& e) {
        throw ParseError(std::string("message: ") + e.what());
      }
    } else {
      throw ParseError("message: unknown command \"" + cmd + "\"");
    }
    return;
  }

  if (j.contains("force") || j.contains("moment") || j.contains("hold")) {
    const bool hold = j.contains("hold") ? j.at("hold").get<bool>() : true;
    if (!hold) {
      runner.set_external(std::nullopt);
      return;
    }
    Vector3d f = Vector3d::Zero(), m = Vector3d::Zero();
    if (j.contains("force")) f = vec3(j.at("force"), "force");
    if (j.contains("moment")) m = vec3(j.at("moment"), "moment");
    Wrench w(f, m);
    if (!w.finite()) throw ParseError("message: wrench must be finite");
    runner.set_external(w);
    return;
  }
  throw ParseError("message: expected a force message or a command");
}

}  // namespace

void apply_message(EpisodeRunner& runner, const std::string& text, bool& paused) {
  try {
    apply_parsed(runner, json::parse(text), paused);
  } catch (const json::exception& e) {
    throw ParseError(std::string("message: ") + e.what());
  }
}

void serve(const Scenario& s, const ModelSet& models, const ServeOptions& options,
           const std::function<bool()>& stop) {
  if (!(options.frame_rate > 0)) throw Error("serve: frame rate must be positive");
  Server server(s, models, options, stop);
  server.run();
}

}  // namespace gpmpc
