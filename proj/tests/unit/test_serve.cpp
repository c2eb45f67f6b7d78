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

#include <atomic>
#include <chrono>
#include <future>
#include <string>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "gpmpc/sim.hpp"
#include "json.hpp"
#include "test_util.hpp"

namespace gpmpc {
namespace {

using nlohmann::json;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;

const ModelSet& models() {
  static const ModelSet m = [] {
    testing::Gen g(21);
    return testing::field_models(g);
  }();
  return m;
}

Scenario scenario(double duration = 5.0) {
  Scenario s = builtin_scenario("two_goal");
  s.duration = duration;
  return s;
}

std::string apply_error(EpisodeRunner& r, const std::string& text) {
  bool paused = false;
  try {
    apply_message(r, text, paused);
  } catch (const ParseError& e) {
    return e.what();
  }
  return "";
}

TEST(Frame, CarriesStateBeliefAndPlans) {
  EpisodeRunner r(scenario(), models());
  json f = json::parse(make_frame(r));
  EXPECT_EQ(f["type"], "frame");
  EXPECT_EQ(f["tick"], 0);
  EXPECT_EQ(f["pose"].size(), 6u);
  EXPECT_EQ(f["belief"].size(), 2u);
  EXPECT_EQ(f["modes"][1], "B");
  EXPECT_EQ(f["goals"][0][1], 0.15);
  EXPECT_TRUE(f["plans"].empty());
  EXPECT_EQ(f["source"], "synthetic");

  r.step();
  f = json::parse(make_frame(r));
  EXPECT_EQ(f["tick"], 1);
  EXPECT_DOUBLE_EQ(f["t"].get<double>(), 0.01);
  ASSERT_EQ(f["plans"].size(), 2u);
  EXPECT_EQ(f["plans"][0]["poses"].size(), 6u);
  EXPECT_EQ(f["plans"][1]["fR"].size(), 6u);
  EXPECT_EQ(f["plans"][0]["fR"], f["plans"][1]["fR"]);
  EXPECT_EQ(f["fR"], f["plans"][0]["fR"][0]);
  EXPECT_GE(f["solver_ms"].get<double>(), 0.0);
  const auto& last = r.log().ticks.back();
  for (int i = 0; i < 6; ++i) EXPECT_EQ(f["fH"][i].get<double>(), last.fH(i));
}

TEST(Messages, ForceHoldAndRelease) {
  EpisodeRunner r(scenario(), models());
  bool paused = false;
  apply_message(r, R"({"force": [1, 2, 3], "moment": [0, 0, 0.5]})", paused);
  auto rec = r.step();
  EXPECT_EQ(rec.source, ForceSource::kExternal);
  EXPECT_EQ(rec.fH, (Vector6d() << 1, 2, 3, 0, 0, 0.5).finished());
  apply_message(r, R"({"force": [0, 4, 0], "hold": true})", paused);
  EXPECT_EQ(r.step().fH(1), 4.0);
  apply_message(r, R"({"hold": false})", paused);
  EXPECT_EQ(r.step().source, ForceSource::kSynthetic);
  EXPECT_FALSE(paused);
}

TEST(Messages, Commands) {
  EpisodeRunner r(scenario(), models());
  bool paused = false;
  apply_message(r, R"({"command": "pause"})", paused);
  EXPECT_TRUE(paused);
  apply_message(r, R"({"command": "resume"})", paused);
  EXPECT_FALSE(paused);
  apply_message(r, R"({"command": "pause", "paused": false})", paused);
  EXPECT_FALSE(paused);

  apply_message(r, R"({"command": "set_mode_schedule", "schedule": [{"t": 0, "mode": 1}]})",
                paused);
  EXPECT_EQ(r.step().intent, 1);
  r.step();
  apply_message(r, R"({"command": "reset"})", paused);
  EXPECT_EQ(r.tick(), 0);
  // the schedule survives a reset
  EXPECT_EQ(r.step().intent, 1);
}

TEST(Messages, BadInputIsAParseError) {
  EpisodeRunner r(scenario(), models());
  EXPECT_NE(apply_error(r, "{oops").find("message"), std::string::npos);
  EXPECT_NE(apply_error(r, "[1, 2]").find("object"), std::string::npos);
  EXPECT_NE(apply_error(r, "{}").find("expected"), std::string::npos);
  EXPECT_NE(apply_error(r, R"({"command": "fly"})").find("fly"), std::string::npos);
  EXPECT_NE(apply_error(r, R"({"command": 3})").find("string"), std::string::npos);
  EXPECT_NE(apply_error(r, R"({"force": [1, 2]})").find("3-vector"), std::string::npos);
  EXPECT_NE(apply_error(r, R"({"force": [1, "a", 2]})").find("numeric"), std::string::npos);
  EXPECT_NE(apply_error(r, R"({"command": "set_mode_schedule"})").find("schedule"),
            std::string::npos);
  EXPECT_NE(apply_error(r, R"({"command": "set_mode_schedule", "schedule": [{"t": 0, "mode": 4}]})")
                .find("mode index"),
            std::string::npos);
  EXPECT_NE(apply_error(r, R"({"command": "set_mode_schedule", "schedule": [{"t": 0}]})")
                .find("schedule"),
            std::string::npos);
  EXPECT_NE(apply_error(r, R"({"hold": "yes"})").find("message"), std::string::npos);
  // nothing above changed the runner
  EXPECT_EQ(r.step().source, ForceSource::kSynthetic);
  EXPECT_EQ(r.log().ticks.back().intent, 0);
}

TEST(Serve, RunsToMaxTimeWithoutAClient) {
  ServeOptions opt;
  opt.port = 0;
  opt.realtime = false;
  opt.max_time = 0.5;
  unsigned short port = 0;
  opt.on_ready = [&](unsigned short p) { port = p; };
  serve(scenario(), models(), opt);
  EXPECT_NE(port, 0);
  opt.frame_rate = 0.0;
  EXPECT_THROW(serve(scenario(), models(), opt), Error);
}

TEST(Serve, WebSocketRoundTrip) {
  std::promise<unsigned short> ready;
  std::atomic<bool> stop{false};
  ServeOptions opt;
  opt.port = 0;
  opt.realtime = true;
  opt.max_time = 4.0;
  opt.on_ready = [&](unsigned short p) { ready.set_value(p); };
  std::thread server([&] { serve(scenario(), models(), opt, [&] { return stop.load(); }); });
  const unsigned short port = ready.get_future().get();

  net::io_context ioc;
  websocket::stream<tcp::socket> ws(ioc);
  tcp::resolver resolver(ioc);
  net::connect(ws.next_layer(), resolver.resolve("127.0.0.1", std::to_string(port)));
  ws.handshake("127.0.0.1", "/");

  auto next = [&] {
    beast::flat_buffer buf;
    ws.read(buf);
    return json::parse(beast::buffers_to_string(buf.data()));
  };

  json first = next();
  EXPECT_EQ(first["type"], "frame");
  EXPECT_EQ(first["belief"].size(), 2u);

  ws.text(true);
  ws.write(net::buffer(std::string(R"({"force": [0, 9, 0]})")));
  bool saw_external = false;
  for (int i = 0; i < 200 && !saw_external; ++i) {
    json f = next();
    if (f["type"] == "frame" && f["source"] == "external") {
      EXPECT_EQ(f["fH"][1], 9.0);
      saw_external = true;
    }
  }
  EXPECT_TRUE(saw_external);

  ws.write(net::buffer(std::string("not json")));
  bool saw_error = false;
  for (int i = 0; i < 200 && !saw_error; ++i) {
    json f = next();
    if (f["type"] == "error") {
      EXPECT_NE(f["message"].get<std::string>().find("message"), std::string::npos);
      saw_error = true;
    }
  }
  EXPECT_TRUE(saw_error);

  ws.write(net::buffer(std::string(R"({"command": "pause"})")));
  // frames keep coming while paused, with the clock frozen
  double t_paused = -1.0;
  int frozen = 0;
  for (int i = 0; i < 200 && frozen < 3; ++i) {
    json f = next();
    if (f["type"] != "frame") continue;
    const double t = f["t"].get<double>();
    if (t == t_paused) {
      ++frozen;
    } else {
      t_paused = t;
      frozen = 0;
    }
  }
  EXPECT_EQ(frozen, 3);

  stop = true;
  beast::error_code ec;
  for (int i = 0; i < 1000 && !ec; ++i) {
    beast::flat_buffer buf;
    ws.read(buf, ec);
  }
  EXPECT_EQ(ec, websocket::error::closed);
  server.join();
}

}  // namespace
}  // namespace gpmpc
