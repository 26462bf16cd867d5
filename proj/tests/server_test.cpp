// Copyright 2026 The dhungarian Authors
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

#include "dhung/server.hpp"

#include <gtest/gtest.h>

#include <string>
#include <vector>

#include "dhung/instance_io.hpp"

namespace dhung {
namespace {

const std::string kData = DHUNG_DATA_DIR;

struct ServerFixture : ::testing::Test {
  SessionRegistry registry;
  std::string sid;
  std::unique_ptr<ConductorServer> server;

  void SetUp() override {
    RoutingSetup setup = parse_setup(parse_json_text(read_file(kData + "/routing/robots.json"), "robots"));
    Score score = parse_score(parse_json_text(read_file(kData + "/routing/score.json"), "score"), setup.config);
    sid = registry.open(score, setup);
    ServerOptions opts;
    opts.port = 0;
    opts.http_port = 0;
    server = std::make_unique<ConductorServer>(registry, opts);
    server->start();
  }

  FrameClient client() { return FrameClient("127.0.0.1", server->port()); }
};

TEST(Frames, EncodeIsBigEndianLengthPrefix) {
  const std::string f = encode_frame("{}");
  ASSERT_EQ(f.size(), 6u);
  EXPECT_EQ(f.substr(0, 4), std::string("\0\0\0\2", 4));
  EXPECT_EQ(f.substr(4), "{}");
  std::string big(300, 'x');
  EXPECT_EQ(encode_frame(big).substr(0, 4), std::string("\0\0\x01\x2c", 4));
}

TEST(Frames, DecoderHandlesSplitsAndBatches) {
  const std::string stream = encode_frame("alpha") + encode_frame("") + encode_frame("beta");
  FrameDecoder d;
  std::vector<std::string> got;
  for (char c : stream) {
    d.feed(&c, 1);
    while (auto f = d.next()) got.push_back(*f);
  }
  EXPECT_EQ(got, (std::vector<std::string>{"alpha", "", "beta"}));
}

TEST(Frames, DecoderRejectsOversizedLength) {
  FrameDecoder d;
  d.feed("\xff\xff\xff\xff", 4);
  EXPECT_THROW(d.next(), Error);
}

TEST_F(ServerFixture, SubscribeStepAndSeq) {
  FrameClient c = client();
  c.send({{"op", "subscribe"}, {"session", sid}, {"req", 1}});
  auto snap = c.recv();
  ASSERT_TRUE(snap);
  EXPECT_EQ((*snap)["kind"], "snapshot");
  auto reply = c.recv();
  ASSERT_TRUE(reply);
  EXPECT_EQ((*reply)["kind"], "reply");
  EXPECT_EQ((*reply)["req"], 1);
  c.send({{"op", "step"}, {"session", sid}, {"count", 3}});
  std::vector<json> events;
  auto step_reply = c.recv_kind("reply", &events);
  ASSERT_TRUE(step_reply);
  EXPECT_DOUBLE_EQ((*step_reply)["t"].get<double>(), 0.3);
  ASSERT_EQ(events.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_EQ(events[k]["kind"], "pose-update");
    EXPECT_EQ(events[k]["seq"], k + 1);
    EXPECT_EQ(events[k]["session"], sid);
  }
}

TEST_F(ServerFixture, TwoClientsSeeTheSameStream) {
  FrameClient a = client();
  FrameClient b = client();
  std::vector<json> ea, eb;
  a.send({{"op", "subscribe"}, {"session", sid}});
  b.send({{"op", "subscribe"}, {"session", sid}});
  ASSERT_TRUE(a.recv_kind("reply", &ea));
  ASSERT_TRUE(b.recv_kind("reply", &eb));
  a.send({{"op", "step"}, {"session", sid}, {"count", 10}});
  ASSERT_TRUE(a.recv_kind("reply", &ea));
  b.send({{"op", "modify"}, {"session", sid}, {"mod", {{"op", "add"}, {"t", 15}, {"x", 7}, {"y", 4}, {"skills", {"violin"}}}}});
  auto mod_reply = b.recv_kind("reply", &eb);
  ASSERT_TRUE(mod_reply);
  EXPECT_EQ((*mod_reply)["accepted"], true);
  EXPECT_EQ((*mod_reply)["new_id"], 17);
  b.send({{"op", "step"}, {"session", sid}, {"count", 5}});
  ASSERT_TRUE(b.recv_kind("reply", &eb));
  while (auto f = a.recv(300)) ea.push_back(*f);
  while (auto f = b.recv(300)) eb.push_back(*f);
  EXPECT_EQ(ea, eb);
  ASSERT_FALSE(ea.empty());
  EXPECT_EQ(ea.front()["kind"], "snapshot");
  bool saw_stats = false;
  for (std::size_t k = 1; k < ea.size(); ++k) {
    EXPECT_EQ(ea[k]["seq"], k);
    saw_stats |= ea[k]["kind"] == "protocol-stats";
  }
  EXPECT_TRUE(saw_stats);
}

TEST_F(ServerFixture, GuardAndInfeasibleRejections) {
  FrameClient c = client();
  c.send({{"op", "step"}, {"session", sid}, {"count", 20}});
  ASSERT_TRUE(c.recv_kind("reply"));
  c.send({{"op", "modify"}, {"session", sid}, {"mod", {{"op", "add"}, {"t", 3}, {"x", 2}, {"y", 2}, {"skills", {"piano"}}}}});
  auto r = c.recv_kind("reply");
  ASSERT_TRUE(r);
  EXPECT_EQ((*r)["accepted"], false);
  EXPECT_EQ((*r)["reason"], "guard");
  c.send({{"op", "modify"}, {"session", sid}, {"mod", {{"op", "add"}, {"t", 18}, {"x", 1}, {"y", 1}, {"skills", {"piano"}}}}});
  r = c.recv_kind("reply");
  ASSERT_TRUE(r);
  EXPECT_EQ((*r)["reason"], "infeasible");
}

TEST_F(ServerFixture, ErrorFrames) {
  FrameClient c = client();
  c.send({{"op", "subscribe"}, {"session", "99"}, {"req", "x"}});
  auto e = c.recv();
  ASSERT_TRUE(e);
  EXPECT_EQ((*e)["kind"], "error");
  EXPECT_EQ((*e)["category"], "unknown-session");
  EXPECT_EQ((*e)["req"], "x");
  c.send_raw(encode_frame("not json"));
  e = c.recv();
  ASSERT_TRUE(e);
  EXPECT_EQ((*e)["category"], "malformed-frame");
  c.send({{"op", "dance"}, {"session", sid}});
  e = c.recv();
  ASSERT_TRUE(e);
  EXPECT_EQ((*e)["category"], "invalid-input");
  c.send({{"op", "modify"}, {"session", sid}, {"mod", {{"op", "remove"}}}});
  e = c.recv();
  ASSERT_TRUE(e);
  EXPECT_EQ((*e)["category"], "invalid-input");
  // The connection survives bad requests.
  c.send({{"op", "sessions"}});
  auto ok = c.recv();
  ASSERT_TRUE(ok);
  EXPECT_EQ((*ok)["sessions"], json::array({sid}));
}

TEST_F(ServerFixture, ClosedSessionRefusesSubscribers) {
  FrameClient c = client();
  c.send({{"op", "close"}, {"session", sid}});
  ASSERT_TRUE(c.recv_kind("reply"));
  c.send({{"op", "subscribe"}, {"session", sid}});
  auto e = c.recv();
  ASSERT_TRUE(e);
  EXPECT_EQ((*e)["kind"], "error");
  EXPECT_EQ((*e)["category"], "unknown-session");
}

TEST_F(ServerFixture, PlayTicksOnTheWallClock) {
  FrameClient c = client();
  c.send({{"op", "subscribe"}, {"session", sid}});
  ASSERT_TRUE(c.recv_kind("reply"));
  c.send({{"op", "play"}, {"session", sid}});
  std::vector<json> skipped;
  auto pose = c.recv_kind("pose-update", &skipped, 3000);
  ASSERT_TRUE(pose);
  c.send({{"op", "pause"}, {"session", sid}});
  ASSERT_TRUE(c.recv_kind("reply"));
  bool saw_transport = false;
  for (const json& f : skipped) saw_transport |= f["kind"] == "transport";
  EXPECT_TRUE(saw_transport);
}

TEST_F(ServerFixture, HttpHealthAndSnapshot) {
  httplib::Client http("127.0.0.1", server->http_port());
  auto health = http.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);
  EXPECT_EQ(json::parse(health->body)["status"], "ok");
  auto snap = http.Get("/sessions/" + sid + "/snapshot");
  ASSERT_TRUE(snap);
  EXPECT_EQ(snap->status, 200);
  const json s = json::parse(snap->body);
  EXPECT_EQ(s["kind"], "snapshot");
  EXPECT_EQ(s["floor"]["width"], 8);
  auto missing = http.Get("/sessions/77/snapshot");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST_F(ServerFixture, DisconnectUnsubscribes) {
  {
    FrameClient c = client();
    c.send({{"op", "subscribe"}, {"session", sid}});
    ASSERT_TRUE(c.recv_kind("reply"));
  }
  // Stepping after the client vanished must not block or crash.
  auto session = registry.get(sid);
  for (int k = 0; k < 50; ++k) session->step();
  EXPECT_EQ(session->now(), 5000);
}

TEST(ServerOptions, PortParsing) {
  EXPECT_EQ(ServerOptions::parse_port("8080"), 8080);
  EXPECT_EQ(ServerOptions::parse_port("-1"), -1);
  EXPECT_THROW(ServerOptions::parse_port("80x"), Error);
  EXPECT_THROW(ServerOptions::parse_port("70000"), Error);
}

}  // namespace
}  // namespace dhung
