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

#include "dhung/codec.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dhung/rng.hpp"

namespace dhung {
namespace {

using Bytes = std::vector<std::uint8_t>;

std::string to_hex(const Bytes& b) {
  std::string out;
  char buf[3];
  for (auto c : b) {
    std::snprintf(buf, sizeof buf, "%02x", c);
    out += buf;
  }
  return out;
}

std::vector<Edge> edges_from(const nlohmann::json& a) {
  std::vector<Edge> out;
  for (const auto& e : a) out.push_back({e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<Cost>()});
  return out;
}

// Any valid state: labels in int16 range, up to 2r - 1 edges.
WireMessage random_message(std::size_t r, SplitMix64& rng) {
  WireMessage m;
  m.sender = rng.uniform(r);
  m.state.counter = static_cast<std::int64_t>(rng.uniform(200)) - 1;
  m.state.labeling = VertexLabeling(r, r);
  for (auto* labels : {&m.state.labeling.robots, &m.state.labeling.targets})
    for (Cost& v : *labels) v = static_cast<Cost>(rng.uniform(65536)) - 32768;
  const std::size_t n = rng.uniform(2 * r);
  for (std::size_t e = 0; e < n; ++e) {
    Edge edge{rng.uniform(r), rng.uniform(r), static_cast<Cost>(rng.uniform(kBigM + 1))};
    (rng.bernoulli(0.5) ? m.state.lean.eq_edges : m.state.lean.cand_edges).push_back(edge);
  }
  return m;
}

WireMessage full_message(std::size_t r) {
  WireMessage m;
  m.state.counter = 5;
  m.state.labeling = VertexLabeling(r, r);
  for (std::size_t e = 0; e < 2 * r - 1; ++e)
    m.state.lean.eq_edges.push_back({e % r, (e * 7) % r, static_cast<Cost>(e)});
  return m;
}

TEST(Codec, GoldenVectorInline) {
  WireMessage m;
  m.sender = 2;
  m.state.counter = 3;
  m.state.labeling.robots = {5, -1, 0, 7};
  m.state.labeling.targets = {0, 2, 0, 0};
  m.state.lean.eq_edges = {{0, 1, 6}, {3, 3, 7}};
  m.state.lean.cand_edges = {{1, 2, 300}};
  const Bytes expected{0x02, 0x00, 0x02, 0x00, 0x01, 0x00,              // header
                       0x04,                                            // counter + 1
                       0x05, 0x00, 0xff, 0xff, 0x00, 0x00, 0x07, 0x00,  // robot labels
                       0x00, 0x00, 0x02, 0x00, 0x00, 0x00, 0x00, 0x00,  // target labels
                       0x01, 0x06, 0x00, 0x0f, 0x07, 0x00,              // tight edges
                       0x06, 0x2c, 0x01};                               // candidate
  EXPECT_EQ(encode_message(m, 4), expected);
}

TEST(Codec, GoldenVectorsFromData) {
  std::ifstream in(std::string(DHUNG_DATA_DIR) + "/codec/vectors.json");
  ASSERT_TRUE(in.good());
  const auto doc = nlohmann::json::parse(in);
  for (const auto& v : doc["vectors"]) {
    SCOPED_TRACE(v["name"].get<std::string>());
    const std::size_t r = v["r"];
    WireMessage m;
    m.sender = v["sender"];
    m.state.counter = v["counter"];
    m.state.labeling = VertexLabeling(r, r);
    if (v["robot_labels"].is_array()) m.state.labeling.robots = v["robot_labels"].get<std::vector<Cost>>();
    if (v["target_labels"].is_array()) m.state.labeling.targets = v["target_labels"].get<std::vector<Cost>>();
    m.state.lean.eq_edges = edges_from(v["eq_edges"]);
    m.state.lean.cand_edges = edges_from(v["cand_edges"]);
    const std::string hex = to_hex(encode_message(m, r));
    if (v.contains("hex")) {
      EXPECT_EQ(hex, v["hex"].get<std::string>());
    } else {
      const std::string pre = v["hex_prefix"], suf = v["hex_suffix"];
      EXPECT_EQ(hex.substr(0, pre.size()), pre);
      EXPECT_EQ(hex.substr(hex.size() - suf.size()), suf);
      EXPECT_EQ(hex.size(), 2 * (kFrameHeaderBytes + payload_bytes(r, 1)));
    }
    const WireMessage back = decode_message(encode_message(m, r), r);
    EXPECT_EQ(back.sender, m.sender);
    EXPECT_TRUE(back.state.same_wire_state(m.state));
  }
}

TEST(Codec, FullStatePayloadSizes) {
  for (const auto& [r, expected] : std::vector<std::pair<std::size_t, std::size_t>>{{4, 38}, {16, 158}, {64, 766}}) {
    const std::size_t formula = 2 * r * (4 + index_bytes(r)) - 2;
    EXPECT_EQ(formula, expected);
    EXPECT_EQ(full_state_payload_bytes(r), expected);
    EXPECT_EQ(encode_message(full_message(r), r).size() - kFrameHeaderBytes, expected);
  }
}

TEST(Codec, IndexWidthFollowsLogFormula) {
  // ceil(log2(r) / 4) bytes, at least one.
  for (std::size_t r = 1; r <= 70000; r = r < 40 ? r + 1 : r * 3 / 2) {
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < r) ++bits;
    EXPECT_EQ(index_bytes(r), std::max<std::size_t>(1, (bits + 3) / 4)) << r;
    EXPECT_LE(2 * index_bits(r), 8 * index_bytes(r)) << r;
  }
}

TEST(Codec, RoundTripRandomStates) {
  SplitMix64 rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::size_t r = 1 + rng.uniform(trial % 10 == 0 ? 300 : 20);
    const WireMessage m = random_message(r, rng);
    const Bytes bytes = encode_message(m, r);
    EXPECT_EQ(bytes.size(), kFrameHeaderBytes + payload_bytes(r, m.state.lean.size()));
    const WireMessage back = decode_message(bytes, r);
    ASSERT_EQ(back.sender, m.sender);
    ASSERT_TRUE(back.state.same_wire_state(m.state)) << "trial " << trial;
    EXPECT_EQ(encode_message(back, r), bytes);
  }
}

TEST(Codec, NeverLargerThanFullState) {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t r = 2 + rng.uniform(60);
    const WireMessage m = random_message(r, rng);
    EXPECT_LE(encode_message(m, r).size() - kFrameHeaderBytes, full_state_payload_bytes(r));
  }
}

TEST(Codec, DecodeErrors) {
  WireMessage m;
  m.state.labeling = VertexLabeling(3, 3);
  m.state.lean.eq_edges = {{1, 2, 5}};
  const Bytes good = encode_message(m, 3);

  auto expect_codec_error = [](const Bytes& b, std::size_t r, const std::string& what) {
    try {
      decode_message(b, r);
      FAIL() << "expected " << what;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kCodec);
      EXPECT_EQ(std::string(e.what()), what);
    }
  };
  expect_codec_error(Bytes(good.begin(), good.end() - 1), 3, "truncated buffer");
  expect_codec_error(Bytes(good.begin(), good.begin() + 3), 3, "truncated buffer");
  Bytes extra = good;
  extra.push_back(0);
  expect_codec_error(extra, 3, "trailing bytes");

  Bytes bad_index = good;
  bad_index[good.size() - 3] = 0x0f;  // robot 3 of 3
  expect_codec_error(bad_index, 3, "index out of range");

  Bytes heavy = good;
  heavy[good.size() - 1] = 0xff;
  heavy[good.size() - 2] = 0xff;
  expect_codec_error(heavy, 3, "weight exceeds BIG_M");
}

TEST(Codec, EncodeErrors) {
  WireMessage m = full_message(4);
  m.state.lean.cand_edges.push_back({0, 0, 1});
  EXPECT_THROW(encode_message(m, 4), Error);

  m = full_message(4);
  m.state.counter = 255;  // k = 1 stores counter + 1
  EXPECT_THROW(encode_message(m, 4), Error);
  m.state.counter = 254;
  EXPECT_NO_THROW(encode_message(m, 4));

  m = full_message(4);
  m.state.labeling.robots[0] = 40000;
  EXPECT_THROW(encode_message(m, 4), Error);

  m = full_message(4);
  m.sender = 4;
  EXPECT_THROW(encode_message(m, 4), Error);
}

}  // namespace
}  // namespace dhung
