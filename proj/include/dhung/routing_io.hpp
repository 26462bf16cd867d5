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

#ifndef DHUNG_ROUTING_IO_HPP_
#define DHUNG_ROUTING_IO_HPP_

#include <string>
#include <vector>

#include <json.hpp>

#include "dhung/core.hpp"
#include "dhung/instance_io.hpp"
#include "dhung/routing.hpp"

namespace dhung {

using nlohmann::json;

/// Seconds (JSON number or decimal string) to milliseconds, exactly.
inline TimeMs seconds_to_ms(const json& v) {
  if (!v.is_number() && !v.is_string()) throw Error(ErrorKind::kInvalidInput, "time must be a number of seconds");
  return scale_decimal(v.is_string() ? v.get<std::string>() : v.dump(), 1000);
}

inline json ms_to_json(TimeMs t) { return static_cast<double>(t) / 1000.0; }

inline json point_json(Point p) { return json::array({p.x, p.y}); }

namespace detail {

template <typename F>
auto guarded(const char* what, F&& f) {
  try {
    return f();
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::kInvalidInput, std::string(what) + ": " + ex.what());
  }
}

inline SkillSet skills_from(const json& v) {
  if (v.is_string()) return {v.get<std::string>()};
  return make_skills(v.get<std::vector<std::string>>());
}

}  // namespace detail

/// Everything a routing run needs besides the score.
struct RoutingSetup {
  RoutingConfig config;
  std::vector<RobotProfile> robots;
  TimeMs tick = 100;
};

/// {"floor": {"width", "height"}, "delta_min": s, "scale": n, "eps_pos": d,
///  "tick": s, "network": {"mode", "window", "q", "seed"},
///  "robots": [{"x", "y", "skills", "speed"}]}
inline RoutingSetup parse_setup(const json& doc) {
  return detail::guarded("robots config", [&] {
    RoutingSetup s;
    RoutingConfig& c = s.config;
    if (doc.contains("floor")) {
      c.floor.width = doc["floor"].at("width").get<double>();
      c.floor.height = doc["floor"].at("height").get<double>();
    }
    if (doc.contains("delta_min")) c.delta_min = seconds_to_ms(doc["delta_min"]);
    c.scale = doc.value("scale", c.scale);
    c.eps_pos = doc.value("eps_pos", c.eps_pos);
    if (doc.contains("tick")) s.tick = seconds_to_ms(doc["tick"]);
    if (s.tick <= 0) throw Error(ErrorKind::kInvalidInput, "tick must be positive");
    if (c.delta_min <= 0) throw Error(ErrorKind::kInvalidInput, "delta_min must be positive");
    if (doc.contains("network")) {
      const json& n = doc["network"];
      const std::string mode = n.value("mode", std::string("strong"));
      if (mode != "strong" && mode != "jointly") throw Error(ErrorKind::kInvalidInput, "network mode must be strong or jointly");
      c.network.mode = mode == "strong" ? NetworkMode::kStrong : NetworkMode::kJointly;
      c.network.window = n.value("window", std::size_t{1});
      c.network.extra_edge_prob = n.value("q", c.network.extra_edge_prob);
      c.network.seed = n.value("seed", std::uint64_t{0});
    }
    if (doc.contains("seed")) c.network.seed = doc["seed"].get<std::uint64_t>();
    std::size_t id = 0;
    for (const json& r : doc.at("robots")) {
      RobotProfile p;
      p.id = id++;
      p.pose = {r.at("x").get<double>(), r.at("y").get<double>()};
      p.skills = detail::skills_from(r.at("skills"));
      p.speed = r.value("speed", 1.0);
      s.robots.push_back(std::move(p));
    }
    validate_robots(s.robots, c);
    return s;
  });
}

/// A list of {"t", "x", "y", "skills"}, bare or under "positions".
inline Score parse_score(const json& doc, const RoutingConfig& cfg) {
  return detail::guarded("score", [&] {
    const json& list = doc.is_object() ? doc.at("positions") : doc;
    std::vector<TimedPosition> ps;
    for (const json& e : list)
      ps.push_back({0, {e.at("x").get<double>(), e.at("y").get<double>()}, seconds_to_ms(e.at("t")),
                    detail::skills_from(e.at("skills"))});
    return make_score(std::move(ps), cfg);
  });
}

/// {"op": "add", "t", "x", "y", "skills"} | {"op": "remove", "id"} |
/// {"op": "switch-skill", "id", "skills"}
inline Modification parse_modification(const json& doc) {
  return detail::guarded("modification", [&] {
    Modification m;
    const std::string op = doc.at("op").get<std::string>();
    if (op == "add") {
      m.kind = Modification::Kind::kAdd;
      m.time = seconds_to_ms(doc.at("t"));
      m.position = {doc.at("x").get<double>(), doc.at("y").get<double>()};
      m.skills = detail::skills_from(doc.at("skills"));
    } else if (op == "remove") {
      m.kind = Modification::Kind::kRemove;
      m.id = doc.at("id").get<std::size_t>();
    } else if (op == "switch-skill") {
      m.kind = Modification::Kind::kSwitchSkill;
      m.id = doc.at("id").get<std::size_t>();
      m.skills = detail::skills_from(doc.at("skills"));
    } else {
      throw Error(ErrorKind::kInvalidInput, "unknown modification op '" + op + "'");
    }
    return m;
  });
}

inline json modification_json(const Modification& m) {
  json j{{"op", std::string(to_string(m.kind))}};
  if (m.kind == Modification::Kind::kAdd) {
    j["t"] = ms_to_json(m.time);
    j["x"] = m.position.x;
    j["y"] = m.position.y;
  }
  if (m.id) j["id"] = *m.id;
  if (m.kind != Modification::Kind::kRemove) j["skills"] = m.skills;
  return j;
}

/// One scripted modification, submitted once the clock reaches `at`.
struct ScriptedModification {
  TimeMs at = 0;
  Modification mod;
  std::string label;
};

/// {"events": [{"at": s, "label": "...", "op": ..., ...}]} or a bare list.
/// Returned in time order (stable for equal times).
inline std::vector<ScriptedModification> parse_script(const json& doc) {
  return detail::guarded("modification script", [&] {
    const json& list = doc.is_object() ? doc.at("events") : doc;
    std::vector<ScriptedModification> out;
    for (const json& e : list) out.push_back({seconds_to_ms(e.at("at")), parse_modification(e), e.value("label", std::string())});
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.at < b.at; });
    return out;
  });
}

inline json position_json(const TimedPosition& p) {
  return {{"id", p.id}, {"t", ms_to_json(p.time)}, {"x", p.position.x}, {"y", p.position.y}, {"skills", p.skills}};
}

inline json score_json(const Score& s) {
  json list = json::array();
  for (const Instant& in : s.instants)
    for (const TimedPosition& p : in.positions) list.push_back(position_json(p));
  return list;
}

inline json plan_json(const RoutePlan& plan) {
  json list = json::array();
  for (const PlannedInstant& pi : plan.instants) {
    json a = json::array();
    for (const auto& r : pi.request_of) a.push_back(r ? json(*r) : json(nullptr));
    list.push_back({{"t", ms_to_json(pi.time)}, {"assignment", a}, {"cost", pi.interval.assignment.cost}});
  }
  return list;
}

inline json replan_json(const ReplanStart& s) {
  json j{{"robot", s.robot}};
  if (s.keep_until) {
    j["from"] = "kept-waypoint";
    j["keep_until"] = ms_to_json(*s.keep_until);
  } else {
    j["from"] = "current-pose";
    j["pose"] = point_json(s.pose);
  }
  return j;
}

}  // namespace dhung

#endif  // DHUNG_ROUTING_IO_HPP_
