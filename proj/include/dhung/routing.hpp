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

#ifndef DHUNG_ROUTING_HPP_
#define DHUNG_ROUTING_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dhung/core.hpp"
#include "dhung/lsap.hpp"
#include "dhung/netsim.hpp"
#include "dhung/rng.hpp"

namespace dhung {

/// Simulation time in milliseconds. One millisecond is the time tolerance.
using TimeMs = std::int64_t;

struct Point {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Point&, const Point&) = default;
};

inline double distance(Point a, Point b) {
  const double dx = a.x - b.x, dy = a.y - b.y;
  return std::sqrt(dx * dx + dy * dy);
}

/// Sorted, duplicate-free skill tags.
using SkillSet = std::vector<std::string>;

inline SkillSet make_skills(std::vector<std::string> tags) {
  std::sort(tags.begin(), tags.end());
  tags.erase(std::unique(tags.begin(), tags.end()), tags.end());
  return tags;
}

inline bool skills_intersect(const SkillSet& a, const SkillSet& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) ++i; else ++j;
  }
  return false;
}

struct TimedPosition {
  std::size_t id = 0;
  Point position;
  TimeMs time = 0;
  SkillSet skills;

  friend bool operator==(const TimedPosition&, const TimedPosition&) = default;
};

struct Instant {
  TimeMs time = 0;
  std::vector<TimedPosition> positions;  // ascending id

  friend bool operator==(const Instant&, const Instant&) = default;
};

struct Score {
  std::vector<Instant> instants;  // strictly increasing time
  std::size_t next_id = 0;

  const TimedPosition* find(std::size_t id) const {
    for (const Instant& in : instants)
      for (const TimedPosition& p : in.positions)
        if (p.id == id) return &p;
    return nullptr;
  }

  friend bool operator==(const Score&, const Score&) = default;
};

struct Floor {
  double width = 8.0;
  double height = 8.0;

  bool contains(Point p) const { return p.x >= 0 && p.y >= 0 && p.x <= width && p.y <= height; }
  double diagonal() const { return std::sqrt(width * width + height * height); }
};

struct RobotProfile {
  std::size_t id = 0;
  SkillSet skills;
  Point pose;
  double speed = 1.0;  // floor units per second
};

struct RoutingConfig {
  Floor floor;
  /// Minimum gap between instants; also the modification guard band.
  TimeMs delta_min = 2000;
  /// Fixed-point units per floor unit for distance costs.
  std::int64_t scale = 100;
  double eps_pos = 0.01;
  /// Network used for every per-instant run; each instant derives its own
  /// seed from `network.seed`.
  RoundNetwork network;

  TimeMs guard() const { return delta_min; }
};

inline void validate_robots(std::span<const RobotProfile> robots, const RoutingConfig& cfg) {
  for (std::size_t k = 0; k < robots.size(); ++k) {
    const RobotProfile& r = robots[k];
    if (r.id != k) throw Error(ErrorKind::kInvalidInput, "robot ids must be 0..n-1 in order");
    if (r.skills.empty()) throw Error(ErrorKind::kInvalidInput, "robot " + std::to_string(k) + " has no skills");
    if (!(r.speed > 0)) throw Error(ErrorKind::kInvalidInput, "robot " + std::to_string(k) + " speed must be positive");
    if (!cfg.floor.contains(r.pose)) throw Error(ErrorKind::kInvalidInput, "robot " + std::to_string(k) + " is off the floor");
  }
  const double bound = static_cast<double>(robots.size()) * cfg.floor.diagonal() * static_cast<double>(cfg.scale);
  if (bound >= kBigM)
    throw Error(ErrorKind::kInvalidInput,
                "robots * floor diagonal * scale must stay below BIG_M; lower the scale");
}

/// Checks ordering, spacing, floor bounds and skill sets.
inline void validate_score(const Score& score, const RoutingConfig& cfg) {
  for (std::size_t k = 0; k < score.instants.size(); ++k) {
    const Instant& in = score.instants[k];
    if (in.time < 0) throw Error(ErrorKind::kInvalidInput, "negative instant time");
    if (in.positions.empty()) throw Error(ErrorKind::kInvalidInput, "empty instant");
    if (k > 0 && in.time - score.instants[k - 1].time < cfg.delta_min)
      throw Error(ErrorKind::kInvalidInput, "instants closer than the minimum gap");
    for (const TimedPosition& p : in.positions) {
      if (p.time != in.time) throw Error(ErrorKind::kInvalidInput, "position time differs from its instant");
      if (p.skills.empty()) throw Error(ErrorKind::kInvalidInput, "timed position without skills");
      if (!cfg.floor.contains(p.position)) throw Error(ErrorKind::kInvalidInput, "timed position off the floor");
      if (p.id >= score.next_id) throw Error(ErrorKind::kInvalidInput, "position id not below next_id");
    }
  }
}

/// Groups loose timed positions into instants and numbers them.
inline Score make_score(std::vector<TimedPosition> positions, const RoutingConfig& cfg) {
  std::stable_sort(positions.begin(), positions.end(),
                   [](const TimedPosition& a, const TimedPosition& b) { return a.time < b.time; });
  Score s;
  for (TimedPosition& p : positions) {
    p.id = s.next_id++;
    p.skills = make_skills(std::move(p.skills));
    if (s.instants.empty() || s.instants.back().time != p.time) s.instants.push_back({p.time, {}});
    s.instants.back().positions.push_back(std::move(p));
  }
  validate_score(s, cfg);
  return s;
}

inline Cost distance_cost(Point a, Point b, std::int64_t scale) {
  const double v = std::floor(distance(a, b) * static_cast<double>(scale) + 0.5);
  if (v >= kBigM) throw Error(ErrorKind::kInvalidInput, "distance cost does not fit below BIG_M");
  return static_cast<Cost>(v);
}

/// One interval's LSAP: rows are robots (at their `pose`), columns are the
/// requests followed by zero-cost idle columns. Skill-incompatible pairs
/// cost BIG_M.
inline BipartiteGraph interval_lsap(std::span<const RobotProfile> robots,
                                    std::span<const TimedPosition> requests, std::int64_t scale) {
  if (robots.size() < requests.size())
    throw Error(ErrorKind::kInfeasible, "infeasible interval: " + std::to_string(requests.size()) +
                                            " requests for " + std::to_string(robots.size()) + " robots");
  const std::size_t n = robots.size();
  BipartiteGraph g(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      if (j >= requests.size())
        g.add_edge(i, j, 0);
      else if (!skills_intersect(robots[i].skills, requests[j].skills))
        g.add_edge(i, j, kBigM);
      else
        g.add_edge(i, j, distance_cost(robots[i].pose, requests[j].position, scale));
    }
  if (g.contains_big_m() && static_cast<std::int64_t>(n) * g.max_finite_weight() >= kBigM)
    throw Error(ErrorKind::kInvalidInput, "BIG_M must exceed r * max_cost; lower the scale");
  return g;
}

/// Outcome of the distributed run for one instant.
struct IntervalRecord {
  TimeMs time = 0;
  std::vector<std::size_t> robots;    // robot ids, one per LSAP row
  std::vector<std::size_t> requests;  // position ids, one per non-idle column
  BipartiteGraph lsap;
  Assignment assignment;
  std::size_t rounds = 0;
  std::size_t messages = 0;
  std::size_t bytes = 0;
  /// Set when this record was produced by a replan rather than inherited.
  bool solved_now = true;
};

struct PlannedInstant {
  TimeMs time = 0;
  /// Position id served by each robot, nullopt when idle.
  std::vector<std::optional<std::size_t>> request_of;
  IntervalRecord interval;
};

struct RoutePlan {
  std::vector<PlannedInstant> instants;
  /// Instants at or before this time can no longer be modified.
  TimeMs lock_boundary = -1;

  const PlannedInstant* at(TimeMs t) const {
    for (const PlannedInstant& p : instants)
      if (p.time == t) return &p;
    return nullptr;
  }
};

/// Where a robot resumes planning after a modification: either after
/// keeping its committed route through `keep_until`, or from `pose` now.
struct ReplanStart {
  std::size_t robot = 0;
  std::optional<TimeMs> keep_until;
  Point pose;

  friend bool operator==(const ReplanStart&, const ReplanStart&) = default;
};

namespace detail {

inline IntervalRecord solve_interval(TimeMs time, std::span<const RobotProfile> robots,
                                     std::span<const TimedPosition> requests, const RoutingConfig& cfg) {
  IntervalRecord rec;
  rec.time = time;
  for (const RobotProfile& r : robots) rec.robots.push_back(r.id);
  for (const TimedPosition& p : requests) rec.requests.push_back(p.id);
  rec.lsap = interval_lsap(robots, requests, cfg.scale);
  const std::size_t n = robots.size();
  if (n == 0) return rec;
  RoundNetwork net = cfg.network;
  net.r = n;
  net.seed = derive_stream(cfg.network.seed, {0x726f757465ULL, static_cast<std::uint64_t>(time)}).next();
  const RunMetrics m = run_protocol(rec.lsap, net);
  if (m.infeasible)
    throw Error(ErrorKind::kInfeasible, "infeasible interval at t=" + std::to_string(time) +
                                            " ms: no skill-compatible assignment");
  rec.assignment = m.assignment;
  rec.rounds = m.rounds_to_convergence;
  rec.messages = m.messages_sent;
  for (std::size_t b : m.bytes_per_round) rec.bytes += b;
  return rec;
}

}  // namespace detail

/// Builds a plan for `score`. Instants at or before `now` are copied from
/// `previous`. Later instants are solved in order; a robot whose start says
/// `keep_until` keeps its previous assignment at every instant up to that
/// time and is only free to be re-assigned afterwards.
inline RoutePlan build_plan(const Score& score, std::span<const RobotProfile> robots,
                            const RoutingConfig& cfg, const RoutePlan* previous, TimeMs now,
                            std::span<const ReplanStart> starts) {
  const std::size_t n = robots.size();
  std::vector<Point> pose(n);
  std::vector<std::optional<TimeMs>> keep(n);
  for (std::size_t p = 0; p < n; ++p) pose[p] = robots[p].pose;
  for (const ReplanStart& s : starts) {
    pose[s.robot] = s.pose;
    keep[s.robot] = s.keep_until;
  }

  RoutePlan plan;
  plan.lock_boundary = previous ? previous->lock_boundary : -1;
  for (const Instant& in : score.instants) {
    const PlannedInstant* old = previous ? previous->at(in.time) : nullptr;
    if (in.time <= now) {
      if (!old) throw Error(ErrorKind::kInternal, "past instant missing from previous plan");
      PlannedInstant copy = *old;
      copy.interval.solved_now = false;
      plan.instants.push_back(std::move(copy));
      continue;
    }

    PlannedInstant out;
    out.time = in.time;
    out.request_of.assign(n, std::nullopt);
    std::vector<char> served(in.positions.size(), 0);
    std::vector<RobotProfile> free;
    for (std::size_t p = 0; p < n; ++p) {
      if (keep[p] && in.time <= *keep[p]) {
        if (!old) throw Error(ErrorKind::kInternal, "kept instant missing from previous plan");
        out.request_of[p] = old->request_of[p];
        if (out.request_of[p]) {
          const auto it = std::find_if(in.positions.begin(), in.positions.end(),
                                       [&](const TimedPosition& tp) { return tp.id == *out.request_of[p]; });
          if (it == in.positions.end()) throw Error(ErrorKind::kInternal, "kept request vanished");
          served[static_cast<std::size_t>(it - in.positions.begin())] = 1;
        }
        continue;
      }
      RobotProfile r = robots[p];
      r.pose = pose[p];
      free.push_back(std::move(r));
    }
    std::vector<TimedPosition> open;
    for (std::size_t k = 0; k < in.positions.size(); ++k)
      if (!served[k]) open.push_back(in.positions[k]);

    out.interval = detail::solve_interval(in.time, free, open, cfg);
    out.interval.solved_now = !free.empty();
    for (std::size_t row = 0; row < free.size(); ++row) {
      const std::size_t col = out.interval.assignment.target_of[row];
      if (col < open.size()) out.request_of[free[row].id] = open[col].id;
    }
    for (std::size_t p = 0; p < n; ++p)
      if (out.request_of[p]) pose[p] = score.find(*out.request_of[p])->position;
    plan.instants.push_back(std::move(out));
  }
  return plan;
}

inline RoutePlan plan_routes(const Score& score, std::span<const RobotProfile> robots,
                             const RoutingConfig& cfg) {
  validate_robots(robots, cfg);
  validate_score(score, cfg);
  return build_plan(score, robots, cfg, nullptr, -1, {});
}

/// Every request served by exactly one skill-compatible robot, every robot
/// serving at most one request per instant. Returns a description of the
/// first violation, or an empty string.
inline std::string check_plan(const RoutePlan& plan, const Score& score,
                              std::span<const RobotProfile> robots) {
  if (plan.instants.size() != score.instants.size()) return "plan and score differ in instants";
  for (std::size_t k = 0; k < score.instants.size(); ++k) {
    const Instant& in = score.instants[k];
    const PlannedInstant& pi = plan.instants[k];
    if (pi.time != in.time) return "instant times differ";
    if (pi.request_of.size() != robots.size()) return "assignment size differs from robot count";
    for (const TimedPosition& tp : in.positions) {
      std::size_t count = 0;
      for (std::size_t p = 0; p < robots.size(); ++p)
        if (pi.request_of[p] == tp.id) {
          ++count;
          if (!skills_intersect(robots[p].skills, tp.skills))
            return "robot " + std::to_string(p) + " lacks the skill for position " + std::to_string(tp.id);
        }
      if (count != 1) return "position " + std::to_string(tp.id) + " served " + std::to_string(count) + " times";
    }
    for (std::size_t p = 0; p < robots.size(); ++p)
      if (pi.request_of[p] &&
          std::none_of(in.positions.begin(), in.positions.end(),
                       [&](const TimedPosition& tp) { return tp.id == *pi.request_of[p]; }))
        return "robot " + std::to_string(p) + " assigned to a position outside its instant";
  }
  return {};
}

/// A live change to the score.
struct Modification {
  enum class Kind { kAdd, kRemove, kSwitchSkill };
  Kind kind = Kind::kAdd;
  TimeMs time = 0;                  // add
  Point position;                   // add
  SkillSet skills;                  // add, switch-skill
  std::optional<std::size_t> id;    // remove, switch-skill
};

inline std::string_view to_string(Modification::Kind k) {
  switch (k) {
    case Modification::Kind::kAdd: return "add";
    case Modification::Kind::kRemove: return "remove";
    case Modification::Kind::kSwitchSkill: return "switch-skill";
  }
  return "?";
}

struct ModificationOutcome {
  bool accepted = false;
  /// "guard", "infeasible" or "invalid" when rejected.
  std::string reason;
  std::string detail;
  TimeMs affected_time = 0;
  Score score;
  std::vector<ReplanStart> starts;
  std::optional<std::size_t> new_id;
};

/// Time of the robot's first serving (non-idle) waypoint after `now`.
inline std::optional<TimeMs> next_committed(const RoutePlan& plan, std::size_t robot, TimeMs now) {
  for (const PlannedInstant& pi : plan.instants)
    if (pi.time > now && pi.request_of[robot]) return pi.time;
  return std::nullopt;
}

/// Validates `mod` against the guard band and the score rules and computes
/// the updated score plus each robot's replan start. Feasibility of the
/// resulting plan is checked by the caller's replan.
inline ModificationOutcome apply_modification(const RoutePlan& plan, const Score& score,
                                              const Modification& mod, TimeMs now,
                                              std::span<const Point> poses, const RoutingConfig& cfg) {
  ModificationOutcome out;
  auto reject = [&](std::string reason, std::string detail) {
    out.accepted = false;
    out.reason = std::move(reason);
    out.detail = std::move(detail);
    return out;
  };

  Score next = score;
  switch (mod.kind) {
    case Modification::Kind::kAdd: {
      out.affected_time = mod.time;
      if (mod.skills.empty()) return reject("invalid", "added position needs a skill");
      if (!cfg.floor.contains(mod.position)) return reject("invalid", "position off the floor");
      break;
    }
    case Modification::Kind::kRemove:
    case Modification::Kind::kSwitchSkill: {
      const TimedPosition* tp = mod.id ? score.find(*mod.id) : nullptr;
      if (!tp) return reject("invalid", "no timed position with that id");
      out.affected_time = tp->time;
      if (mod.kind == Modification::Kind::kSwitchSkill && mod.skills.empty())
        return reject("invalid", "switch-skill needs a skill");
      break;
    }
  }
  if (out.affected_time < now + cfg.guard())
    return reject("guard", "instant " + std::to_string(out.affected_time) + " ms is inside the guard band ending at " +
                               std::to_string(now + cfg.guard()) + " ms");

  if (mod.kind == Modification::Kind::kAdd) {
    TimedPosition tp{next.next_id++, mod.position, mod.time, make_skills(mod.skills)};
    out.new_id = tp.id;
    auto it = std::lower_bound(next.instants.begin(), next.instants.end(), mod.time,
                               [](const Instant& in, TimeMs t) { return in.time < t; });
    if (it != next.instants.end() && it->time == mod.time) {
      it->positions.push_back(std::move(tp));
    } else {
      next.instants.insert(it, Instant{mod.time, {std::move(tp)}});
    }
  } else {
    for (auto it = next.instants.begin(); it != next.instants.end(); ++it) {
      auto& ps = it->positions;
      auto pos = std::find_if(ps.begin(), ps.end(), [&](const TimedPosition& p) { return p.id == *mod.id; });
      if (pos == ps.end()) continue;
      if (mod.kind == Modification::Kind::kRemove) {
        ps.erase(pos);
        if (ps.empty()) next.instants.erase(it);
      } else {
        pos->skills = make_skills(mod.skills);
      }
      break;
    }
  }
  try {
    validate_score(next, cfg);
  } catch (const Error& e) {
    return reject("invalid", e.what());
  }

  for (std::size_t p = 0; p < poses.size(); ++p) {
    ReplanStart s{p, std::nullopt, poses[p]};
    const auto committed = next_committed(plan, p, now);
    if (committed && *committed < out.affected_time) s.keep_until = committed;
    out.starts.push_back(s);
  }
  out.accepted = true;
  out.score = std::move(next);
  return out;
}

/// Robot motion and note events over a plan.
struct RoutingEvent {
  enum class Kind { kNoteFired, kLateArrival };
  Kind kind = Kind::kNoteFired;
  TimeMs time = 0;
  std::size_t robot = 0;
  std::size_t request = 0;
  Point position;
  double miss = 0.0;  // distance still to go for late arrivals
};

/// Owns the score, the plan and the robots' poses on one timeline.
class RoutingSimulation {
 public:
  RoutingSimulation(Score score, std::vector<RobotProfile> robots, RoutingConfig cfg)
      : score_(std::move(score)), robots_(std::move(robots)), cfg_(std::move(cfg)) {
    plan_ = plan_routes(score_, robots_, cfg_);
    for (const RobotProfile& r : robots_) poses_.push_back(r.pose);
    update_lock();
  }

  TimeMs now() const { return now_; }
  const Score& score() const { return score_; }
  const RoutePlan& plan() const { return plan_; }
  const std::vector<RobotProfile>& robots() const { return robots_; }
  const RoutingConfig& config() const { return cfg_; }
  const std::vector<Point>& poses() const { return poses_; }

  /// Moves every robot toward its next serving waypoint at constant speed
  /// for `dt` ms, firing notes (or late-arrival warnings) at each instant.
  std::vector<RoutingEvent> advance(TimeMs dt) {
    if (dt < 0) throw Error(ErrorKind::kInvalidInput, "negative time step");
    std::vector<RoutingEvent> events;
    const TimeMs end = now_ + dt;
    while (now_ < end) {
      TimeMs stop = end;
      const PlannedInstant* due = nullptr;
      for (const PlannedInstant& pi : plan_.instants)
        if (pi.time > now_) {
          if (pi.time <= end) {
            stop = pi.time;
            due = &pi;
          }
          break;
        }
      move_all(stop - now_);
      now_ = stop;
      if (due) fire(*due, events);
    }
    update_lock();
    return events;
  }

  /// Applies `mod` if it passes the guard, score and feasibility checks;
  /// on success the plan is rebuilt from each robot's replan start.
  ModificationOutcome modify(const Modification& mod) {
    ModificationOutcome out = apply_modification(plan_, score_, mod, now_, poses_, cfg_);
    if (!out.accepted) return out;
    try {
      RoutePlan next = build_plan(out.score, robots_, cfg_, &plan_, now_, out.starts);
      score_ = out.score;
      plan_ = std::move(next);
      update_lock();
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInfeasible) throw;
      out.accepted = false;
      out.reason = "infeasible";
      out.detail = e.what();
    }
    return out;
  }

 private:
  const PlannedInstant* next_target(std::size_t robot) const {
    for (const PlannedInstant& pi : plan_.instants)
      if (pi.time > now_ && pi.request_of[robot]) return &pi;
    return nullptr;
  }

  void move_all(TimeMs dt) {
    if (dt <= 0) return;
    for (std::size_t p = 0; p < robots_.size(); ++p) {
      const PlannedInstant* pi = next_target(p);
      if (!pi) continue;
      const Point goal = score_.find(*pi->request_of[p])->position;
      const double d = distance(poses_[p], goal);
      const double step = robots_[p].speed * static_cast<double>(dt) / 1000.0;
      if (d <= step) {
        poses_[p] = goal;
      } else {
        poses_[p].x += (goal.x - poses_[p].x) * step / d;
        poses_[p].y += (goal.y - poses_[p].y) * step / d;
      }
    }
  }

  void fire(const PlannedInstant& pi, std::vector<RoutingEvent>& events) const {
    for (std::size_t p = 0; p < robots_.size(); ++p) {
      if (!pi.request_of[p]) continue;
      const TimedPosition& tp = *score_.find(*pi.request_of[p]);
      const double miss = distance(poses_[p], tp.position);
      const bool hit = miss <= cfg_.eps_pos;
      events.push_back({hit ? RoutingEvent::Kind::kNoteFired : RoutingEvent::Kind::kLateArrival, pi.time, p,
                        tp.id, tp.position, hit ? 0.0 : miss});
    }
  }

  void update_lock() {
    plan_.lock_boundary = -1;
    for (const PlannedInstant& pi : plan_.instants)
      if (pi.time < now_ + cfg_.guard()) plan_.lock_boundary = pi.time;
  }

  Score score_;
  std::vector<RobotProfile> robots_;
  RoutingConfig cfg_;
  RoutePlan plan_;
  std::vector<Point> poses_;
  TimeMs now_ = 0;
};

}  // namespace dhung

#endif  // DHUNG_ROUTING_HPP_
