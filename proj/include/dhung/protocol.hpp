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

#ifndef DHUNG_PROTOCOL_HPP_
#define DHUNG_PROTOCOL_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "dhung/core.hpp"
#include "dhung/lsap.hpp"

namespace dhung {

/// A robot's private row of the centralized cost matrix. Targets the robot
/// cannot serve carry BIG_M.
struct OriginalInfo {
  std::size_t robot_id = 0;
  std::vector<Cost> weights;
};

inline OriginalInfo original_info(const BipartiteGraph& g, std::size_t robot) {
  OriginalInfo info{robot, std::vector<Cost>(g.n_targets())};
  for (std::size_t j = 0; j < g.n_targets(); ++j) info.weights[j] = g.weight(robot, j);
  return info;
}

/// Sparse state graph: tight edges plus staged candidate edges. Both lists
/// are kept sorted and duplicate free.
struct LeanGraph {
  std::vector<Edge> eq_edges;
  std::vector<Edge> cand_edges;

  std::size_t size() const { return eq_edges.size() + cand_edges.size(); }

  friend bool operator==(const LeanGraph&, const LeanGraph&) = default;
};

/// Per-robot protocol state. Everything but `hold_remaining` goes on the
/// wire; `hold_remaining` counts the messages the robot will still send
/// after it first holds a perfect matching.
struct RobotState {
  LeanGraph lean;
  VertexLabeling labeling;
  std::int64_t counter = -1;
  std::optional<std::int64_t> hold_remaining;

  /// Equality of the transmitted part of the state.
  bool same_wire_state(const RobotState& o) const {
    return lean == o.lean && labeling == o.labeling && counter == o.counter;
  }

  friend bool operator==(const RobotState&, const RobotState&) = default;
};

struct WireMessage {
  std::size_t sender = 0;
  RobotState state;
};

/// Tunables shared by every robot in a run.
struct ProtocolParams {
  std::size_t r = 0;
  /// Messages sent after first holding a perfect matching. r - 1 under
  /// per-round strong connectivity; (r - 1) * T_c in jointly-connected mode.
  std::int64_t hold_rounds = 0;

  static ProtocolParams for_robots(std::size_t r, std::size_t window = 1) {
    return {r, static_cast<std::int64_t>((r == 0 ? 0 : r - 1) * window)};
  }
};

namespace detail {

inline void sort_unique(std::vector<Edge>& edges) {
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
}

[[noreturn]] inline void violation(const std::string& what) {
  throw Error(ErrorKind::kProtocolViolation, what);
}

}  // namespace detail

/// Initial state: the robot's minimum-weight edge (lowest target on ties) is
/// its only tight edge and fixes its own label.
inline RobotState init_state(const OriginalInfo& orig) {
  const std::size_t r = orig.weights.size();
  if (orig.robot_id >= r) throw Error(ErrorKind::kInvalidInput, "robot id out of range");
  const auto best = std::min_element(orig.weights.begin(), orig.weights.end());
  const auto j = static_cast<std::size_t>(best - orig.weights.begin());
  RobotState s;
  s.lean.eq_edges = {{orig.robot_id, j, *best}};
  s.labeling = VertexLabeling(r, r);
  s.labeling.robots[orig.robot_id] = *best;
  s.counter = -1;
  return s;
}

/// Merges the robot's own state with the states received this round.
///
/// All counters -1: union of the initial edges, each robot's label taken
/// from its edge, promotion to counter 0 once every robot is represented.
/// Otherwise the leading states (highest counter) must agree on labeling and
/// tight edges; the result adopts them and unions their candidate edges.
inline RobotState build_latest_graph(const WireMessage& self, std::span<const WireMessage> inbox,
                                     std::size_t r) {
  std::int64_t lead = self.state.counter;
  for (const WireMessage& m : inbox) lead = std::max(lead, m.state.counter);

  RobotState out;
  out.hold_remaining = self.state.hold_remaining;

  if (lead == -1) {
    out.counter = -1;
    out.labeling = VertexLabeling(r, r);
    std::vector<char> seen(r, 0);
    auto absorb = [&](const RobotState& s) {
      for (const Edge& e : s.lean.eq_edges) {
        if (e.robot >= r || e.target >= r) detail::violation("edge index out of range");
        if (seen[e.robot] && out.labeling.robots[e.robot] != e.weight)
          detail::violation("conflicting initial edges for robot " + std::to_string(e.robot));
        seen[e.robot] = 1;
        out.labeling.robots[e.robot] = e.weight;
        out.lean.eq_edges.push_back(e);
      }
    };
    absorb(self.state);
    for (const WireMessage& m : inbox) absorb(m.state);
    detail::sort_unique(out.lean.eq_edges);
    if (out.lean.eq_edges.size() > r) detail::violation("robot owns two initial edges");
    if (out.lean.eq_edges.size() == r) out.counter = 0;
    return out;
  }

  // Deterministic representative: the leading state with the lowest sender.
  const WireMessage* chosen = nullptr;
  auto consider = [&](const WireMessage& m) {
    if (m.state.counter != lead) return;
    if (chosen == nullptr || m.sender < chosen->sender) chosen = &m;
  };
  consider(self);
  for (const WireMessage& m : inbox) consider(m);

  out.counter = lead;
  out.labeling = chosen->state.labeling;
  out.lean.eq_edges = chosen->state.lean.eq_edges;
  auto merge = [&](const WireMessage& m) {
    if (m.state.counter != lead) return;
    if (m.state.labeling != out.labeling || m.state.lean.eq_edges != out.lean.eq_edges)
      detail::violation("states with counter " + std::to_string(lead) + " disagree");
    out.lean.cand_edges.insert(out.lean.cand_edges.end(), m.state.lean.cand_edges.begin(),
                               m.state.lean.cand_edges.end());
  };
  merge(self);
  for (const WireMessage& m : inbox) merge(m);
  detail::sort_unique(out.lean.cand_edges);
  return out;
}

/// Minimum-slack edge from this robot to an uncovered target (lowest target
/// on ties); nothing when the robot is covered or every target is.
inline std::optional<Edge> get_best_edge(const OriginalInfo& orig, const VertexLabeling& y,
                                         const MatchingCover& cover) {
  const std::size_t i = orig.robot_id;
  if (cover.cover_r[i]) return std::nullopt;
  std::optional<Edge> best;
  std::int64_t best_slack = 0;
  for (std::size_t j = 0; j < orig.weights.size(); ++j) {
    if (cover.cover_p[j]) continue;
    const std::int64_t s = slack_of(orig.weights[j], y, i, j);
    if (!best || s < best_slack) {
      best = Edge{i, j, orig.weights[j]};
      best_slack = s;
    }
  }
  return best;
}

/// Smallest tight-edge set that reproduces `mc`: the matched edges plus the
/// alternating forest. At most |M| + |R_c| edges.
inline std::vector<Edge> reduce_edge_set(std::span<const Edge> eq_edges, const MatchingCover& mc,
                                         std::size_t r) {
  std::vector<Edge> kept;
  for (const Edge& e : eq_edges) {
    const bool matched = mc.robot_mate[e.robot] == e.target;
    const bool in_forest = std::binary_search(
        mc.forest.begin(), mc.forest.end(), e,
        [](const Edge& a, const Edge& b) {
          return std::tie(a.robot, a.target) < std::tie(b.robot, b.target);
        });
    if (matched || in_forest) kept.push_back(e);
  }
  detail::sort_unique(kept);
  if (max_matching_and_cover(r, r, kept) != mc)
    throw Error(ErrorKind::kInternal, "pruned edge set changes matching or cover");
  if (kept.size() > std::max<std::size_t>(2 * r - 2, r))
    throw Error(ErrorKind::kInternal, "pruned edge set too large");
  return kept;
}

/// One round of local computation on a merged state with counter >= 0.
///
/// Stages this robot's candidate edge; once every uncovered robot has one,
/// performs the dual update and equality-edge refresh, bumps the counter and
/// restarts candidate collection. The tight edges are pruned on every call,
/// which keeps the lean graph within 2r - 1 edges.
inline RobotState local_hungarian(RobotState tmp, const OriginalInfo& orig,
                                  const ProtocolParams& params) {
  const std::size_t r = params.r;
  if (tmp.counter < 0) detail::violation("local_hungarian needs counter >= 0");

  MatchingCover mc = max_matching_and_cover(r, r, tmp.lean.eq_edges);
  if (mc.is_perfect()) {
    tmp.lean.cand_edges.clear();
    tmp.lean.eq_edges = reduce_edge_set(tmp.lean.eq_edges, mc, r);
    if (!tmp.hold_remaining) tmp.hold_remaining = params.hold_rounds;
    return tmp;
  }

  if (auto e = get_best_edge(orig, tmp.labeling, mc)) {
    tmp.lean.cand_edges.push_back(*e);
    detail::sort_unique(tmp.lean.cand_edges);
  }

  const std::size_t uncovered = r - mc.covered_robots();
  if (tmp.lean.cand_edges.size() > uncovered) detail::violation("more candidates than uncovered robots");
  if (tmp.lean.cand_edges.size() < uncovered) {
    tmp.lean.eq_edges = reduce_edge_set(tmp.lean.eq_edges, mc, r);
    return tmp;
  }

  // Step 1(b).
  std::int64_t delta = std::numeric_limits<std::int64_t>::max();
  for (const Edge& e : tmp.lean.cand_edges) {
    if (mc.cover_r[e.robot] || mc.cover_p[e.target]) detail::violation("candidate edge touches cover");
    delta = std::min(delta, slack_of(e.weight, tmp.labeling, e.robot, e.target));
  }
  if (delta < 0) detail::violation("negative slack on candidate edge");
  VertexLabeling& y = tmp.labeling;
  for (std::size_t i = 0; i < r; ++i)
    if (mc.cover_r[i]) y.robots[i] = static_cast<Cost>(y.robots[i] - delta);
  for (std::size_t j = 0; j < r; ++j)
    if (!mc.cover_p[j]) y.targets[j] = static_cast<Cost>(y.targets[j] + delta);

  // Step 2, restricted to the edges this robot knows about.
  std::vector<Edge> next_eq;
  for (const auto* list : {&tmp.lean.eq_edges, &tmp.lean.cand_edges})
    for (const Edge& e : *list) {
      const std::int64_t s = slack_of(e.weight, y, e.robot, e.target);
      if (s < 0) detail::violation("negative slack after label update");
      if (s == 0) next_eq.push_back(e);
    }
  detail::sort_unique(next_eq);
  mc = max_matching_and_cover(r, r, next_eq);
  ++tmp.counter;

  tmp.lean.cand_edges.clear();
  if (!mc.is_perfect())
    if (auto e = get_best_edge(orig, y, mc)) tmp.lean.cand_edges.push_back(*e);
  tmp.lean.eq_edges = reduce_edge_set(next_eq, mc, r);
  if (mc.is_perfect() && !tmp.hold_remaining) tmp.hold_remaining = params.hold_rounds;
  return tmp;
}

struct StepResult {
  RobotState state;
  std::optional<WireMessage> outgoing;
};

/// One synchronous round for one robot: parse, compute, then send unless
/// the post-solution hold has run out.
inline StepResult step(const WireMessage& self, std::span<const WireMessage> inbox,
                       const OriginalInfo& orig, const ProtocolParams& params) {
  RobotState next = build_latest_graph(self, inbox, params.r);
  if (next.counter >= 0) next = local_hungarian(std::move(next), orig, params);

  StepResult out;
  bool send = true;
  if (next.hold_remaining) {
    send = *next.hold_remaining > 0;
    if (send) --*next.hold_remaining;
  }
  out.state = std::move(next);
  if (send) out.outgoing = WireMessage{self.sender, out.state};
  return out;
}

/// The matching a robot currently holds (from its tight edges).
inline MatchingCover held_matching(const RobotState& s, std::size_t r) {
  return max_matching_and_cover(r, r, s.lean.eq_edges);
}

}  // namespace dhung

#endif  // DHUNG_PROTOCOL_HPP_
