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

#ifndef DHUNG_LSAP_HPP_
#define DHUNG_LSAP_HPP_

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhung/core.hpp"

namespace dhung {

/// Weighted bipartite graph over robots R = {0..n_robots} and targets
/// P = {0..n_targets}. Storage is dense; a missing pair is simply absent.
class BipartiteGraph {
 public:
  BipartiteGraph() = default;
  BipartiteGraph(std::size_t n_robots, std::size_t n_targets)
      : n_robots_(n_robots),
        n_targets_(n_targets),
        cells_(n_robots * n_targets, kAbsent) {}

  static BipartiteGraph from_edges(std::size_t n_robots, std::size_t n_targets,
                                   std::span<const Edge> edges) {
    BipartiteGraph g(n_robots, n_targets);
    for (const Edge& e : edges) g.add_edge(e.robot, e.target, e.weight);
    return g;
  }

  /// Complete graph from a row-major matrix (rows are robots).
  static BipartiteGraph from_matrix(const std::vector<std::vector<Cost>>& rows) {
    const std::size_t n_t = rows.empty() ? 0 : rows.front().size();
    BipartiteGraph g(rows.size(), n_t);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != n_t)
        throw Error(ErrorKind::kInvalidInput, "ragged cost matrix");
      for (std::size_t j = 0; j < n_t; ++j) g.add_edge(i, j, rows[i][j]);
    }
    return g;
  }

  void add_edge(std::size_t i, std::size_t j, Cost w) {
    if (i >= n_robots_ || j >= n_targets_)
      throw Error(ErrorKind::kInvalidInput, "edge index out of range");
    if (w < 0 || w > kBigM)
      throw Error(ErrorKind::kInvalidInput,
                  "weight " + std::to_string(w) + " outside [0, BIG_M]");
    Cost& cell = cells_[i * n_targets_ + j];
    if (cell != kAbsent)
      throw Error(ErrorKind::kInvalidInput, "duplicate edge (" + std::to_string(i) +
                                                "," + std::to_string(j) + ")");
    cell = w;
  }

  std::size_t n_robots() const { return n_robots_; }
  std::size_t n_targets() const { return n_targets_; }

  bool has_edge(std::size_t i, std::size_t j) const {
    return i < n_robots_ && j < n_targets_ && cells_[i * n_targets_ + j] != kAbsent;
  }

  Cost weight(std::size_t i, std::size_t j) const {
    if (!has_edge(i, j)) throw Error(ErrorKind::kNoSuchEdge, "no such edge");
    return cells_[i * n_targets_ + j];
  }

  std::size_t edge_count() const {
    return static_cast<std::size_t>(
        std::count_if(cells_.begin(), cells_.end(), [](Cost c) { return c != kAbsent; }));
  }

  bool is_square() const { return n_robots_ == n_targets_; }
  bool is_complete() const { return edge_count() == cells_.size(); }

  /// All edges in (robot, target) order.
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < n_robots_; ++i)
      for (std::size_t j = 0; j < n_targets_; ++j)
        if (Cost w = cells_[i * n_targets_ + j]; w != kAbsent) out.push_back({i, j, w});
    return out;
  }

  /// Largest weight strictly below BIG_M, or 0 when there is none.
  Cost max_finite_weight() const {
    Cost best = 0;
    for (Cost c : cells_)
      if (c != kAbsent && c < kBigM) best = std::max(best, c);
    return best;
  }

  bool contains_big_m() const {
    return std::find(cells_.begin(), cells_.end(), kBigM) != cells_.end();
  }

  friend bool operator==(const BipartiteGraph&, const BipartiteGraph&) = default;

 private:
  static constexpr Cost kAbsent = -1;

  std::size_t n_robots_ = 0;
  std::size_t n_targets_ = 0;
  std::vector<Cost> cells_;
};

/// Dual variables: one label per robot and one per target.
struct VertexLabeling {
  std::vector<Cost> robots;
  std::vector<Cost> targets;

  VertexLabeling() = default;
  VertexLabeling(std::size_t n_robots, std::size_t n_targets)
      : robots(n_robots, 0), targets(n_targets, 0) {}

  friend bool operator==(const VertexLabeling&, const VertexLabeling&) = default;
};

inline std::int64_t slack_of(Cost w, const VertexLabeling& y, std::size_t i, std::size_t j) {
  return std::int64_t{w} - y.robots[i] - y.targets[j];
}

/// w(i,j) - y(i) - y(j). Throws kNoSuchEdge for a pair missing from g.
inline std::int64_t slack(const BipartiteGraph& g, const VertexLabeling& y, std::size_t i,
                          std::size_t j) {
  return slack_of(g.weight(i, j), y, i, j);
}

inline bool is_feasible(const BipartiteGraph& g, const VertexLabeling& y) {
  for (const Edge& e : g.edges())
    if (slack_of(e.weight, y, e.robot, e.target) < 0) return false;
  return true;
}

/// Zero-slack edges of g under a feasible labeling.
inline std::vector<Edge> equality_subgraph(const BipartiteGraph& g, const VertexLabeling& y) {
  std::vector<Edge> out;
  for (const Edge& e : g.edges()) {
    const std::int64_t s = slack_of(e.weight, y, e.robot, e.target);
    if (s < 0) throw Error(ErrorKind::kLabelingInfeasible, "labeling infeasible");
    if (s == 0) out.push_back(e);
  }
  return out;
}

/// Maximum cardinality matching plus its König minimum vertex cover.
///
/// The cover is built from the alternating forest rooted at the unmatched
/// targets: Z holds every vertex reachable from an unmatched target by
/// walking target->robot on non-matching edges and robot->target on matching
/// edges. Then cover_r = R ∩ Z and cover_p = P \ Z. `forest` holds, for each
/// robot in Z, the non-matching edge that first reached it.
struct MatchingCover {
  std::vector<std::optional<std::size_t>> robot_mate;
  std::vector<std::optional<std::size_t>> target_mate;
  std::vector<bool> cover_r;
  std::vector<bool> cover_p;
  std::vector<Edge> forest;

  std::size_t size() const {
    return static_cast<std::size_t>(std::count_if(
        robot_mate.begin(), robot_mate.end(), [](const auto& m) { return m.has_value(); }));
  }
  std::size_t covered_robots() const {
    return static_cast<std::size_t>(std::count(cover_r.begin(), cover_r.end(), true));
  }
  std::size_t covered_targets() const {
    return static_cast<std::size_t>(std::count(cover_p.begin(), cover_p.end(), true));
  }
  bool is_perfect() const {
    return size() == robot_mate.size() && size() == target_mate.size();
  }

  /// Same matching and same cover; the forest is derived data.
  friend bool operator==(const MatchingCover& a, const MatchingCover& b) {
    return a.robot_mate == b.robot_mate && a.cover_r == b.cover_r && a.cover_p == b.cover_p;
  }
};

namespace detail {

using Adjacency = std::vector<std::vector<std::size_t>>;
using Mates = std::vector<std::optional<std::size_t>>;

inline bool try_augment(std::size_t robot, const Adjacency& adj, std::vector<char>& seen,
                        Mates& robot_mate, Mates& target_mate) {
  for (std::size_t j : adj[robot]) {
    if (seen[j]) continue;
    seen[j] = 1;
    if (!target_mate[j] || try_augment(*target_mate[j], adj, seen, robot_mate, target_mate)) {
      robot_mate[robot] = j;
      target_mate[j] = robot;
      return true;
    }
  }
  return false;
}

// Finds a new target for `robot` other than those already seen, where a
// target counts as open if it is free or equals `vacated`. Robots below
// `fixed_below` and `mover` are never displaced. Applies the path on success.
inline bool try_rematch(std::size_t robot, std::size_t vacated, std::size_t fixed_below,
                        std::size_t mover, const Adjacency& adj, std::vector<char>& seen,
                        Mates& robot_mate, Mates& target_mate) {
  for (std::size_t t : adj[robot]) {
    if (seen[t]) continue;
    seen[t] = 1;
    bool ok = !target_mate[t] || t == vacated;
    if (!ok) {
      const std::size_t owner = *target_mate[t];
      ok = owner >= fixed_below && owner != mover &&
           try_rematch(owner, vacated, fixed_below, mover, adj, seen, robot_mate, target_mate);
    }
    if (ok) {
      robot_mate[robot] = t;
      target_mate[t] = robot;
      return true;
    }
  }
  return false;
}

// Rewrites a maximum matching into the canonical one: same matched robot set
// (the greedy one Kuhn's ascending scan produces), then each matched robot,
// in ascending order, gets the smallest target any maximum matching on that
// robot set allows given the robots before it. The result is unchanged by
// deleting edges outside it.
inline void canonicalize(const Adjacency& adj, Mates& robot_mate, Mates& target_mate) {
  const std::size_t n_targets = target_mate.size();
  std::vector<char> seen(n_targets);
  for (std::size_t i = 0; i < adj.size(); ++i) {
    if (!robot_mate[i]) continue;
    const std::size_t current = *robot_mate[i];
    for (std::size_t j : adj[i]) {
      if (j >= current) break;
      std::fill(seen.begin(), seen.end(), 0);
      seen[j] = 1;
      seen[current] = 0;
      bool ok = !target_mate[j];
      if (!ok) {
        const std::size_t owner = *target_mate[j];
        if (owner < i) continue;
        ok = try_rematch(owner, current, i, i, adj, seen, robot_mate, target_mate);
      }
      if (ok) {
        if (target_mate[current] == i) target_mate[current] = std::nullopt;
        robot_mate[i] = j;
        target_mate[j] = i;
        break;
      }
    }
  }
}

}  // namespace detail

/// The matching is canonical for the edge set: Kuhn's ascending scan fixes
/// the matched robots, then mates are made lexicographically smallest. It
/// depends only on the set of (robot, target) pairs, and removing edges that
/// are not matched leaves it unchanged whenever the cardinality holds.
inline MatchingCover max_matching_and_cover(std::size_t n_robots, std::size_t n_targets,
                                            std::span<const Edge> edges) {
  std::vector<std::vector<std::size_t>> adj(n_robots);
  std::vector<std::vector<std::size_t>> radj(n_targets);
  for (const Edge& e : edges) {
    if (e.robot >= n_robots || e.target >= n_targets)
      throw Error(ErrorKind::kInvalidInput, "edge index out of range");
    adj[e.robot].push_back(e.target);
    radj[e.target].push_back(e.robot);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  for (auto& a : radj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }

  MatchingCover mc;
  mc.robot_mate.assign(n_robots, std::nullopt);
  mc.target_mate.assign(n_targets, std::nullopt);
  std::vector<char> seen(n_targets);
  for (std::size_t i = 0; i < n_robots; ++i) {
    std::fill(seen.begin(), seen.end(), 0);
    detail::try_augment(i, adj, seen, mc.robot_mate, mc.target_mate);
  }
  detail::canonicalize(adj, mc.robot_mate, mc.target_mate);

  // Alternating BFS from the unmatched targets.
  std::vector<char> in_z_r(n_robots, 0), in_z_p(n_targets, 0);
  std::vector<std::size_t> queue;
  for (std::size_t j = 0; j < n_targets; ++j)
    if (!mc.target_mate[j]) {
      in_z_p[j] = 1;
      queue.push_back(j);
    }
  for (std::size_t head = 0; head < queue.size(); ++head) {
    const std::size_t j = queue[head];
    for (std::size_t i : radj[j]) {
      if (in_z_r[i] || mc.robot_mate[i] == j) continue;
      in_z_r[i] = 1;
      mc.forest.push_back({i, j, 0});
      if (!mc.robot_mate[i])
        throw Error(ErrorKind::kInternal, "augmenting path left after matching");
      const std::size_t next = *mc.robot_mate[i];
      if (!in_z_p[next]) {
        in_z_p[next] = 1;
        queue.push_back(next);
      }
    }
  }
  mc.cover_r.assign(n_robots, false);
  mc.cover_p.assign(n_targets, false);
  for (std::size_t i = 0; i < n_robots; ++i) mc.cover_r[i] = in_z_r[i] != 0;
  for (std::size_t j = 0; j < n_targets; ++j) mc.cover_p[j] = in_z_p[j] == 0;
  std::sort(mc.forest.begin(), mc.forest.end());
  return mc;
}

/// Robot -> target assignment with its total cost.
struct Assignment {
  std::vector<std::size_t> target_of;
  std::int64_t cost = 0;

  friend bool operator==(const Assignment&, const Assignment&) = default;
};

inline std::int64_t assignment_cost(const BipartiteGraph& g, std::span<const std::size_t> target_of) {
  std::int64_t total = 0;
  for (std::size_t i = 0; i < target_of.size(); ++i) total += g.weight(i, target_of[i]);
  return total;
}

/// Snapshot handed to a `hungarian` observer after initialization
/// (iteration 0) and after every two-step iteration.
struct HungarianIteration {
  std::size_t iteration = 0;
  const VertexLabeling& labeling;
  const std::vector<Edge>& equality_edges;
  const MatchingCover& matching;
};

struct HungarianResult {
  Assignment assignment;
  VertexLabeling labeling;
  std::size_t iterations = 0;
};

/// Primal-dual Hungarian method on a square, complete graph. Candidate
/// selection picks the lowest target index among minimum-slack uncovered
/// targets, so the run is fully deterministic.
inline HungarianResult hungarian(
    const BipartiteGraph& g,
    const std::function<void(const HungarianIteration&)>& observer = {}) {
  if (!g.is_square() || !g.is_complete())
    throw Error(ErrorKind::kGraphNotNormalized, "graph not normalized");
  const std::size_t n = g.n_robots();

  VertexLabeling y(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    Cost lo = kBigM;
    for (std::size_t j = 0; j < n; ++j) lo = std::min(lo, g.weight(i, j));
    y.robots[i] = lo;
  }
  std::vector<Edge> eq = equality_subgraph(g, y);
  MatchingCover mc = max_matching_and_cover(n, n, eq);
  std::size_t iterations = 0;
  if (observer) observer({iterations, y, eq, mc});

  while (!mc.is_perfect()) {
    // Step 1(a) + 1(b): the minimum over all uncovered pairs equals the
    // minimum over the per-robot candidates.
    std::int64_t delta = std::numeric_limits<std::int64_t>::max();
    for (std::size_t i = 0; i < n; ++i) {
      if (mc.cover_r[i]) continue;
      for (std::size_t j = 0; j < n; ++j)
        if (!mc.cover_p[j]) delta = std::min(delta, slack(g, y, i, j));
    }
    for (std::size_t i = 0; i < n; ++i)
      if (mc.cover_r[i]) y.robots[i] = static_cast<Cost>(y.robots[i] - delta);
    for (std::size_t j = 0; j < n; ++j)
      if (!mc.cover_p[j]) y.targets[j] = static_cast<Cost>(y.targets[j] + delta);

    // Step 2.
    eq = equality_subgraph(g, y);
    mc = max_matching_and_cover(n, n, eq);
    ++iterations;
    if (observer) observer({iterations, y, eq, mc});
  }

  HungarianResult out;
  out.assignment.target_of.resize(n);
  for (std::size_t i = 0; i < n; ++i) out.assignment.target_of[i] = *mc.robot_mate[i];
  out.assignment.cost = assignment_cost(g, out.assignment.target_of);
  out.labeling = std::move(y);
  out.iterations = iterations;
  return out;
}

/// Square, complete graph from partial costs: absent pairs get BIG_M and
/// each missing target column is a zero-weight dummy.
inline BipartiteGraph balance_and_complete(std::span<const Edge> costs, std::size_t n_robots,
                                           std::size_t n_targets) {
  if (n_robots < n_targets)
    throw Error(ErrorKind::kMoreTargetsThanRobots, "more targets than robots");
  const BipartiteGraph partial = BipartiteGraph::from_edges(n_robots, n_targets, costs);
  BipartiteGraph g(n_robots, n_robots);
  for (std::size_t i = 0; i < n_robots; ++i)
    for (std::size_t j = 0; j < n_robots; ++j) {
      if (j >= n_targets)
        g.add_edge(i, j, 0);
      else
        g.add_edge(i, j, partial.has_edge(i, j) ? partial.weight(i, j) : kBigM);
    }
  return g;
}

inline constexpr std::size_t kOracleMaxSize = 10;

/// Exhaustive minimum over all permutations; ties resolve to the
/// lexicographically first permutation.
inline Assignment brute_force_lsap(const BipartiteGraph& g) {
  if (!g.is_square() || !g.is_complete())
    throw Error(ErrorKind::kGraphNotNormalized, "graph not normalized");
  const std::size_t n = g.n_robots();
  if (n > kOracleMaxSize) throw Error(ErrorKind::kOracleSizeLimit, "oracle size limit");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Assignment best{perm, assignment_cost(g, perm)};
  while (std::next_permutation(perm.begin(), perm.end())) {
    const std::int64_t c = assignment_cost(g, perm);
    if (c < best.cost) best = {perm, c};
  }
  return best;
}

}  // namespace dhung

#endif  // DHUNG_LSAP_HPP_
