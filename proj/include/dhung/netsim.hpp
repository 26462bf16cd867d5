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

#ifndef DHUNG_NETSIM_HPP_
#define DHUNG_NETSIM_HPP_

#include <algorithm>
#include <chrono>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dhung/codec.hpp"
#include "dhung/core.hpp"
#include "dhung/lsap.hpp"
#include "dhung/protocol.hpp"
#include "dhung/rng.hpp"

namespace dhung {

enum class NetworkMode { kStrong, kJointly };

/// Time-varying directed communication graph among r robots.
struct RoundNetwork {
  std::size_t r = 0;
  NetworkMode mode = NetworkMode::kStrong;
  /// T_c: every window of this many consecutive rounds has a strongly
  /// connected union. Ignored in strong mode.
  std::size_t window = 1;
  std::uint64_t seed = 0;
  /// Probability q of each non-cycle arc being present.
  double extra_edge_prob = 0.5;

  std::size_t effective_window() const { return mode == NetworkMode::kJointly ? window : 1; }
};

/// Directed arc `from -> to`: `to` receives what `from` sends.
struct Arc {
  std::size_t from = 0;
  std::size_t to = 0;

  friend bool operator==(const Arc&, const Arc&) = default;
  friend auto operator<=>(const Arc&, const Arc&) = default;
};

using Digraph = std::vector<Arc>;

namespace detail {

// Random Hamiltonian cycle plus independent extra arcs, keyed by `key`.
inline Digraph strong_digraph(const RoundNetwork& net, std::uint64_t key) {
  const std::size_t r = net.r;
  SplitMix64 rng = derive_stream(net.seed, {0x6e6574ULL, key});
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  for (std::size_t i = r; i > 1; --i) std::swap(perm[i - 1], perm[rng.uniform(i)]);

  std::vector<char> on_cycle(r * r, 0);
  Digraph arcs;
  for (std::size_t k = 0; k < r; ++k) {
    const Arc a{perm[k], perm[(k + 1) % r]};
    if (!on_cycle[a.from * r + a.to]) arcs.push_back(a);
    on_cycle[a.from * r + a.to] = 1;
  }
  for (std::size_t u = 0; u < r; ++u)
    for (std::size_t v = 0; v < r; ++v)
      if (u != v && !on_cycle[u * r + v] && rng.bernoulli(net.extra_edge_prob))
        arcs.push_back({u, v});
  std::sort(arcs.begin(), arcs.end());
  return arcs;
}

// The arcs of block `block`'s strong digraph that fall in slot `slot`. Arcs
// are shuffled and dealt round-robin over the T_c slots.
inline Digraph block_slice(const RoundNetwork& net, std::uint64_t block, std::size_t slot) {
  Digraph arcs = strong_digraph(net, block);
  SplitMix64 rng = derive_stream(net.seed, {0x736c6f74ULL, block});
  for (std::size_t i = arcs.size(); i > 1; --i) std::swap(arcs[i - 1], arcs[rng.uniform(i)]);
  Digraph out;
  for (std::size_t k = slot; k < arcs.size(); k += net.window) out.push_back(arcs[k]);
  return out;
}

}  // namespace detail

/// Communication graph of round t (0-based). Deterministic in (seed, t).
///
/// Strong mode: a fresh Hamiltonian cycle plus extra arcs each round.
/// Jointly mode with window T: round t = b*T + s carries slot s of block b's
/// strong digraph and slot s of block b+1's, so any T consecutive rounds
/// contain every arc of some block's strong digraph.
inline Digraph generate_round(const RoundNetwork& net, std::uint64_t t) {
  if (net.r < 2) throw Error(ErrorKind::kInvalidInput, "network needs at least 2 robots");
  if (net.mode == NetworkMode::kStrong || net.window <= 1) return detail::strong_digraph(net, t);

  const std::uint64_t block = t / net.window;
  const auto slot = static_cast<std::size_t>(t % net.window);
  Digraph arcs = detail::block_slice(net, block, slot);
  Digraph next = detail::block_slice(net, block + 1, slot);
  arcs.insert(arcs.end(), next.begin(), next.end());
  std::sort(arcs.begin(), arcs.end());
  arcs.erase(std::unique(arcs.begin(), arcs.end()), arcs.end());
  return arcs;
}

inline bool check_strong_connectivity(std::span<const Arc> arcs, std::size_t r) {
  if (r <= 1) return true;
  std::vector<std::vector<std::size_t>> fwd(r), bwd(r);
  for (const Arc& a : arcs) {
    if (a.from >= r || a.to >= r) throw Error(ErrorKind::kInvalidInput, "arc out of range");
    fwd[a.from].push_back(a.to);
    bwd[a.to].push_back(a.from);
  }
  auto reaches_all = [r](const std::vector<std::vector<std::size_t>>& adj) {
    std::vector<char> seen(r, 0);
    std::vector<std::size_t> stack{0};
    seen[0] = 1;
    std::size_t count = 1;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      for (std::size_t v : adj[u])
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          stack.push_back(v);
        }
    }
    return count == r;
  };
  return reaches_all(fwd) && reaches_all(bwd);
}

/// Rounds until a datum held by `source` at round `start` reaches every
/// robot when each informed robot forwards it to its out-neighbours every
/// round. Returns nullopt if `limit` rounds are not enough.
inline std::optional<std::size_t> flood_rounds(const RoundNetwork& net, std::size_t source,
                                               std::uint64_t start = 0, std::size_t limit = 0) {
  std::vector<char> informed(net.r, 0);
  informed[source] = 1;
  std::size_t count = 1;
  if (limit == 0) limit = net.r * net.r * net.effective_window() + 1;
  for (std::size_t k = 0; count < net.r; ++k) {
    if (k >= limit) return std::nullopt;
    std::vector<char> next = informed;
    for (const Arc& a : generate_round(net, start + k))
      if (informed[a.from] && !next[a.to]) {
        next[a.to] = 1;
        ++count;
      }
    informed = std::move(next);
    if (count == net.r) return k + 1;
  }
  return 0;
}

/// One line of the per-robot trace.
struct TraceRecord {
  std::size_t round = 0;
  std::size_t robot = 0;
  std::int64_t counter = -1;
  std::size_t matching_size = 0;
  std::size_t covered_robots = 0;
  std::size_t bytes_sent = 0;
};

struct RunMetrics {
  std::size_t r = 0;
  /// T_f: first round after which every robot holds the common solution.
  std::size_t rounds_to_convergence = 0;
  /// Rounds until no robot sends anything.
  std::size_t rounds_total = 0;
  std::vector<std::size_t> bytes_per_round;
  std::size_t messages_sent = 0;
  std::size_t max_payload_bytes = 0;
  /// Worst single robot step, in microseconds.
  double max_step_micros = 0.0;
  std::int64_t final_counter = 0;
  Assignment assignment;
  bool infeasible = false;
  std::size_t first_perfect_round = 0;
  std::size_t first_perfect_robot = 0;
  /// Messages the first solver sent from the round it found the solution on.
  std::size_t first_perfect_messages = 0;
  std::size_t invariant_checks = 0;
};

struct RunOptions {
  bool check_invariants = false;
  std::function<void(const TraceRecord&)> trace;
  /// Called after every round with all robot states.
  std::function<void(std::size_t round, std::span<const RobotState>)> on_round;
};

namespace detail {

// Per-round checks of the protocol's structural guarantees against the full
// cost matrix. Throws kProtocolViolation on the first failure.
class InvariantMonitor {
 public:
  InvariantMonitor(const BipartiteGraph& g, std::size_t r)
      : g_(g), r_(r), last_counter_(r, -1) {}

  void observe(std::size_t robot, const RobotState& s, const MatchingCover& mc) {
    ++checks_;
    if (!is_feasible(g_, s.labeling)) fail(robot, "labeling infeasible for the full cost matrix");
    if (s.counter < last_counter_[robot]) fail(robot, "counter decreased");
    last_counter_[robot] = s.counter;
    if (s.counter < 0) return;
    if (s.lean.size() > 2 * r_ - 1) fail(robot, "lean graph exceeds 2r-1 edges");

    auto [it, fresh] = seen_.try_emplace(s.counter, Snapshot{s.labeling, s.lean.eq_edges, mc});
    if (!fresh) {
      const Snapshot& ref = it->second;
      if (ref.labeling != s.labeling || ref.eq_edges != s.lean.eq_edges)
        fail(robot, "equal counters with different labeling or tight edges");
      if (ref.matching.robot_mate != mc.robot_mate) fail(robot, "equal counters with different matchings");
      return;
    }
    for (const auto& [counter, other] : seen_) {
      if (counter == s.counter) continue;
      const auto& hi = counter > s.counter ? other.matching : mc;
      const auto& lo = counter > s.counter ? mc : other.matching;
      const bool bigger = hi.size() > lo.size();
      const bool same_more_covered =
          hi.size() == lo.size() && hi.covered_robots() > lo.covered_robots();
      if (!bigger && !same_more_covered) fail(robot, "higher counter without progress");
    }
  }

  std::size_t checks() const { return checks_; }

 private:
  struct Snapshot {
    VertexLabeling labeling;
    std::vector<Edge> eq_edges;
    MatchingCover matching;
  };

  [[noreturn]] static void fail(std::size_t robot, const std::string& what) {
    throw Error(ErrorKind::kProtocolViolation, "robot " + std::to_string(robot) + ": " + what);
  }

  const BipartiteGraph& g_;
  std::size_t r_;
  std::vector<std::int64_t> last_counter_;
  std::map<std::int64_t, Snapshot> seen_;
  std::size_t checks_ = 0;
};

}  // namespace detail

/// Runs the distributed protocol round by round until no robot sends.
///
/// Each round delivers last round's messages along that round's arcs, then
/// steps every robot on its inbox. Messages travel through the wire codec.
/// More than 2 * T_c * r^3 rounds is reported as kNontermination.
inline RunMetrics run_protocol(const BipartiteGraph& g, const RoundNetwork& net,
                               const RunOptions& options = {}) {
  if (!g.is_square() || !g.is_complete())
    throw Error(ErrorKind::kGraphNotNormalized, "graph not normalized");
  const std::size_t r = g.n_robots();
  if (r == 0) throw Error(ErrorKind::kInvalidInput, "empty instance");
  if (r >= 2 && net.r != r) throw Error(ErrorKind::kInvalidInput, "network size does not match instance");
  const std::size_t window = net.effective_window();
  const ProtocolParams params = ProtocolParams::for_robots(r, window);
  const std::size_t budget = 2 * window * r * r * r;

  std::vector<OriginalInfo> origs;
  std::vector<RobotState> states;
  std::vector<std::optional<WireMessage>> outbox(r);
  for (std::size_t i = 0; i < r; ++i) {
    origs.push_back(original_info(g, i));
    states.push_back(init_state(origs.back()));
    outbox[i] = WireMessage{i, states.back()};
  }

  std::optional<detail::InvariantMonitor> monitor;
  if (options.check_invariants) monitor.emplace(g, r);

  RunMetrics m;
  m.r = r;
  std::vector<char> holds(r, 0);
  bool any_perfect = false;

  for (std::size_t round = 1;; ++round) {
    if (std::none_of(outbox.begin(), outbox.end(), [](const auto& o) { return o.has_value(); })) break;
    if (round > budget)
      throw Error(ErrorKind::kNontermination, "no termination within " + std::to_string(budget) + " rounds");

    // Deliver: encode each sent message once, decode once, fan out.
    std::vector<std::optional<WireMessage>> delivered(r);
    std::vector<std::size_t> sent_bytes(r, 0);
    std::size_t round_bytes = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (!outbox[i]) continue;
      const auto bytes = encode_message(*outbox[i], r);
      sent_bytes[i] = bytes.size();
      round_bytes += bytes.size();
      m.max_payload_bytes = std::max(m.max_payload_bytes, bytes.size() - kFrameHeaderBytes);
      ++m.messages_sent;
      delivered[i] = decode_message(bytes, r);
      if (monitor && !delivered[i]->state.same_wire_state(outbox[i]->state))
        throw Error(ErrorKind::kInternal, "codec round trip changed a message");
    }
    m.bytes_per_round.push_back(round_bytes);

    std::vector<std::vector<WireMessage>> inbox(r);
    if (r >= 2)
      for (const Arc& a : generate_round(net, round - 1))
        if (delivered[a.from]) inbox[a.to].push_back(*delivered[a.from]);

    // Step: every robot reads the same snapshot.
    std::vector<std::optional<WireMessage>> next_outbox(r);
    for (std::size_t i = 0; i < r; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      StepResult res = step(WireMessage{i, states[i]}, inbox[i], origs[i], params);
      const auto t1 = std::chrono::steady_clock::now();
      m.max_step_micros = std::max(
          m.max_step_micros, std::chrono::duration<double, std::micro>(t1 - t0).count());
      states[i] = std::move(res.state);
      next_outbox[i] = std::move(res.outgoing);
    }
    outbox = std::move(next_outbox);

    bool all_hold = true;
    std::optional<std::size_t> new_first;
    for (std::size_t i = 0; i < r; ++i) {
      const MatchingCover mc = held_matching(states[i], r);
      if (monitor) monitor->observe(i, states[i], mc);
      const bool perfect = states[i].counter >= 0 && mc.is_perfect();
      if (perfect && !holds[i] && !any_perfect && !new_first) new_first = i;
      holds[i] = perfect ? 1 : 0;
      all_hold = all_hold && perfect;
      if (options.trace)
        options.trace({round, i, states[i].counter, mc.size(), mc.covered_robots(),
                       outbox[i] ? payload_bytes(r, outbox[i]->state.lean.size()) + kFrameHeaderBytes : 0});
    }
    if (new_first) {
      any_perfect = true;
      m.first_perfect_round = round;
      m.first_perfect_robot = *new_first;
    }
    if (any_perfect && outbox[m.first_perfect_robot]) ++m.first_perfect_messages;
    if (all_hold && m.rounds_to_convergence == 0) m.rounds_to_convergence = round;
    if (options.on_round) options.on_round(round, states);
    m.rounds_total = round;
  }
  const MatchingCover common = held_matching(states[0], r);
  for (std::size_t i = 0; i < r; ++i) {
    if (!holds[i]) throw Error(ErrorKind::kInternal, "robot stopped without a perfect matching");
    if (held_matching(states[i], r).robot_mate != common.robot_mate)
      throw Error(ErrorKind::kProtocolViolation, "robots disagree on the final matching");
  }
  m.final_counter = states[0].counter;
  m.assignment.target_of.resize(r);
  for (std::size_t i = 0; i < r; ++i) m.assignment.target_of[i] = *common.robot_mate[i];
  m.assignment.cost = assignment_cost(g, m.assignment.target_of);
  for (std::size_t i = 0; i < r; ++i)
    if (g.weight(i, m.assignment.target_of[i]) == kBigM) m.infeasible = true;
  if (monitor) m.invariant_checks = monitor->checks();
  return m;
}

/// Square instance with integer costs uniform in [lo, hi], in wire units.
inline BipartiteGraph random_instance(std::size_t r, std::uint64_t seed, Cost lo = 1, Cost hi = 999) {
  SplitMix64 rng = derive_stream(seed, {0x696e7374ULL, r});
  BipartiteGraph g(r, r);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < r; ++j)
      g.add_edge(i, j, lo + static_cast<Cost>(rng.uniform(static_cast<std::uint64_t>(hi - lo + 1))));
  return g;
}

}  // namespace dhung

#endif  // DHUNG_NETSIM_HPP_
