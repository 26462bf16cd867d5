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

// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any fails. All comparisons of costs are exact.

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dhung/codec.hpp"
#include "dhung/instance_io.hpp"
#include "dhung/lsap.hpp"
#include "dhung/netsim.hpp"
#include "dhung/protocol.hpp"
#include "dhung/routing.hpp"
#include "dhung/routing_io.hpp"
#include "dhung/session.hpp"

namespace {

using namespace dhung;

const std::string kData = DHUNG_DATA_DIR;
const std::string kCli = DHUNG_CLI_PATH;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS " : "FAIL ") << name << " | " << detail << std::endl;
  if (!ok) ++failures;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Independent minimum-cost oracle: exhaustive search over permutations.
std::int64_t permutation_optimum(const BipartiteGraph& g) {
  const std::size_t r = g.n_robots();
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::int64_t best = INT64_MAX;
  do {
    std::int64_t c = 0;
    for (std::size_t i = 0; i < r; ++i) c += g.weight(i, perm[i]);
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Everything one distributed run tells us, observed from outside.
struct Observed {
  RunMetrics m;
  bool agree = true;
  bool matches_assignment = true;
  std::size_t all_hold_round = 0;  // first round all robots hold a perfect matching
};

Observed observe(const BipartiteGraph& g, const RoundNetwork& net, bool check) {
  Observed o;
  const std::size_t r = g.n_robots();
  std::vector<RobotState> last;
  RunOptions opts;
  opts.check_invariants = check;
  opts.on_round = [&](std::size_t round, std::span<const RobotState> states) {
    last.assign(states.begin(), states.end());
    if (o.all_hold_round) return;
    for (const RobotState& s : states)
      if (!held_matching(s, r).is_perfect()) return;
    o.all_hold_round = round;
  };
  o.m = run_protocol(g, net, opts);
  const auto common = held_matching(last[0], r).robot_mate;
  for (const RobotState& s : last) o.agree = o.agree && held_matching(s, r).robot_mate == common;
  for (std::size_t i = 0; i < r; ++i)
    o.matches_assignment = o.matches_assignment && common[i] && *common[i] == o.m.assignment.target_of[i];
  return o;
}

struct StopTally {
  std::size_t runs = 0, bad_messages = 0, late = 0;
  void add(const Observed& o, std::size_t r) {
    ++runs;
    if (r < 2) return;
    if (o.m.first_perfect_messages != r - 1) ++bad_messages;
    if (o.all_hold_round > o.m.first_perfect_round + r - 1) ++late;
  }
};

int run_cli(const std::string& args, std::string& out) {
  FILE* p = ::popen((kCli + " " + args + " 2>/dev/null").c_str(), "r");
  if (!p) return -1;
  std::array<char, 4096> buf;
  out.clear();
  while (std::size_t n = std::fread(buf.data(), 1, buf.size(), p)) out.append(buf.data(), n);
  const int status = ::pclose(p);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

int main() {
  StopTally stop;
  std::size_t invariant_runs = 0, invariant_checks = 0;
  std::string invariant_error;

  // Oracle optimality and agreement over 1000 small instances.
  {
    const auto t0 = std::chrono::steady_clock::now();
    std::size_t mismatched = 0, disagreed = 0;
    for (std::size_t k = 0; k < 1000; ++k) {
      const std::size_t r = 2 + k % 7;
      const std::uint64_t seed = derive_stream(0xacce55, {k}).next();
      const BipartiteGraph g = random_instance(r, seed);
      Observed o;
      try {
        o = observe(g, {r, NetworkMode::kStrong, 1, seed, 0.5}, true);
      } catch (const Error& e) {
        invariant_error = e.what();
        ++mismatched;
        continue;
      }
      ++invariant_runs;
      invariant_checks += o.m.invariant_checks;
      if (o.m.assignment.cost != permutation_optimum(g)) ++mismatched;
      if (!o.agree || !o.matches_assignment) ++disagreed;
      stop.add(o, r);
    }
    const double secs = seconds_since(t0);
    std::ostringstream d;
    d << "1000 instances, r=2..8, " << mismatched << " cost mismatches vs exhaustive search, " << secs
      << " s (limit 120 s)";
    report("oracle-optimality", mismatched == 0 && secs < 120.0, d.str());
    report("agreement", disagreed == 0,
           std::to_string(disagreed) + " of 1000 runs where robots' final matchings differ");
  }

  // Centralized equivalence at scale.
  {
    bool ok = true;
    std::ostringstream d;
    for (std::size_t r : {5, 10, 20, 40}) {
      double sum = 0;
      std::size_t worst = 0, mismatched = 0;
      for (std::uint64_t s = 0; s < 20; ++s) {
        const std::uint64_t seed = derive_stream(0x5ca1e, {r, s}).next();
        const BipartiteGraph g = random_instance(r, seed);
        Observed o;
        try {
          o = observe(g, {r, NetworkMode::kStrong, 1, seed, 0.5}, true);
        } catch (const Error& e) {
          invariant_error = e.what();
          ++mismatched;
          continue;
        }
        ++invariant_runs;
        invariant_checks += o.m.invariant_checks;
        if (o.m.assignment.cost != hungarian(g).assignment.cost) ++mismatched;
        sum += static_cast<double>(o.m.rounds_to_convergence);
        worst = std::max(worst, o.m.rounds_to_convergence);
        stop.add(o, r);
      }
      const double mean = sum / 20.0;
      const double r3 = static_cast<double>(r * r * r);
      ok = ok && mismatched == 0 && worst <= r * r * r && mean < r3 / 10.0;
      d << "r=" << r << " mean=" << mean << " max=" << worst << " r^3/10=" << r3 / 10.0 << " mismatches="
        << mismatched << "; ";
    }
    report("centralized-equivalence", ok, d.str());
  }

  report("invariants", invariant_error.empty(),
         std::to_string(invariant_runs) + " runs, " + std::to_string(invariant_checks) + " per-round checks" +
             (invariant_error.empty() ? "" : ", first violation: " + invariant_error));

  // Full-state payload size.
  {
    bool ok = true;
    std::ostringstream d;
    for (std::size_t r : {4, 16, 64}) {
      std::size_t bits = 0;
      while ((std::size_t{1} << bits) < r) ++bits;
      const std::size_t formula = 2 * r * (4 + (bits + 3) / 4) - 2;
      WireMessage m;
      m.state.counter = static_cast<std::int64_t>(r - 1);
      m.state.labeling = VertexLabeling(r, r);
      for (std::size_t e = 0; e + 1 < 2 * r; ++e) m.state.lean.eq_edges.push_back({e % r, (e * 3 + 1) % r, 1});
      const std::size_t encoded = encode_message(m, r).size() - kFrameHeaderBytes;
      ok = ok && encoded == formula;
      d << "r=" << r << " encoded=" << encoded << " formula=" << formula << "; ";
    }
    d << "(listed 798 for r=64 is not the formula's value)";
    report("message-size", ok, d.str());
  }

  report("stopping-criterion", stop.bad_messages == 0 && stop.late == 0,
         std::to_string(stop.runs) + " strong-mode runs, " + std::to_string(stop.bad_messages) +
             " with a message count other than r-1 after the first solution, " + std::to_string(stop.late) +
             " where some robot lacked the solution r-1 rounds later");

  // Dispersion: flood over fresh networks, counted here from the raw arcs.
  {
    std::size_t slow = 0, disconnected = 0;
    for (std::size_t k = 0; k < 100; ++k) {
      const std::size_t r = 2 + k % 39;
      const RoundNetwork net{r, NetworkMode::kStrong, 1, derive_stream(0xf100d, {k}).next(), 0.5};
      std::vector<char> informed(r, 0);
      informed[k % r] = 1;
      std::size_t rounds = 0, count = 1;
      while (count < r && rounds < r) {
        const Digraph arcs = generate_round(net, rounds);
        if (!check_strong_connectivity(arcs, r)) ++disconnected;
        std::vector<char> next = informed;
        for (const Arc& a : arcs)
          if (informed[a.from] && !next[a.to]) next[a.to] = 1;
        informed = std::move(next);
        count = static_cast<std::size_t>(std::count(informed.begin(), informed.end(), 1));
        ++rounds;
      }
      if (count < r || rounds > r - 1) ++slow;
    }
    report("dispersion", slow == 0 && disconnected == 0,
           "100 networks, r=2..40: " + std::to_string(slow) + " floods slower than r-1 rounds, " +
               std::to_string(disconnected) + " rounds not strongly connected");
  }

  // Infeasibility.
  {
    const Instance inst = load_instance(kData + "/instances/infeasible.json");
    const BipartiteGraph g = inst.to_graph();
    const Observed o = observe(g, {g.n_robots(), NetworkMode::kStrong, 1, 11, 0.5}, true);
    bool big_m = false;
    for (std::size_t i = 0; i < g.n_robots(); ++i) big_m = big_m || g.weight(i, o.m.assignment.target_of[i]) == kBigM;
    std::string out;
    const int code = run_cli("solve --json " + kData + "/instances/infeasible.json", out);
    bool cli_says = false;
    try {
      cli_says = nlohmann::json::parse(out).at("infeasible").get<bool>();
    } catch (const std::exception&) {
    }
    report("infeasibility", o.m.infeasible && big_m && o.agree && cli_says && code == 5,
           std::string("distributed run flags infeasible=") + (o.m.infeasible ? "true" : "false") +
               ", BIG_M edge in common matching=" + (big_m ? "yes" : "no") + ", CLI exit " + std::to_string(code));
  }

  // Jointly connected networks.
  {
    bool ok = true;
    std::ostringstream d;
    for (std::size_t r : {5, 10, 20}) {
      for (std::size_t window : {std::size_t{2}, r}) {
        std::size_t worst = 0, mismatched = 0;
        for (std::uint64_t s = 0; s < 5; ++s) {
          const std::uint64_t seed = derive_stream(0x101, {r, window, s}).next();
          const BipartiteGraph g = random_instance(r, seed);
          try {
            const Observed o = observe(g, {r, NetworkMode::kJointly, window, seed, 0.5}, false);
            if (o.m.assignment.cost != hungarian(g).assignment.cost || !o.agree) ++mismatched;
            worst = std::max(worst, o.m.rounds_to_convergence);
          } catch (const Error&) {
            ++mismatched;
          }
        }
        ok = ok && mismatched == 0 && worst <= window * r * r * r;
        d << "r=" << r << " T_c=" << window << " max=" << worst << " bound=" << window * r * r * r << "; ";
      }
    }
    report("jointly-connected", ok, d.str());
  }

  // Routing replay.
  {
    std::string why;
    try {
      const RoutingSetup setup = parse_setup(parse_json_text(read_file(kData + "/routing/robots.json"), "robots"));
      const Score score =
          parse_score(parse_json_text(read_file(kData + "/routing/score.json"), "score"), setup.config);
      const auto script = parse_script(parse_json_text(read_file(kData + "/routing/script.json"), "script"));
      SessionRegistry reg;
      auto session = reg.get(reg.open(score, setup));
      std::vector<nlohmann::json> replans;
      session->subscribe([&](const std::string& f) {
        const auto j = nlohmann::json::parse(f);
        if (j["kind"] == "mod-accepted") replans.push_back(j["replan"]);
      });
      // Check each interval after every modification.
      std::size_t intervals = 0;
      auto check_intervals = [&] {
        session->inspect([&](const RoutingSimulation& sim) {
          for (const PlannedInstant& pi : sim.plan().instants) {
            const IntervalRecord& iv = pi.interval;
            if (iv.robots.empty()) continue;
            ++intervals;
            if (iv.assignment.cost != permutation_optimum(iv.lsap))
              why += "interval " + std::to_string(pi.time) + " not optimal; ";
            for (std::size_t a = 0; a < iv.robots.size(); ++a)
              for (std::size_t b = 0; b < iv.requests.size(); ++b) {
                const bool compatible =
                    skills_intersect(sim.robots()[iv.robots[a]].skills, sim.score().find(iv.requests[b])->skills);
                if (compatible == (iv.lsap.weight(a, b) == kBigM)) why += "skill mask wrong; ";
              }
          }
          return 0;
        });
      };
      check_intervals();
      std::size_t next = 0;
      const TimeMs end = 22000;
      for (;;) {
        while (next < script.size() && script[next].at <= session->now()) {
          session->submit(script[next++].mod);
          check_intervals();
        }
        if (session->now() >= end) break;
        session->step();
      }
      auto kept = [](const nlohmann::json& r, double until) {
        return r["from"] == "kept-waypoint" && r["keep_until"].get<double>() == until;
      };
      if (replans.size() != 3) {
        why += "expected 3 accepted modifications, got " + std::to_string(replans.size()) + "; ";
      } else {
        for (const auto& r : replans[0])
          if (!kept(r, 3.0)) why += "case 1 start wrong; ";
        for (const auto& r : replans[1])
          if (r["from"] != "current-pose") why += "case 2 start wrong; ";
        if (!kept(replans[2][0], 9.0) || replans[2][1]["from"] != "current-pose" || !kept(replans[2][2], 9.0))
          why += "case 3 starts wrong; ";
      }
      std::string a, b;
      const std::string args = "route --score " + kData + "/routing/score.json --robots " + kData +
                               "/routing/robots.json --script " + kData + "/routing/script.json --seed 17";
      const int ca = run_cli(args, a), cb = run_cli(args, b);
      if (ca != 0 || cb != 0 || a.empty() || a != b) why += "route output not byte-identical; ";
      report("routing-replay", why.empty(),
             std::to_string(intervals) + " interval solves checked against exhaustive search, case 1/2/3 starts, " +
                 std::to_string(a.size()) + "-byte stream compared" + (why.empty() ? "" : ": " + why));
    } catch (const std::exception& e) {
      report("routing-replay", false, e.what());
    }
  }

  return failures == 0 ? 0 : 1;
}
