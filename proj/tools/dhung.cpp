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

// dhung: solve, simulate, bench, route and serve.

#include <atomic>
#include <chrono>
#include <csignal>
#include <exception>
#include <mutex>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dhung/instance_io.hpp"
#include "dhung/lsap.hpp"
#include "dhung/netsim.hpp"
#include "dhung/routing.hpp"
#include "dhung/routing_io.hpp"
#include "dhung/server.hpp"
#include "dhung/session.hpp"

namespace {

using dhung::Error;
using dhung::ErrorKind;
using nlohmann::json;

// Exit codes. CLI11 usage errors keep their own code (106 and up) except
// that we map them to 2.
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitIo = 4;
constexpr int kExitInfeasible = 5;
constexpr int kExitInternal = 1;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kIo: return kExitIo;
    case ErrorKind::kInfeasible:
    case ErrorKind::kRejectedInfeasible: return kExitInfeasible;
    case ErrorKind::kInternal:
    case ErrorKind::kProtocolViolation:
    case ErrorKind::kNontermination: return kExitInternal;
    default: return kExitInput;
  }
}

void report_error(std::string_view category, const std::string& message) {
  std::cerr << json{{"error", category}, {"message", message}}.dump() << '\n';
}

// Output sink: --out path or stdout.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty() && path != "-") {
      file_.open(path);
      if (!file_) throw Error(ErrorKind::kIo, "cannot write '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// Exact decimal rendering of wire / scale.
std::string decimal(std::int64_t wire, std::int64_t scale) {
  std::string out = wire < 0 ? "-" : "";
  const std::uint64_t mag = wire < 0 ? -static_cast<std::uint64_t>(wire) : static_cast<std::uint64_t>(wire);
  const auto s = static_cast<std::uint64_t>(scale);
  out += std::to_string(mag / s);
  std::uint64_t rem = mag % s;
  if (rem == 0) return out;
  std::string frac;
  for (std::uint64_t unit = s; unit > 1; unit /= 10) {
    rem *= 10;
    frac.push_back(static_cast<char>('0' + rem / s));
    rem %= s;
  }
  while (!frac.empty() && frac.back() == '0') frac.pop_back();
  return out + "." + frac;
}

dhung::NetworkMode parse_mode(const std::string& m) {
  if (m == "strong") return dhung::NetworkMode::kStrong;
  if (m == "jointly") return dhung::NetworkMode::kJointly;
  throw Error(ErrorKind::kInvalidInput, "unknown network mode '" + m + "'");
}

std::vector<std::size_t> parse_sizes(const std::string& spec, std::size_t step) {
  std::vector<std::size_t> out;
  auto number = [&](const std::string& t) -> std::size_t {
    std::size_t used = 0;
    unsigned long v = 0;
    try {
      v = std::stoul(t, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != t.size() || t.empty() || v == 0) throw Error(ErrorKind::kInvalidInput, "bad size '" + t + "' in '" + spec + "'");
    return v;
  };
  std::stringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    const auto dots = part.find("..");
    if (dots == std::string::npos) {
      out.push_back(number(part));
      continue;
    }
    const std::size_t lo = number(part.substr(0, dots)), hi = number(part.substr(dots + 2));
    if (lo > hi || step == 0) throw Error(ErrorKind::kInvalidInput, "bad range '" + part + "'");
    for (std::size_t r = lo; r <= hi; r += step) out.push_back(r);
  }
  if (out.empty()) throw Error(ErrorKind::kInvalidInput, "no sizes given");
  return out;
}

// Network settings shared by simulate and bench; a config file's keys
// override the flags.
struct NetFlags {
  std::string mode = "strong";
  std::size_t window = 1;
  double q = 0.5;
  std::string config;

  void add(CLI::App* app) {
    app->add_option("--mode", mode, "strong or jointly")->capture_default_str();
    app->add_option("--window", window, "T_c for jointly mode")->capture_default_str();
    app->add_option("--q", q, "probability of each non-cycle arc")->capture_default_str();
    app->add_option("--config", config, "JSON file whose keys override these flags");
  }

  json load_config() const {
    if (config.empty()) return json::object();
    json c = dhung::parse_json_text(dhung::read_file(config), config);
    if (!c.is_object()) throw Error(ErrorKind::kInvalidInput, config + ": expected an object");
    return c;
  }

  template <typename T>
  static void override(const json& c, const char* key, T& field) {
    if (!c.contains(key)) return;
    try {
      if constexpr (requires { typename T::value_type; field.has_value(); }) {
        field = c[key].get<typename T::value_type>();
      } else {
        field = c[key].get<T>();
      }
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kInvalidInput, std::string("config key '") + key + "': " + e.what());
    }
  }

  dhung::RoundNetwork network(std::size_t r, std::uint64_t seed) const {
    if (q < 0.0 || q > 1.0) throw Error(ErrorKind::kInvalidInput, "q must be in [0, 1]");
    if (window < 1) throw Error(ErrorKind::kInvalidInput, "window must be at least 1");
    return {r, parse_mode(mode), window, seed, q};
  }
};

// ---- solve ----

struct SolveCmd {
  std::string instance;
  std::int64_t scale = dhung::kDefaultScale;
  bool as_json = false;
  std::string out;

  void add(CLI::App& root) {
    CLI::App* app = root.add_subcommand("solve", "Centralized assignment on an instance file");
    app->add_option("instance", instance, "matrix text or JSON instance")->required();
    app->add_option("--scale", scale, "fixed-point scale for decimal costs")->capture_default_str();
    app->add_flag("--json", as_json, "print a JSON object");
    app->add_option("--out", out, "output path (default stdout)");
    app->callback([this] { code = run(); });
  }

  int run() const {
    const dhung::Instance inst = dhung::load_instance(instance, scale);
    const dhung::BipartiteGraph g = inst.to_graph();
    const dhung::HungarianResult res = dhung::hungarian(g);
    json matching = json::array();
    json forbidden = json::array();
    std::int64_t cost = 0;
    for (std::size_t i = 0; i < inst.n_robots; ++i) {
      const std::size_t j = res.assignment.target_of[i];
      if (j >= inst.n_targets) continue;
      const std::int64_t w = g.weight(i, j);
      if (w == dhung::kBigM) {
        forbidden.push_back({i, j});
      } else {
        cost += w;
      }
      matching.push_back({i, j});
    }
    const bool infeasible = !forbidden.empty();
    Output o(out);
    if (as_json) {
      o.stream() << json{{"cost", decimal(cost, inst.scale)}, {"cost_wire", cost}, {"scale", inst.scale},
                         {"matching", matching}, {"infeasible", infeasible}, {"forbidden", forbidden}}
                        .dump()
                 << '\n';
    } else {
      o.stream() << "cost " << decimal(cost, inst.scale) << '\n';
      for (const auto& m : matching) o.stream() << "robot " << m[0] << " -> target " << m[1] << '\n';
      o.stream() << (infeasible ? "infeasible" : "feasible") << '\n';
    }
    if (infeasible) {
      report_error("infeasible", "assignment needs " + std::to_string(forbidden.size()) + " forbidden pair(s)");
      return kExitInfeasible;
    }
    return 0;
  }

  int code = 0;
};

// ---- simulate ----

struct SimulateCmd {
  std::size_t r = 0;
  std::optional<std::uint64_t> seed;
  std::string instance;
  std::int64_t scale = dhung::kDefaultScale;
  bool check = false;
  std::string trace;
  std::string out;
  NetFlags net;

  void add(CLI::App& root) {
    CLI::App* app = root.add_subcommand("simulate", "Distributed run with trace and metrics");
    app->add_option("--r", r, "robots in a random instance");
    app->add_option("--seed", seed, "seed for the instance and the network");
    app->add_option("--instance", instance, "instance file instead of a random one");
    app->add_option("--scale", scale, "fixed-point scale for decimal costs")->capture_default_str();
    app->add_flag("--check", check, "assert protocol invariants every round");
    app->add_option("--trace", trace, "JSONL trace path");
    app->add_option("--out", out, "metrics path (default stdout)");
    net.add(app);
    app->callback([this] { code = run(); });
  }

  int run() {
    const json c = net.load_config();
    NetFlags::override(c, "r", r);
    NetFlags::override(c, "seed", seed);
    NetFlags::override(c, "instance", instance);
    NetFlags::override(c, "check", check);
    NetFlags::override(c, "mode", net.mode);
    NetFlags::override(c, "window", net.window);
    NetFlags::override(c, "q", net.q);
    if (!seed) throw Error(ErrorKind::kInvalidInput, "--seed is required");
    dhung::BipartiteGraph g;
    std::int64_t wire_scale = 1;
    std::size_t n_targets = 0;
    if (!instance.empty()) {
      const dhung::Instance inst = dhung::load_instance(instance, scale);
      g = inst.to_graph();
      wire_scale = inst.scale;
      n_targets = inst.n_targets;
    } else {
      if (r < 1) throw Error(ErrorKind::kInvalidInput, "--r or --instance is required");
      g = dhung::random_instance(r, *seed);
      n_targets = r;
    }
    const std::size_t n = g.n_robots();
    std::unique_ptr<std::ofstream> trace_file;
    dhung::RunOptions opts;
    opts.check_invariants = check;
    if (!trace.empty()) {
      trace_file = std::make_unique<std::ofstream>(trace);
      if (!*trace_file) throw Error(ErrorKind::kIo, "cannot write '" + trace + "'");
      opts.trace = [&](const dhung::TraceRecord& t) {
        *trace_file << json{{"round", t.round}, {"robot", t.robot}, {"counter", t.counter},
                            {"matching", t.matching_size}, {"covered", t.covered_robots}, {"bytes", t.bytes_sent}}
                           .dump()
                    << '\n';
      };
    }
    const dhung::RunMetrics m = dhung::run_protocol(g, net.network(n, *seed), opts);
    const std::int64_t central = dhung::hungarian(g).assignment.cost;
    json matching = json::array();
    std::int64_t cost = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t j = m.assignment.target_of[i];
      if (j >= n_targets) continue;
      matching.push_back({i, j});
      if (g.weight(i, j) != dhung::kBigM) cost += g.weight(i, j);
    }
    const std::size_t total_bytes = std::accumulate(m.bytes_per_round.begin(), m.bytes_per_round.end(), std::size_t{0});
    json metrics{{"r", n},
                 {"seed", *seed},
                 {"mode", net.mode},
                 {"window", net.window},
                 {"q", net.q},
                 {"rounds_to_convergence", m.rounds_to_convergence},
                 {"rounds_total", m.rounds_total},
                 {"messages", m.messages_sent},
                 {"bytes", total_bytes},
                 {"max_payload_bytes", m.max_payload_bytes},
                 {"max_step_us", m.max_step_micros},
                 {"final_counter", m.final_counter},
                 {"first_perfect_round", m.first_perfect_round},
                 {"first_perfect_robot", m.first_perfect_robot},
                 {"first_perfect_messages", m.first_perfect_messages},
                 {"invariant_checks", m.invariant_checks},
                 {"cost", decimal(cost, wire_scale)},
                 {"cost_wire", m.assignment.cost},
                 {"centralized_cost_wire", central},
                 {"matching", matching},
                 {"infeasible", m.infeasible}};
    Output o(out);
    o.stream() << metrics.dump() << '\n';
    if (m.infeasible) {
      report_error("infeasible", "converged assignment uses a forbidden pair");
      return kExitInfeasible;
    }
    return 0;
  }

  int code = 0;
};

// ---- bench ----

struct BenchCmd {
  std::string sizes = "5..40";
  std::size_t step = 5;
  std::size_t runs = 20;
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  std::string out;
  NetFlags net;

  void add(CLI::App& root) {
    CLI::App* app = root.add_subcommand("bench", "Rounds and step time over random instances");
    app->add_option("--r", sizes, "sizes: list and/or ranges, e.g. 5..40 or 4,8,16")->capture_default_str();
    app->add_option("--step", step, "stride for ranges")->capture_default_str();
    app->add_option("--runs", runs, "runs per size")->capture_default_str();
    app->add_option("--seed", seed, "base seed");
    app->add_option("--threads", threads, "worker threads (0 = hardware)");
    app->add_option("--out", out, "CSV path (default stdout)");
    net.add(app);
    app->callback([this] { code = run(); });
  }

  struct Sample {
    std::size_t rounds = 0, rounds_total = 0, messages = 0;
    double step_us = 0, central_us = 0;
    bool optimal = true;
  };

  int run() {
    const json c = net.load_config();
    NetFlags::override(c, "r", sizes);
    NetFlags::override(c, "step", step);
    NetFlags::override(c, "runs", runs);
    NetFlags::override(c, "seed", seed);
    NetFlags::override(c, "mode", net.mode);
    NetFlags::override(c, "window", net.window);
    NetFlags::override(c, "q", net.q);
    if (!seed) throw Error(ErrorKind::kInvalidInput, "--seed is required");
    if (runs < 1) throw Error(ErrorKind::kInvalidInput, "--runs must be at least 1");
    const std::vector<std::size_t> rs = parse_sizes(sizes, step);
    for (std::size_t r : rs) (void)net.network(r, 0);

    struct Job {
      std::size_t r, run;
    };
    std::vector<Job> jobs;
    for (std::size_t r : rs)
      for (std::size_t k = 0; k < runs; ++k) jobs.push_back({r, k});
    std::vector<Sample> samples(jobs.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
      for (std::size_t idx; (idx = next++) < jobs.size();) {
        try {
          const Job& j = jobs[idx];
          const std::uint64_t s = dhung::derive_stream(*seed, {j.r, j.run}).next();
          const dhung::BipartiteGraph g = dhung::random_instance(j.r, s);
          const dhung::RunMetrics m = dhung::run_protocol(g, net.network(j.r, s));
          const auto t0 = std::chrono::steady_clock::now();
          const std::int64_t central = dhung::hungarian(g).assignment.cost;
          const auto t1 = std::chrono::steady_clock::now();
          samples[idx] = {m.rounds_to_convergence, m.rounds_total, m.messages_sent, m.max_step_micros,
                          std::chrono::duration<double, std::micro>(t1 - t0).count(), central == m.assignment.cost};
        } catch (...) {
          std::lock_guard lock(failure_mu);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    const unsigned n_threads = threads ? threads : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    Output o(out);
    std::ostream& os = o.stream();
    os << "r,runs,mean_rounds,min_rounds,max_rounds,mean_rounds_total,mean_messages,"
          "mean_max_step_us,mean_centralized_us,r_cubed,all_optimal\n";
    os << std::fixed << std::setprecision(2);
    std::size_t idx = 0;
    for (std::size_t r : rs) {
      double sum_rounds = 0, sum_total = 0, sum_msgs = 0, sum_step = 0, sum_central = 0;
      std::size_t lo = SIZE_MAX, hi = 0;
      bool optimal = true;
      for (std::size_t k = 0; k < runs; ++k, ++idx) {
        const Sample& s = samples[idx];
        sum_rounds += static_cast<double>(s.rounds);
        sum_total += static_cast<double>(s.rounds_total);
        sum_msgs += static_cast<double>(s.messages);
        sum_step += s.step_us;
        sum_central += s.central_us;
        lo = std::min(lo, s.rounds);
        hi = std::max(hi, s.rounds);
        optimal = optimal && s.optimal;
      }
      const double n = static_cast<double>(runs);
      os << r << ',' << runs << ',' << sum_rounds / n << ',' << lo << ',' << hi << ',' << sum_total / n << ','
         << sum_msgs / n << ',' << sum_step / n << ',' << sum_central / n << ',' << r * r * r << ','
         << (optimal ? "true" : "false") << '\n';
    }
    return 0;
  }

  int code = 0;
};

// ---- route ----

struct RouteCmd {
  std::string score, robots, script;
  std::optional<std::uint64_t> seed;
  std::optional<double> until;
  std::string out;

  void add(CLI::App& root) {
    CLI::App* app = root.add_subcommand("route", "Headless score replay with a modification script");
    app->add_option("--score", score, "score JSON")->required();
    app->add_option("--robots", robots, "robots and routing config JSON")->required();
    app->add_option("--script", script, "timed modification script JSON");
    app->add_option("--seed", seed, "network seed")->required();
    app->add_option("--until", until, "stop time in seconds (default: one tick past the last instant)");
    app->add_option("--out", out, "event stream path, one JSON frame per line (default stdout)");
    app->callback([this] { code = run(); });
  }

  int run() const {
    dhung::RoutingSetup setup = dhung::parse_setup(dhung::parse_json_text(dhung::read_file(robots), robots));
    setup.config.network.seed = *seed;
    dhung::Score s = dhung::parse_score(dhung::parse_json_text(dhung::read_file(score), score), setup.config);
    std::vector<dhung::ScriptedModification> mods;
    if (!script.empty()) mods = dhung::parse_script(dhung::parse_json_text(dhung::read_file(script), script));
    dhung::SessionRegistry registry;
    auto session = registry.get(registry.open(std::move(s), setup));
    Output o(out);
    std::size_t counts[3] = {0, 0, 0};
    session->subscribe([&](const std::string& frame) {
      o.stream() << frame << '\n';
      if (frame.find(R"("kind":"mod-accepted")") != std::string::npos) ++counts[0];
      if (frame.find(R"("kind":"mod-rejected")") != std::string::npos) ++counts[1];
      if (frame.find(R"("kind":"late-arrival")") != std::string::npos) ++counts[2];
    });
    dhung::TimeMs end = 0;
    if (until) {
      end = dhung::seconds_to_ms(json(*until));
    } else {
      end = session->inspect([&](const dhung::RoutingSimulation& sim) {
        dhung::TimeMs last = 0;
        for (const auto& pi : sim.plan().instants) last = std::max(last, pi.time);
        for (const auto& m : mods) last = std::max(last, m.at);
        return last;
      }) + setup.tick;
    }
    dhung::replay_script(*session, mods, end);
    o.stream().flush();
    std::cerr << json{{"accepted", counts[0]}, {"rejected", counts[1]}, {"late", counts[2]}, {"t", dhung::ms_to_json(session->now())}}
                     .dump()
              << '\n';
    return 0;
  }

  int code = 0;
};

// ---- serve ----

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

struct ServeCmd {
  std::string score, robots;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> host;
  std::optional<int> port, http_port;
  bool play = false;

  void add(CLI::App& root) {
    CLI::App* app = root.add_subcommand("serve", "Run the conductor service");
    app->add_option("--score", score, "score JSON")->required();
    app->add_option("--robots", robots, "robots and routing config JSON")->required();
    app->add_option("--seed", seed, "network seed (default from the robots file)");
    app->add_option("--host", host, "listen address (env DHUNG_HOST, default 127.0.0.1)");
    app->add_option("--port", port, "frame port (env DHUNG_PORT, default 7870, 0 = any)");
    app->add_option("--http-port", http_port, "HTTP port (env DHUNG_HTTP_PORT, default 7871, -1 = off)");
    app->add_flag("--play", play, "start the clock immediately");
    app->callback([this] { code = run(); });
  }

  int run() const {
    dhung::RoutingSetup setup = dhung::parse_setup(dhung::parse_json_text(dhung::read_file(robots), robots));
    if (seed) setup.config.network.seed = *seed;
    dhung::Score s = dhung::parse_score(dhung::parse_json_text(dhung::read_file(score), score), setup.config);
    dhung::SessionRegistry registry;
    const std::string id = registry.open(std::move(s), setup);
    if (play) registry.get(id)->play();
    dhung::ServerOptions opts = dhung::ServerOptions::from_env();
    if (host) opts.host = *host;
    if (port) opts.port = *port;
    if (http_port) opts.http_port = *http_port;
    dhung::ConductorServer server(registry, opts);
    server.start();
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << json{{"listening", opts.host}, {"port", server.port()}, {"http_port", server.http_port()}, {"session", id}}
                     .dump()
              << std::endl;
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
    server.stop();
    return 0;
  }

  int code = 0;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Hungarian method: solver, simulator and conductor service", "dhung"};
  app.require_subcommand(1);
  SolveCmd solve;
  SimulateCmd simulate;
  BenchCmd bench;
  RouteCmd route;
  ServeCmd serve;
  solve.add(app);
  simulate.add(app);
  bench.add(app);
  route.add(app);
  serve.add(app);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    report_error("usage", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    report_error(dhung::to_string(e.kind()), e.what());
    return exit_code(e.kind());
  } catch (const std::exception& e) {
    report_error("internal", e.what());
    return kExitInternal;
  }
  return solve.code | simulate.code | bench.code | route.code | serve.code;
}
