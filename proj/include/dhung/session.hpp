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

#ifndef DHUNG_SESSION_HPP_
#define DHUNG_SESSION_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dhung/core.hpp"
#include "dhung/routing.hpp"
#include "dhung/routing_io.hpp"

namespace dhung {

/// A live routing simulation with an ordered event stream.
///
/// Every public call takes the session lock, so ticks, modifications and
/// subscriptions are applied in one total order. Listeners run under that
/// lock and see events in exactly that order; they must not call back into
/// the session.
class Session {
 public:
  using Listener = std::function<void(const std::string& frame)>;

  Session(std::string id, RoutingSimulation sim, TimeMs tick)
      : id_(std::move(id)), sim_(std::move(sim)), tick_(tick) {
    if (tick_ <= 0) throw Error(ErrorKind::kInvalidInput, "tick must be positive");
  }

  const std::string& id() const { return id_; }
  TimeMs tick_ms() const { return tick_; }

  json snapshot() const {
    std::lock_guard lock(mu_);
    return snapshot_locked();
  }

  /// Registers `listener`; it first receives a snapshot, then every later
  /// event.
  std::uint64_t subscribe(Listener listener) {
    std::lock_guard lock(mu_);
    if (closed_) throw Error(ErrorKind::kUnknownSession, "session " + id_ + " is closed");
    listener(snapshot_locked().dump());
    const std::uint64_t handle = next_listener_++;
    listeners_.emplace(handle, std::move(listener));
    return handle;
  }

  void unsubscribe(std::uint64_t handle) {
    std::lock_guard lock(mu_);
    listeners_.erase(handle);
  }

  /// Advances the clock by `count` ticks.
  void step(std::size_t count = 1) {
    std::lock_guard lock(mu_);
    check_open();
    for (std::size_t k = 0; k < count; ++k) tick_locked();
  }

  ModificationOutcome submit(const Modification& mod) {
    std::lock_guard lock(mu_);
    check_open();
    ModificationOutcome out = sim_.modify(mod);
    if (!out.accepted) {
      emit("mod-rejected", {{"t", ms_to_json(sim_.now())},
                            {"mod", modification_json(mod)},
                            {"reason", out.reason},
                            {"detail", out.detail}});
      return out;
    }
    json starts = json::array();
    for (const ReplanStart& s : out.starts) starts.push_back(replan_json(s));
    json accepted{{"t", ms_to_json(sim_.now())},
                  {"mod", modification_json(mod)},
                  {"affected_t", ms_to_json(out.affected_time)},
                  {"replan", starts}};
    if (out.new_id) accepted["new_id"] = *out.new_id;
    const std::uint64_t trigger = emit("mod-accepted", accepted);
    for (const PlannedInstant& pi : sim_.plan().instants) {
      if (!pi.interval.solved_now || pi.time <= sim_.now()) continue;
      emit("protocol-stats", {{"t", ms_to_json(sim_.now())},
                              {"instant", ms_to_json(pi.time)},
                              {"trigger", trigger},
                              {"robots", pi.interval.robots},
                              {"requests", pi.interval.requests},
                              {"cost", pi.interval.assignment.cost},
                              {"rounds", pi.interval.rounds},
                              {"messages", pi.interval.messages},
                              {"bytes", pi.interval.bytes}});
    }
    return out;
  }

  void play() { set_playing(true); }
  void pause() { set_playing(false); }

  bool playing() const {
    std::lock_guard lock(mu_);
    return playing_;
  }

  void close() {
    std::lock_guard lock(mu_);
    closed_ = true;
    playing_ = false;
    listeners_.clear();
  }

  bool closed() const {
    std::lock_guard lock(mu_);
    return closed_;
  }

  TimeMs now() const {
    std::lock_guard lock(mu_);
    return sim_.now();
  }

  /// Runs `f` on the simulation under the session lock.
  template <typename F>
  auto inspect(F&& f) const {
    std::lock_guard lock(mu_);
    return f(sim_);
  }

 private:
  void check_open() const {
    if (closed_) throw Error(ErrorKind::kUnknownSession, "session " + id_ + " is closed");
  }

  void set_playing(bool on) {
    std::lock_guard lock(mu_);
    check_open();
    if (playing_ == on) return;
    playing_ = on;
    emit("transport", {{"t", ms_to_json(sim_.now())}, {"playing", on}});
  }

  std::uint64_t emit(const char* kind, json body) {
    body["seq"] = ++seq_;
    body["kind"] = kind;
    body["session"] = id_;
    const std::string frame = body.dump();
    for (auto& [handle, listener] : listeners_) listener(frame);
    return seq_;
  }

  void tick_locked() {
    for (const RoutingEvent& e : sim_.advance(tick_)) {
      const bool fired = e.kind == RoutingEvent::Kind::kNoteFired;
      json body{{"t", ms_to_json(e.time)}, {"robot", e.robot}, {"id", e.request}, {"position", point_json(e.position)}};
      if (fired) {
        body["skills"] = sim_.score().find(e.request)->skills;
      } else {
        body["miss"] = e.miss;
      }
      emit(fired ? "note-fired" : "late-arrival", std::move(body));
    }
    json poses = json::array();
    for (const Point& p : sim_.poses()) poses.push_back(point_json(p));
    emit("pose-update", {{"t", ms_to_json(sim_.now())}, {"poses", poses}});
  }

  json snapshot_locked() const {
    json robots = json::array();
    SkillSet palette;
    for (const RobotProfile& r : sim_.robots()) {
      robots.push_back({{"id", r.id}, {"skills", r.skills}, {"speed", r.speed},
                        {"pose", point_json(sim_.poses()[r.id])}});
      palette.insert(palette.end(), r.skills.begin(), r.skills.end());
    }
    const RoutingConfig& cfg = sim_.config();
    return {{"kind", "snapshot"},
            {"seq", seq_},
            {"session", id_},
            {"t", ms_to_json(sim_.now())},
            {"tick", ms_to_json(tick_)},
            {"guard", ms_to_json(cfg.guard())},
            {"playing", playing_},
            {"floor", {{"width", cfg.floor.width}, {"height", cfg.floor.height}}},
            {"skills", make_skills(palette)},
            {"robots", robots},
            {"score", score_json(sim_.score())},
            {"plan", plan_json(sim_.plan())},
            {"lock_boundary", sim_.plan().lock_boundary < 0 ? json(nullptr) : ms_to_json(sim_.plan().lock_boundary)}};
  }

  const std::string id_;
  mutable std::mutex mu_;
  RoutingSimulation sim_;
  TimeMs tick_;
  std::uint64_t seq_ = 0;
  bool playing_ = false;
  bool closed_ = false;
  std::uint64_t next_listener_ = 1;
  std::map<std::uint64_t, Listener> listeners_;
};

/// Sessions by id.
class SessionRegistry {
 public:
  std::string open(Score score, const RoutingSetup& setup) {
    std::lock_guard lock(mu_);
    const std::string id = std::to_string(++counter_);
    sessions_.emplace(id, std::make_shared<Session>(
                              id, RoutingSimulation(std::move(score), setup.robots, setup.config), setup.tick));
    return id;
  }

  std::shared_ptr<Session> get(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::kUnknownSession, "unknown session '" + id + "'");
    return it->second;
  }

  void close(const std::string& id) { get(id)->close(); }

  std::vector<std::shared_ptr<Session>> all() const {
    std::lock_guard lock(mu_);
    std::vector<std::shared_ptr<Session>> out;
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

 private:
  mutable std::mutex mu_;
  std::uint64_t counter_ = 0;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
};

/// Headless replay: ticks the session until `end`, submitting each scripted
/// modification on the first tick boundary at or after its time.
inline void replay_script(Session& session, const std::vector<ScriptedModification>& script, TimeMs end) {
  std::size_t next = 0;
  for (;;) {
    while (next < script.size() && script[next].at <= session.now()) session.submit(script[next++].mod);
    if (session.now() >= end) break;
    session.step();
  }
}

}  // namespace dhung

#endif  // DHUNG_SESSION_HPP_
