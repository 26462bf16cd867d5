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

// Conductor service: length-prefixed JSON frames over TCP plus a small HTTP
// endpoint for health and snapshots. Frame layout is documented in
// docs/frames.md.

#ifndef DHUNG_SERVER_HPP_
#define DHUNG_SERVER_HPP_

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <cstdlib>
#include <cstring>
#include <deque>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <httplib.h>
#include <json.hpp>

#include "dhung/core.hpp"
#include "dhung/routing_io.hpp"
#include "dhung/session.hpp"

namespace dhung {

inline constexpr std::size_t kFrameLengthBytes = 4;
inline constexpr std::uint32_t kMaxFrameBytes = 16u << 20;

/// 4-byte big-endian length followed by the body.
inline std::string encode_frame(const std::string& body) {
  if (body.size() > kMaxFrameBytes) throw Error(ErrorKind::kInvalidInput, "frame too large");
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(kFrameLengthBytes + body.size());
  for (int shift = 24; shift >= 0; shift -= 8) out.push_back(static_cast<char>((n >> shift) & 0xff));
  out += body;
  return out;
}

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(const char* data, std::size_t n) { buf_.append(data, n); }

  /// Next complete frame body, if any. Throws kInvalidInput on an oversized
  /// length prefix.
  std::optional<std::string> next() {
    if (buf_.size() < kFrameLengthBytes) return std::nullopt;
    std::uint32_t n = 0;
    for (std::size_t k = 0; k < kFrameLengthBytes; ++k) n = (n << 8) | static_cast<unsigned char>(buf_[k]);
    if (n > kMaxFrameBytes) throw Error(ErrorKind::kInvalidInput, "frame length " + std::to_string(n) + " exceeds limit");
    if (buf_.size() < kFrameLengthBytes + n) return std::nullopt;
    std::string body = buf_.substr(kFrameLengthBytes, n);
    buf_.erase(0, kFrameLengthBytes + n);
    return body;
  }

 private:
  std::string buf_;
};

namespace detail {

inline bool send_all(int fd, const std::string& bytes) {
  std::size_t off = 0;
  while (off < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + off, bytes.size() - off, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    off += static_cast<std::size_t>(n);
  }
  return true;
}

inline int listen_tcp(const std::string& host, int port, int& bound_port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorKind::kIo, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw Error(ErrorKind::kInvalidInput, "bad listen address '" + host + "'");
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(fd, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorKind::kIo, "listen on " + host + ":" + std::to_string(port) + ": " + why);
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port = ntohs(addr.sin_port);
  return fd;
}

inline json error_frame(std::string_view category, const std::string& message, const json& request) {
  json e{{"kind", "error"}, {"category", category}, {"message", message}};
  if (request.is_object()) {
    if (request.contains("op")) e["op"] = request["op"];
    if (request.contains("req")) e["req"] = request["req"];
  }
  return e;
}

}  // namespace detail

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 7870;       // 0 picks a free port
  int http_port = 7871;  // 0 picks a free port, -1 disables HTTP
  bool realtime = true;  // playing sessions tick on the wall clock

  /// Defaults overridden by DHUNG_HOST, DHUNG_PORT and DHUNG_HTTP_PORT.
  static ServerOptions from_env() {
    ServerOptions o;
    if (const char* h = std::getenv("DHUNG_HOST")) o.host = h;
    if (const char* p = std::getenv("DHUNG_PORT")) o.port = parse_port(p);
    if (const char* p = std::getenv("DHUNG_HTTP_PORT")) o.http_port = parse_port(p);
    return o;
  }

  static int parse_port(const std::string& text) {
    try {
      std::size_t used = 0;
      const int p = std::stoi(text, &used);
      if (used == text.size() && p >= -1 && p <= 65535) return p;
    } catch (const std::exception&) {
    }
    throw Error(ErrorKind::kInvalidInput, "bad port '" + text + "'");
  }
};

/// Serves every session in a registry.
class ConductorServer {
 public:
  ConductorServer(SessionRegistry& registry, ServerOptions options)
      : registry_(registry), options_(std::move(options)) {}

  ConductorServer(const ConductorServer&) = delete;
  ConductorServer& operator=(const ConductorServer&) = delete;
  ~ConductorServer() { stop(); }

  void start() {
    if (running_) return;
    listen_fd_ = detail::listen_tcp(options_.host, options_.port, port_);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    if (options_.realtime) ticker_thread_ = std::thread([this] { tick_loop(); });
    if (options_.http_port >= 0) start_http();
  }

  void stop() {
    if (!running_.exchange(false)) return;
    if (http_) http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    ::shutdown(listen_fd_, SHUT_RDWR);
    if (accept_thread_.joinable()) accept_thread_.join();
    ::close(listen_fd_);
    if (ticker_thread_.joinable()) ticker_thread_.join();
    std::list<std::shared_ptr<Connection>> conns;
    {
      std::lock_guard lock(conns_mu_);
      conns.swap(conns_);
    }
    for (auto& c : conns) c->shutdown();
    for (auto& c : conns) c->join();
  }

  /// Blocks until stop() is called from another thread or a signal handler
  /// clears the running flag.
  void wait() const {
    while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }

  int port() const { return port_; }
  int http_port() const { return http_port_; }

 private:
  class Connection : public std::enable_shared_from_this<Connection> {
   public:
    Connection(int fd, SessionRegistry& registry) : fd_(fd), registry_(registry) {}

    void run() {
      auto self = shared_from_this();
      writer_ = std::thread([self] { self->write_loop(); });
      reader_ = std::thread([self] { self->read_loop(); });
    }

    void shutdown() { ::shutdown(fd_, SHUT_RDWR); }

    // The reader joins the writer before it exits.
    void join() {
      if (reader_.joinable()) reader_.join();
    }

    bool finished() const { return finished_; }

   private:
    void push(std::string frame) {
      {
        std::lock_guard lock(out_mu_);
        if (closing_) return;
        out_.push_back(encode_frame(frame));
      }
      out_cv_.notify_one();
    }

    void write_loop() {
      for (;;) {
        std::string bytes;
        {
          std::unique_lock lock(out_mu_);
          out_cv_.wait(lock, [&] { return closing_ || !out_.empty(); });
          if (out_.empty()) break;
          bytes = std::move(out_.front());
          out_.pop_front();
        }
        if (!detail::send_all(fd_, bytes)) {
          shutdown();
          break;
        }
      }
    }

    void read_loop() {
      FrameDecoder decoder;
      char buf[4096];
      bool ok = true;
      while (ok) {
        const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        decoder.feed(buf, static_cast<std::size_t>(n));
        try {
          while (auto body = decoder.next()) handle(*body);
        } catch (const Error& e) {
          push(detail::error_frame("malformed-frame", e.what(), nullptr).dump());
          ok = false;
        }
      }
      for (auto& [id, handle] : subscriptions_) {
        try {
          registry_.get(id)->unsubscribe(handle);
        } catch (const Error&) {
        }
      }
      subscriptions_.clear();
      {
        std::lock_guard lock(out_mu_);
        closing_ = true;
      }
      out_cv_.notify_one();
      if (writer_.joinable()) writer_.join();
      ::close(fd_);
      finished_ = true;
    }

    void handle(const std::string& body) {
      json req;
      try {
        req = json::parse(body);
      } catch (const json::exception& e) {
        push(detail::error_frame("malformed-frame", e.what(), nullptr).dump());
        return;
      }
      if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) {
        push(detail::error_frame("malformed-frame", "request must be an object with a string 'op'", req).dump());
        return;
      }
      try {
        json reply = dispatch(req);
        reply["kind"] = "reply";
        reply["op"] = req["op"];
        if (req.contains("req")) reply["req"] = req["req"];
        push(reply.dump());
      } catch (const Error& e) {
        push(detail::error_frame(to_string(e.kind()), e.what(), req).dump());
      } catch (const json::exception& e) {
        push(detail::error_frame(to_string(ErrorKind::kInvalidInput), e.what(), req).dump());
      }
    }

    std::shared_ptr<Session> session_of(const json& req) {
      if (!req.contains("session")) throw Error(ErrorKind::kInvalidInput, "missing 'session'");
      const json& s = req["session"];
      return registry_.get(s.is_string() ? s.get<std::string>() : s.dump());
    }

    json dispatch(const json& req) {
      const std::string op = req["op"];
      if (op == "sessions") {
        json ids = json::array();
        for (const auto& s : registry_.all())
          if (!s->closed()) ids.push_back(s->id());
        return {{"sessions", ids}};
      }
      auto session = session_of(req);
      if (op == "subscribe") {
        if (subscriptions_.count(session->id())) throw Error(ErrorKind::kInvalidInput, "already subscribed");
        std::weak_ptr<Connection> weak = shared_from_this();
        subscriptions_[session->id()] = session->subscribe([weak](const std::string& frame) {
          if (auto c = weak.lock()) c->push(frame);
        });
        return {{"session", session->id()}};
      }
      if (op == "unsubscribe") {
        auto it = subscriptions_.find(session->id());
        if (it == subscriptions_.end()) throw Error(ErrorKind::kInvalidInput, "not subscribed");
        session->unsubscribe(it->second);
        subscriptions_.erase(it);
        return {{"session", session->id()}};
      }
      if (op == "snapshot") return {{"session", session->id()}, {"snapshot", session->snapshot()}};
      if (op == "modify") {
        if (!req.contains("mod")) throw Error(ErrorKind::kInvalidInput, "missing 'mod'");
        const ModificationOutcome out = session->submit(parse_modification(req["mod"]));
        json r{{"session", session->id()}, {"accepted", out.accepted}};
        if (!out.accepted) {
          r["reason"] = out.reason;
          r["detail"] = out.detail;
        }
        if (out.new_id) r["new_id"] = *out.new_id;
        return r;
      }
      if (op == "play") {
        session->play();
        return {{"session", session->id()}};
      }
      if (op == "pause") {
        session->pause();
        return {{"session", session->id()}};
      }
      if (op == "step") {
        const auto count = req.value("count", std::int64_t{1});
        if (count < 1 || count > 100000) throw Error(ErrorKind::kInvalidInput, "step count must be in [1, 100000]");
        session->step(static_cast<std::size_t>(count));
        return {{"session", session->id()}, {"t", ms_to_json(session->now())}};
      }
      if (op == "close") {
        registry_.close(session->id());
        subscriptions_.erase(session->id());
        return {{"session", session->id()}};
      }
      throw Error(ErrorKind::kInvalidInput, "unknown op '" + op + "'");
    }

    const int fd_;
    SessionRegistry& registry_;
    std::thread reader_, writer_;
    std::mutex out_mu_;
    std::condition_variable out_cv_;
    std::deque<std::string> out_;
    bool closing_ = false;
    std::atomic<bool> finished_{false};
    std::map<std::string, std::uint64_t> subscriptions_;  // reader thread only
  };

  void accept_loop() {
    while (running_) {
      pollfd p{listen_fd_, POLLIN, 0};
      const int ready = ::poll(&p, 1, 100);
      reap();
      if (ready <= 0) continue;
      const int fd = ::accept(listen_fd_, nullptr, nullptr);
      if (fd < 0) continue;
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
      auto conn = std::make_shared<Connection>(fd, registry_);
      {
        std::lock_guard lock(conns_mu_);
        conns_.push_back(conn);
      }
      conn->run();
    }
  }

  void reap() {
    std::list<std::shared_ptr<Connection>> done;
    {
      std::lock_guard lock(conns_mu_);
      for (auto it = conns_.begin(); it != conns_.end();) {
        if ((*it)->finished()) {
          done.push_back(*it);
          it = conns_.erase(it);
        } else {
          ++it;
        }
      }
    }
    for (auto& c : done) c->join();
  }

  void tick_loop() {
    using Clock = std::chrono::steady_clock;
    std::map<std::string, Clock::time_point> due;
    while (running_) {
      const auto now = Clock::now();
      for (const auto& s : registry_.all()) {
        if (!s->playing()) {
          due.erase(s->id());
          continue;
        }
        auto [it, fresh] = due.try_emplace(s->id(), now + std::chrono::milliseconds(s->tick_ms()));
        if (fresh || now < it->second) continue;
        it->second += std::chrono::milliseconds(s->tick_ms());
        try {
          s->step();
        } catch (const Error&) {
          due.erase(it);
        }
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(5));
    }
  }

  void start_http() {
    http_ = std::make_unique<httplib::Server>();
    http_->Get("/health", [this](const httplib::Request&, httplib::Response& res) {
      json ids = json::array();
      for (const auto& s : registry_.all())
        if (!s->closed()) ids.push_back(s->id());
      res.set_content(json{{"status", "ok"}, {"sessions", ids}}.dump(), "application/json");
    });
    http_->Get(R"(/sessions/([^/]+)/snapshot)", [this](const httplib::Request& req, httplib::Response& res) {
      try {
        res.set_content(registry_.get(req.matches[1])->snapshot().dump(), "application/json");
      } catch (const Error& e) {
        res.status = 404;
        res.set_content(detail::error_frame(to_string(e.kind()), e.what(), nullptr).dump(), "application/json");
      }
    });
    if (options_.http_port == 0) {
      http_port_ = http_->bind_to_any_port(options_.host);
    } else {
      http_port_ = http_->bind_to_port(options_.host, options_.http_port) ? options_.http_port : -1;
    }
    if (http_port_ < 0) {
      throw Error(ErrorKind::kIo, "cannot bind HTTP port " + std::to_string(options_.http_port));
    }
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
  }

  SessionRegistry& registry_;
  ServerOptions options_;
  std::atomic<bool> running_{false};
  int listen_fd_ = -1;
  int port_ = -1;
  int http_port_ = -1;
  std::thread accept_thread_, ticker_thread_, http_thread_;
  std::unique_ptr<httplib::Server> http_;
  std::mutex conns_mu_;
  std::list<std::shared_ptr<Connection>> conns_;
};

/// Blocking frame client used by the tests and the CLI.
class FrameClient {
 public:
  FrameClient(const std::string& host, int port) {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    ::inet_pton(AF_INET, host.c_str(), &addr.sin_addr);
    if (fd_ < 0 || ::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
      const std::string why = std::strerror(errno);
      if (fd_ >= 0) ::close(fd_);
      throw Error(ErrorKind::kIo, "connect to " + host + ":" + std::to_string(port) + ": " + why);
    }
  }
  FrameClient(const FrameClient&) = delete;
  FrameClient& operator=(const FrameClient&) = delete;
  ~FrameClient() { ::close(fd_); }

  void send(const json& request) { send_raw(encode_frame(request.dump())); }

  void send_raw(const std::string& bytes) {
    if (!detail::send_all(fd_, bytes)) throw Error(ErrorKind::kIo, "send failed");
  }

  /// Next frame body, or nullopt on timeout or end of stream.
  std::optional<std::string> recv_raw(int timeout_ms = 5000) {
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(timeout_ms);
    for (;;) {
      if (auto body = decoder_.next()) return body;
      const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
      if (left.count() <= 0) return std::nullopt;
      pollfd p{fd_, POLLIN, 0};
      if (::poll(&p, 1, static_cast<int>(left.count())) <= 0) return std::nullopt;
      char buf[4096];
      const ssize_t n = ::recv(fd_, buf, sizeof buf, 0);
      if (n <= 0) return std::nullopt;
      decoder_.feed(buf, static_cast<std::size_t>(n));
    }
  }

  std::optional<json> recv(int timeout_ms = 5000) {
    auto body = recv_raw(timeout_ms);
    if (!body) return std::nullopt;
    return json::parse(*body);
  }

  /// Reads frames until one of `kind` arrives; earlier frames go to `skipped`.
  std::optional<json> recv_kind(const std::string& kind, std::vector<json>* skipped = nullptr, int timeout_ms = 5000) {
    while (auto f = recv(timeout_ms)) {
      if ((*f)["kind"] == kind) return f;
      if (skipped) skipped->push_back(std::move(*f));
    }
    return std::nullopt;
  }

 private:
  int fd_ = -1;
  FrameDecoder decoder_;
};

}  // namespace dhung

#endif  // DHUNG_SERVER_HPP_
