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

#ifndef DHUNG_CORE_HPP_
#define DHUNG_CORE_HPP_

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dhung {

/// Fixed-point cost in wire units. Finite weights lie in [0, kBigM).
using Cost = std::int32_t;

/// Sentinel weight for a forbidden robot/target pair. Fits the 2-byte wire
/// encoding used for weights and labels.
inline constexpr Cost kBigM = (1 << 15) - 1;

/// Default decimal-to-fixed-point scale for external cost files.
inline constexpr std::int64_t kDefaultScale = 1000;

/// Machine-readable failure categories. The CLI prints these verbatim.
enum class ErrorKind {
  kInvalidInput,
  kNoSuchEdge,
  kLabelingInfeasible,
  kGraphNotNormalized,
  kMoreTargetsThanRobots,
  kOracleSizeLimit,
  kProtocolViolation,
  kInternal,
  kCodec,
  kNontermination,
  kInfeasible,
  kRejectedGuard,
  kRejectedInfeasible,
  kUnknownSession,
  kIo,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid-input";
    case ErrorKind::kNoSuchEdge: return "no-such-edge";
    case ErrorKind::kLabelingInfeasible: return "labeling-infeasible";
    case ErrorKind::kGraphNotNormalized: return "graph-not-normalized";
    case ErrorKind::kMoreTargetsThanRobots: return "more-targets-than-robots";
    case ErrorKind::kOracleSizeLimit: return "oracle-size-limit";
    case ErrorKind::kProtocolViolation: return "protocol-violation";
    case ErrorKind::kInternal: return "internal";
    case ErrorKind::kCodec: return "codec";
    case ErrorKind::kNontermination: return "nontermination";
    case ErrorKind::kInfeasible: return "infeasible";
    case ErrorKind::kRejectedGuard: return "guard";
    case ErrorKind::kRejectedInfeasible: return "infeasible";
    case ErrorKind::kUnknownSession: return "unknown-session";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// A weighted robot/target pair. Ordered by (robot, target) so edge sets
/// have one canonical iteration order.
struct Edge {
  std::size_t robot = 0;
  std::size_t target = 0;
  Cost weight = 0;

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge& a, const Edge& b) {
    if (auto c = a.robot <=> b.robot; c != 0) return c;
    if (auto c = a.target <=> b.target; c != 0) return c;
    return a.weight <=> b.weight;
  }
};

}  // namespace dhung

#endif  // DHUNG_CORE_HPP_
