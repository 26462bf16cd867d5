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

#ifndef DHUNG_CODEC_HPP_
#define DHUNG_CODEC_HPP_

#include <bit>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "dhung/core.hpp"
#include "dhung/protocol.hpp"

namespace dhung {

// Canonical message layout (all integers little-endian):
//
//   frame header (not part of the payload accounting)
//     sender        u16
//     n_eq          u16   tight edges, sent first
//     n_cand        u16   candidate edges, sent after the tight edges
//   payload
//     counter       k bytes, unsigned, stores counter + 1 (so -1 -> 0)
//     labels        2r x i16: robots 0..r-1, then targets 0..r-1
//     edges         (n_eq + n_cand) x { pair: k bytes, weight: u16 }
//
// k = max(1, ceil(log2(r) / 4)). An edge pair packs robot and target into
// b = max(1, ceil(log2 r)) bits each as (robot << b) | target; 2b <= 8k
// always holds. A full lean graph (2r - 1 edges) gives a payload of
// 2r * (4 + k) - 2 bytes.

inline constexpr std::size_t kFrameHeaderBytes = 6;

inline std::size_t index_bits(std::size_t r) {
  return r <= 2 ? 1 : static_cast<std::size_t>(std::bit_width(r - 1));
}

inline std::size_t index_bytes(std::size_t r) {
  const std::size_t bits = r <= 1 ? 0 : static_cast<std::size_t>(std::bit_width(r - 1));
  return std::max<std::size_t>(1, (bits + 3) / 4);
}

inline std::size_t payload_bytes(std::size_t r, std::size_t n_edges) {
  const std::size_t k = index_bytes(r);
  return k + 4 * r + n_edges * (k + 2);
}

/// Payload size of a state whose lean graph holds the maximum 2r - 1 edges.
inline std::size_t full_state_payload_bytes(std::size_t r) {
  return 2 * r * (4 + index_bytes(r)) - 2;
}

namespace detail {

inline void put_le(std::vector<std::uint8_t>& out, std::uint64_t v, std::size_t n) {
  for (std::size_t b = 0; b < n; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t get_le(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw Error(ErrorKind::kCodec, "truncated buffer");
    std::uint64_t v = 0;
    for (std::size_t b = 0; b < n; ++b) v |= std::uint64_t{bytes_[pos_ + b]} << (8 * b);
    pos_ += n;
    return v;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

[[noreturn]] inline void codec_error(const char* what) { throw Error(ErrorKind::kCodec, what); }

}  // namespace detail

inline std::vector<std::uint8_t> encode_message(const WireMessage& msg, std::size_t r) {
  const RobotState& s = msg.state;
  const std::size_t k = index_bytes(r);
  const std::size_t bits = index_bits(r);
  const std::size_t n_edges = s.lean.size();
  if (r == 0 || r > 0xFFFF || msg.sender >= r) detail::codec_error("sender out of range");
  if (s.labeling.robots.size() != r || s.labeling.targets.size() != r)
    detail::codec_error("labeling size does not match r");
  if (n_edges > 2 * r - 1) detail::codec_error("lean graph too large");
  if (s.counter < -1 || (k < 8 && static_cast<std::uint64_t>(s.counter + 1) >= (1ULL << (8 * k))))
    detail::codec_error("counter does not fit");

  std::vector<std::uint8_t> out;
  out.reserve(kFrameHeaderBytes + payload_bytes(r, n_edges));
  detail::put_le(out, msg.sender, 2);
  detail::put_le(out, s.lean.eq_edges.size(), 2);
  detail::put_le(out, s.lean.cand_edges.size(), 2);
  detail::put_le(out, static_cast<std::uint64_t>(s.counter + 1), k);
  for (const auto* labels : {&s.labeling.robots, &s.labeling.targets})
    for (Cost v : *labels) {
      if (v < INT16_MIN || v > INT16_MAX) detail::codec_error("label does not fit 16 bits");
      detail::put_le(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)), 2);
    }
  for (const auto* list : {&s.lean.eq_edges, &s.lean.cand_edges})
    for (const Edge& e : *list) {
      if (e.robot >= r || e.target >= r) detail::codec_error("index out of range");
      if (e.weight < 0 || e.weight > kBigM) detail::codec_error("weight exceeds BIG_M");
      detail::put_le(out, (std::uint64_t{e.robot} << bits) | e.target, k);
      detail::put_le(out, static_cast<std::uint64_t>(e.weight), 2);
    }
  return out;
}

inline WireMessage decode_message(std::span<const std::uint8_t> bytes, std::size_t r) {
  if (r == 0 || r > 0xFFFF) detail::codec_error("unsupported r");
  const std::size_t k = index_bytes(r);
  const std::size_t bits = index_bits(r);
  detail::Reader in(bytes);

  WireMessage msg;
  msg.sender = in.get_le(2);
  const std::size_t n_eq = in.get_le(2);
  const std::size_t n_cand = in.get_le(2);
  if (msg.sender >= r) detail::codec_error("index out of range");
  if (in.remaining() < payload_bytes(r, n_eq + n_cand)) detail::codec_error("truncated buffer");
  if (in.remaining() > payload_bytes(r, n_eq + n_cand)) detail::codec_error("trailing bytes");

  RobotState& s = msg.state;
  s.counter = static_cast<std::int64_t>(in.get_le(k)) - 1;
  s.labeling = VertexLabeling(r, r);
  for (auto* labels : {&s.labeling.robots, &s.labeling.targets})
    for (Cost& v : *labels) v = static_cast<std::int16_t>(static_cast<std::uint16_t>(in.get_le(2)));
  const std::uint64_t mask = (std::uint64_t{1} << bits) - 1;
  auto read_edges = [&](std::vector<Edge>& list, std::size_t n) {
    for (std::size_t e = 0; e < n; ++e) {
      const std::uint64_t pair = in.get_le(k);
      const std::uint64_t i = pair >> bits;
      const std::uint64_t j = pair & mask;
      const std::uint64_t w = in.get_le(2);
      if (i >= r || j >= r) detail::codec_error("index out of range");
      if (w > static_cast<std::uint64_t>(kBigM)) detail::codec_error("weight exceeds BIG_M");
      list.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                      static_cast<Cost>(w)});
    }
  };
  read_edges(s.lean.eq_edges, n_eq);
  read_edges(s.lean.cand_edges, n_cand);
  return msg;
}

}  // namespace dhung

#endif  // DHUNG_CODEC_HPP_
