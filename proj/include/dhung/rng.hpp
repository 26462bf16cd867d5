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

#ifndef DHUNG_RNG_HPP_
#define DHUNG_RNG_HPP_

#include <cstdint>
#include <initializer_list>

namespace dhung {

/// SplitMix64 (Steele, Lea, Flood 2014). Every random draw in the library
/// goes through this generator and the bounded/real helpers below, so traces
/// are reproducible across standard libraries and languages.
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) : state_(seed) {}

  constexpr std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform integer in [0, bound) by rejection; bound must be > 0.
  constexpr std::uint64_t uniform(std::uint64_t bound) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
    std::uint64_t x = next();
    while (x >= limit) x = next();
    return x % bound;
  }

  /// Uniform real in [0, 1) with 53 bits of precision.
  constexpr double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  constexpr bool bernoulli(double p) { return unit() < p; }

  /// Independent child stream keyed by `key`; the parent is not advanced.
  constexpr SplitMix64 fork(std::uint64_t key) const {
    return SplitMix64(mix(state_ ^ mix(key + 0x632BE59BD9B4E019ULL)));
  }

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Stream for a tuple of keys, e.g. (seed, round) or (seed, run, r).
constexpr SplitMix64 derive_stream(std::uint64_t seed,
                                   std::initializer_list<std::uint64_t> keys) {
  SplitMix64 g(seed);
  for (auto k : keys) g = g.fork(k);
  return g;
}

}  // namespace dhung

#endif  // DHUNG_RNG_HPP_
