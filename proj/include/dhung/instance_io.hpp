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

#ifndef DHUNG_INSTANCE_IO_HPP_
#define DHUNG_INSTANCE_IO_HPP_

#include <cctype>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dhung/core.hpp"
#include "dhung/lsap.hpp"

namespace dhung {

/// A cost instance as read from disk, before balancing. Pairs the file marks
/// as infeasible are simply absent from `costs`.
struct Instance {
  std::size_t n_robots = 0;
  std::size_t n_targets = 0;
  std::int64_t scale = kDefaultScale;
  std::vector<Edge> costs;

  /// Square, complete graph; also enforces BIG_M > r * max_cost whenever the
  /// result contains BIG_M cells.
  BipartiteGraph to_graph() const;
};

namespace detail {

__extension__ typedef unsigned __int128 Wide;

[[noreturn]] inline void bad_input(const std::string& what) {
  throw Error(ErrorKind::kInvalidInput, what);
}

}  // namespace detail

/// Exact fixed-point conversion of a non-negative decimal literal (e.g.
/// "12.3455", "7", "1e-3") to round_half_up(value * scale).
inline std::int64_t scale_decimal(std::string_view text, std::int64_t scale) {
  if (scale < 1 || scale > 1'000'000'000) detail::bad_input("scale must be in [1, 1e9]");
  std::string digits;
  std::int64_t exponent = 0;
  std::size_t k = 0;
  if (k < text.size() && text[k] == '+') ++k;
  if (k < text.size() && text[k] == '-') detail::bad_input("negative cost '" + std::string(text) + "'");
  bool any = false, dot = false;
  for (; k < text.size(); ++k) {
    const char c = text[k];
    if (std::isdigit(static_cast<unsigned char>(c))) {
      digits += c;
      any = true;
      if (dot) --exponent;
    } else if (c == '.' && !dot) {
      dot = true;
    } else {
      break;
    }
  }
  if (!any) detail::bad_input("not a number: '" + std::string(text) + "'");
  if (k < text.size() && (text[k] == 'e' || text[k] == 'E')) {
    ++k;
    bool neg = false;
    if (k < text.size() && (text[k] == '+' || text[k] == '-')) neg = text[k++] == '-';
    std::int64_t e = 0;
    const std::size_t start = k;
    for (; k < text.size() && std::isdigit(static_cast<unsigned char>(text[k])); ++k) {
      e = e * 10 + (text[k] - '0');
      if (e > 1000) detail::bad_input("exponent too large in '" + std::string(text) + "'");
    }
    if (k == start) detail::bad_input("not a number: '" + std::string(text) + "'");
    exponent += neg ? -e : e;
  }
  if (k != text.size()) detail::bad_input("not a number: '" + std::string(text) + "'");

  const std::size_t lead = digits.find_first_not_of('0');
  if (lead == std::string::npos) return 0;
  digits.erase(0, lead);
  // Drop trailing zeros into the exponent so the mantissa stays short.
  while (digits.size() > 1 && digits.back() == '0') {
    digits.pop_back();
    ++exponent;
  }
  if (digits.size() > 18) detail::bad_input("too many significant digits in '" + std::string(text) + "'");

  detail::Wide num = std::stoull(digits);
  num *= static_cast<std::uint64_t>(scale);
  const detail::Wide limit = detail::Wide{1} << 62;
  for (; exponent > 0; --exponent) {
    num *= 10;
    if (num > limit) detail::bad_input("cost too large: '" + std::string(text) + "'");
  }
  if (exponent == 0) {
    if (num > limit) detail::bad_input("cost too large: '" + std::string(text) + "'");
    return static_cast<std::int64_t>(num);
  }
  if (exponent < -38) return 0;
  detail::Wide den = 1;
  for (; exponent < 0; ++exponent) den *= 10;
  const detail::Wide rounded = (2 * num + den) / (2 * den);
  if (rounded > limit) detail::bad_input("cost too large: '" + std::string(text) + "'");
  return static_cast<std::int64_t>(rounded);
}

namespace detail {

inline Cost checked_cost(std::string_view text, std::int64_t scale) {
  const std::int64_t v = scale_decimal(text, scale);
  if (v >= kBigM)
    bad_input("scaled cost " + std::to_string(v) + " of '" + std::string(text) +
              "' is not below BIG_M = " + std::to_string(kBigM));
  return static_cast<Cost>(v);
}

}  // namespace detail

inline BipartiteGraph Instance::to_graph() const {
  BipartiteGraph g = balance_and_complete(costs, n_robots, n_targets);
  if (g.contains_big_m()) {
    const std::int64_t bound = static_cast<std::int64_t>(g.n_robots()) * g.max_finite_weight();
    if (bound >= kBigM)
      detail::bad_input("BIG_M must exceed r * max_cost = " + std::to_string(bound) +
                        "; lower the scale or the costs");
  }
  return g;
}

/// Plain-text matrix: one robot per line, whitespace-separated decimal
/// costs, "M" for a pair the robot cannot serve. Blank lines and lines
/// starting with '#' are ignored.
inline Instance parse_matrix_text(std::string_view text, std::int64_t scale = kDefaultScale) {
  Instance inst;
  inst.scale = scale;
  std::istringstream lines{std::string(text)};
  std::string line;
  std::size_t row = 0;
  bool first = true;
  while (std::getline(lines, line)) {
    std::istringstream tokens(line);
    std::string tok;
    std::vector<std::string> cells;
    while (tokens >> tok) cells.push_back(tok);
    if (cells.empty() || cells.front().front() == '#') continue;
    if (first) {
      inst.n_targets = cells.size();
      first = false;
    } else if (cells.size() != inst.n_targets) {
      detail::bad_input("row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                        " entries, expected " + std::to_string(inst.n_targets));
    }
    for (std::size_t j = 0; j < cells.size(); ++j)
      if (cells[j] != "M") inst.costs.push_back({row, j, detail::checked_cost(cells[j], scale)});
    ++row;
  }
  inst.n_robots = row;
  if (row == 0) detail::bad_input("empty cost matrix");
  return inst;
}

/// Structured instance: {"n_robots", "n_targets", "entries": [[i, j, cost]],
/// "scale"}. Costs may be JSON numbers or decimal strings; "M" marks an
/// infeasible pair, as does a missing entry.
inline Instance parse_instance_json(const nlohmann::json& doc) {
  if (!doc.is_object()) detail::bad_input("instance must be a JSON object");
  Instance inst;
  try {
    inst.n_robots = doc.at("n_robots").get<std::size_t>();
    inst.n_targets = doc.at("n_targets").get<std::size_t>();
    inst.scale = doc.value("scale", kDefaultScale);
    for (const auto& e : doc.at("entries")) {
      if (!e.is_array() || e.size() != 3) detail::bad_input("entry must be [i, j, cost]");
      const auto i = e[0].get<std::size_t>();
      const auto j = e[1].get<std::size_t>();
      const std::string text = e[2].is_string() ? e[2].get<std::string>() : e[2].dump();
      if (text == "M") continue;
      if (i >= inst.n_robots || j >= inst.n_targets) detail::bad_input("entry index out of range");
      inst.costs.push_back({i, j, detail::checked_cost(text, inst.scale)});
    }
  } catch (const nlohmann::json::exception& ex) {
    detail::bad_input(std::string("malformed instance: ") + ex.what());
  }
  return inst;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline nlohmann::json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& ex) {
    throw Error(ErrorKind::kInvalidInput, origin + ": " + ex.what());
  }
}

/// Loads either format; JSON is recognised by a leading '{'.
inline Instance load_instance(const std::string& path, std::int64_t matrix_scale = kDefaultScale) {
  const std::string text = read_file(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{')
    return parse_instance_json(parse_json_text(text, path));
  return parse_matrix_text(text, matrix_scale);
}

}  // namespace dhung

#endif  // DHUNG_INSTANCE_IO_HPP_
