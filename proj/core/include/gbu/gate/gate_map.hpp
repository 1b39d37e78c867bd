#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gbu/common/json.hpp"

namespace gbu::gate {

/// Label value for seconds without an inaccessible-state annotation.
inline constexpr std::uint8_t kMissingU = 255;
/// Missing seconds are routed like this state (non-REM sleep, the majority stage).
inline constexpr std::uint8_t kMissingFallbackU = 2;

/// Total map from (accessible state v, inaccessible state u) to a head index in 1..N.
struct GateMap {
  std::size_t n_heads = 1;
  std::size_t v_states = 0;
  std::size_t u_states = 0;
  std::map<std::pair<int, int>, int> table;
  Json provenance = Json::object();

  /// Throws kLookup for an unmapped pair.
  [[nodiscard]] int lookup(int v, int u) const;
  /// s[t] = table[(v, u[t])], with kMissingU replaced by kMissingFallbackU.
  [[nodiscard]] std::vector<int> lookup_series(int v, std::span<const std::uint8_t> u) const;
  /// Every pair in v_states x u_states mapped, image inside 1..n_heads.
  void validate() const;
};

/// Head v * u_states + u + 1 for every pair.
GateMap identity_gate_map(std::size_t v_states, std::size_t u_states);
/// Every pair to head 1.
GateMap single_head_gate_map(std::size_t v_states, std::size_t u_states);
/// Table written as {"v=0,u=1": head, ...}; must be total over v_states x u_states.
GateMap manual_gate_map(std::size_t n_heads, std::size_t v_states, std::size_t u_states, const Json& table);
/// Gender x {awake, REM, non-REM} with one head per composite state.
GateMap six_category_gate_map();

std::string pair_key(int v, int u);

Json to_json(const GateMap& map);
GateMap gate_map_from_json(const Json& j);

}  // namespace gbu::gate
