#include "gbu/gate/gate_map.hpp"

#include <cstdio>

namespace gbu::gate {

std::string pair_key(int v, int u) { return "v=" + std::to_string(v) + ",u=" + std::to_string(u); }

namespace {

std::pair<int, int> parse_pair_key(const std::string& key) {
  int v = 0, u = 0;
  char tail = 0;
  const int got = std::sscanf(key.c_str(), "v=%d,u=%d%c", &v, &u, &tail);
  require(got == 2, ErrorCode::kConfig, "gate map: malformed table key \"" + key + "\"");
  return {v, u};
}

}  // namespace

int GateMap::lookup(int v, int u) const {
  const auto it = table.find({v, u});
  require(it != table.end(), ErrorCode::kLookup, "gate map has no entry for (" + pair_key(v, u) + ")");
  return it->second;
}

std::vector<int> GateMap::lookup_series(int v, std::span<const std::uint8_t> u) const {
  std::vector<int> s(u.size());
  for (std::size_t t = 0; t < u.size(); ++t) s[t] = lookup(v, u[t] == kMissingU ? kMissingFallbackU : u[t]);
  return s;
}

void GateMap::validate() const {
  require(n_heads >= 1, ErrorCode::kConfig, "gate map: n_heads must be >= 1");
  for (std::size_t v = 0; v < v_states; ++v)
    for (std::size_t u = 0; u < u_states; ++u)
      require(table.count({static_cast<int>(v), static_cast<int>(u)}) > 0, ErrorCode::kConfig,
              "gate map is not total: missing " + pair_key(static_cast<int>(v), static_cast<int>(u)));
  for (const auto& [key, head] : table) {
    require(head >= 1 && static_cast<std::size_t>(head) <= n_heads, ErrorCode::kConfig,
            "gate map: head " + std::to_string(head) + " outside 1.." + std::to_string(n_heads));
    require(key.first >= 0 && static_cast<std::size_t>(key.first) < v_states && key.second >= 0 &&
                static_cast<std::size_t>(key.second) < u_states,
            ErrorCode::kConfig, "gate map: entry outside the declared state space");
  }
}

GateMap identity_gate_map(std::size_t v_states, std::size_t u_states) {
  GateMap map{v_states * u_states, v_states, u_states, {}, Json{{"kind", "identity"}}};
  for (std::size_t v = 0; v < v_states; ++v)
    for (std::size_t u = 0; u < u_states; ++u)
      map.table[{static_cast<int>(v), static_cast<int>(u)}] = static_cast<int>(v * u_states + u + 1);
  return map;
}

GateMap single_head_gate_map(std::size_t v_states, std::size_t u_states) {
  GateMap map{1, v_states, u_states, {}, Json{{"kind", "manual"}}};
  for (std::size_t v = 0; v < v_states; ++v)
    for (std::size_t u = 0; u < u_states; ++u) map.table[{static_cast<int>(v), static_cast<int>(u)}] = 1;
  return map;
}

GateMap manual_gate_map(std::size_t n_heads, std::size_t v_states, std::size_t u_states, const Json& table) {
  require(table.is_object(), ErrorCode::kConfig, "manual gate table must be an object");
  GateMap map{n_heads, v_states, u_states, {}, Json{{"kind", "manual"}}};
  for (const auto& item : table.items()) {
    require(item.value().is_number_integer(), ErrorCode::kConfig, "gate map: head indices must be integers");
    map.table[parse_pair_key(item.key())] = item.value().get<int>();
  }
  map.validate();
  return map;
}

GateMap six_category_gate_map() {
  GateMap map = identity_gate_map(2, 3);
  Json labels = Json::object();
  const char* genders[] = {"male", "female"};
  const char* stages[] = {"awake", "REM", "non-REM"};
  for (int v = 0; v < 2; ++v)
    for (int u = 0; u < 3; ++u) labels[pair_key(v, u)] = std::string(genders[v]) + ", " + stages[u];
  map.provenance = Json{{"kind", "manual"}, {"labels", labels}};
  return map;
}

Json to_json(const GateMap& map) {
  Json table = Json::object();
  for (const auto& [key, head] : map.table) table[pair_key(key.first, key.second)] = head;
  return Json{{"n_heads", map.n_heads},
              {"v_states", map.v_states},
              {"u_states", map.u_states},
              {"table", table},
              {"provenance", map.provenance}};
}

GateMap gate_map_from_json(const Json& j) {
  static constexpr std::string_view where = "gate map";
  reject_unknown_keys(j, {"n_heads", "v_states", "u_states", "table", "provenance", "config_hash", "tool_version"},
                      where);
  require(j.contains("n_heads") && j.contains("table"), ErrorCode::kConfig, "gate map needs n_heads and table");
  GateMap map;
  map.n_heads = json_get<std::size_t>(j, "n_heads", 0, where);
  map.provenance = j.value("provenance", Json::object());
  int max_v = -1, max_u = -1;
  require(j.at("table").is_object(), ErrorCode::kConfig, "gate map: table must be an object");
  for (const auto& item : j.at("table").items()) {
    const auto key = parse_pair_key(item.key());
    require(item.value().is_number_integer(), ErrorCode::kConfig, "gate map: head indices must be integers");
    map.table[key] = item.value().get<int>();
    max_v = std::max(max_v, key.first);
    max_u = std::max(max_u, key.second);
  }
  map.v_states = json_get<std::size_t>(j, "v_states", static_cast<std::size_t>(max_v + 1), where);
  map.u_states = json_get<std::size_t>(j, "u_states", static_cast<std::size_t>(max_u + 1), where);
  map.validate();
  return map;
}

}  // namespace gbu::gate
