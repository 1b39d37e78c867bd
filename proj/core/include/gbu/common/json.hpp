#pragma once

#include <initializer_list>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "gbu/common/error.hpp"

namespace gbu {

using Json = nlohmann::json;

/// Throws kConfig naming the first key of `obj` not listed in `known`.
void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> known, std::string_view where);

/// Reads obj[key] as V, or returns `fallback` when absent. Type mismatches are kConfig.
template <typename V>
V json_get(const Json& obj, const std::string& key, V fallback, std::string_view where) {
  const auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->template get<V>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfig, std::string(where) + "." + key + ": " + e.what());
  }
}

Json parse_json_file(const std::string& path);
void write_json_file(const std::string& path, const Json& value);

}  // namespace gbu
