#include "gbu/common/json.hpp"

#include <algorithm>
#include <fstream>

namespace gbu {

void reject_unknown_keys(const Json& obj, std::initializer_list<std::string_view> known, std::string_view where) {
  require(obj.is_object(), ErrorCode::kConfig, std::string(where) + ": expected a JSON object");
  for (const auto& item : obj.items()) {
    const bool ok = std::find(known.begin(), known.end(), std::string_view(item.key())) != known.end();
    require(ok, ErrorCode::kConfig, std::string(where) + ": unknown key \"" + item.key() + "\"");
  }
}

Json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kConfig, path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const Json& value) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out << value.dump(2) << '\n';
  require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

}  // namespace gbu
