#include "gbu/model/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gbu/common/hash.hpp"

namespace gbu::model {

static_assert(std::endian::native == std::endian::little, "GBU1 I/O assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'G', 'B', 'U', '1'};

std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::kIo, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void append_tensor(Json& list, std::string& payload, const std::string& name, const nn::Tensor<float>& t,
                   bool trainable, const char* group) {
  list.push_back(Json{{"name", name},
                      {"shape", t.shape()},
                      {"byte_offset", payload.size()},
                      {"trainable", trainable},
                      {"group", group}});
  const auto& v = t.values();
  payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  Json manifest = ckpt.metadata.is_object() ? ckpt.metadata : Json::object();
  const Json config = to_json(ckpt.config);
  manifest["config"] = config;
  manifest["config_hash"] = config_hash(config);
  manifest["tool_version"] = std::string(kToolVersion);
  Json tensors = Json::array();
  std::string payload;
  for (const auto& [name, entry] : ckpt.params)
    append_tensor(tensors, payload, name, entry.tensor, entry.trainable, entry.trainable ? "param" : "buffer");
  for (const auto& [name, tensor] : ckpt.state) append_tensor(tensors, payload, name, tensor, false, "state");
  manifest["tensors"] = tensors;

  const std::string header = manifest.dump();
  const auto header_len = static_cast<std::uint32_t>(header.size());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path);
  out.write(kMagic, 4);
  out.write(reinterpret_cast<const char*>(&header_len), 4);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  require(out.good(), ErrorCode::kIo, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::vector<char> bytes = read_file(path);
  require(bytes.size() >= 4 && std::memcmp(bytes.data(), kMagic, 4) == 0, ErrorCode::kBadMagic,
          path + " is not a GBU1 checkpoint");
  require(bytes.size() >= 8, ErrorCode::kTruncated, path + ": truncated header");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  require(bytes.size() >= 8 + static_cast<std::size_t>(header_len), ErrorCode::kTruncated,
          path + ": truncated manifest");
  Json manifest;
  try {
    manifest = Json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
  } catch (const nlohmann::json::parse_error& e) {
    fail(ErrorCode::kTruncated, path + ": unreadable manifest: " + e.what());
  }
  require(manifest.contains("config") && manifest.contains("tensors"), ErrorCode::kConfig,
          path + ": manifest lacks config or tensors");

  Checkpoint ckpt;
  ckpt.config = model_config_from_json(manifest.at("config"));
  if (manifest.contains("config_hash"))
    require(manifest.at("config_hash") == config_hash(to_json(ckpt.config)), ErrorCode::kHashMismatch,
            path + ": recorded config hash does not match the stored config");
  const char* payload = bytes.data() + 8 + header_len;
  const std::size_t payload_size = bytes.size() - 8 - header_len;
  std::size_t expected_end = 0;
  for (const auto& t : manifest.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto shape = t.at("shape").get<nn::Shape>();
    const auto offset = t.at("byte_offset").get<std::size_t>();
    const std::size_t count = nn::shape_numel(shape);
    require(offset == expected_end, ErrorCode::kLengthInconsistency, path + ": tensor " + name + " at unexpected offset");
    expected_end = offset + count * sizeof(float);
    require(expected_end <= payload_size, ErrorCode::kTruncated, path + ": payload ends inside tensor " + name);
    std::vector<float> data(count);
    std::memcpy(data.data(), payload + offset, count * sizeof(float));
    auto tensor = nn::Tensor<float>::from_data(shape, std::move(data));
    const std::string group = t.value("group", t.value("trainable", true) ? "param" : "buffer");
    if (group == "state") ckpt.state.emplace(name, std::move(tensor));
    else ckpt.params.add(name, std::move(tensor), t.at("trainable").get<bool>());
  }
  require(expected_end == payload_size, ErrorCode::kLengthInconsistency,
          path + ": " + std::to_string(payload_size - expected_end) + " trailing bytes after the last tensor");

  for (const char* key : {"config", "tensors", "config_hash", "tool_version"}) manifest.erase(key);
  ckpt.metadata = std::move(manifest);
  return ckpt;
}

std::string file_id(const std::string& path) {
  const auto bytes = read_file(path);
  return hex64(fnv1a64(std::as_bytes(std::span<const char>(bytes))));
}

}  // namespace gbu::model
