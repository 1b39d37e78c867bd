#pragma once

#include <map>
#include <string>

#include "gbu/model/config.hpp"
#include "gbu/model/param_set.hpp"

namespace gbu::model {

/// Contents of a GBU1 file.
///
/// Layout: "GBU1", u32 LE manifest length, UTF-8 JSON manifest, then every
/// tensor as little-endian float32 at its recorded byte offset. The manifest
/// holds {config, config_hash, tool_version, tensors: [{name, shape,
/// byte_offset, trainable, group}]} plus any caller-supplied metadata keys.
struct Checkpoint {
  ModelConfig config;
  ParamSet<float> params;
  /// Extra named tensors such as optimizer moments ("state" group).
  std::map<std::string, nn::Tensor<float>> state;
  /// Manifest keys other than config/tensors/config_hash/tool_version.
  Json metadata = Json::object();
};

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
/// kBadMagic, kTruncated and kLengthInconsistency for malformed files.
Checkpoint load_checkpoint(const std::string& path);

/// FNV-1a of the file bytes, as 16 hex digits.
std::string file_id(const std::string& path);

}  // namespace gbu::model
