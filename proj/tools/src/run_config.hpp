#pragma once

#include <optional>
#include <string>

#include "gbu/common/json.hpp"
#include "gbu/eval/evaluate.hpp"
#include "gbu/model/config.hpp"
#include "gbu/train/trainer.hpp"

namespace gbu::cli {

/// Everything a run needs. Canonical JSON (to_json) has every key filled in
/// and is what the config hash covers.
struct RunConfig {
  model::ModelConfig model = model::small_config(model::Variant::kGated);

  double lr = 2e-4;
  std::size_t epochs = 500;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  double pretrain_fraction = 0.2;
  double clip_norm = 0.0;

  train::GateMode gate_mode = train::GateMode::kGradSim;
  Json manual_table = Json::object();

  std::string data_dir;
  double split_ratio = 1.0;  // 1 trains on every subject
  std::uint64_t split_seed = 0;
  bool normalize = true;

  eval::Aggregation aggregation = eval::Aggregation::kSegment;
  std::optional<std::string> group_var;
};

/// model.preset picks the base ("full", "small", "tiny"; default "small") before
/// the other model keys apply. train.lambda/lambda_u and gate.n_heads feed the
/// model config; giving a different value in model{} as well is kConfig.
RunConfig run_config_from_json(const Json& j);
Json to_json(const RunConfig& config);
std::string run_config_hash(const RunConfig& config);

/// Reads and parses; kIo / kConfig on failure.
RunConfig load_run_config(const std::string& path);

train::TrainOptions train_options(const RunConfig& config);

}  // namespace gbu::cli
