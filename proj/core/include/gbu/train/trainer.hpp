#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbu/data/record.hpp"
#include "gbu/gate/gate_map.hpp"
#include "gbu/gate/similarity.hpp"
#include "gbu/model/checkpoint.hpp"
#include "gbu/model/model.hpp"
#include "gbu/train/adam.hpp"

namespace gbu::train {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based, counted across phases
  std::string phase = "train";
  double loss = 0.0;
  double l1 = 0.0;
  double corr = 0.0;
  double ce = 0.0;
  std::size_t steps = 0;
  std::size_t skipped = 0;  // steps dropped for a non-finite loss
  double wall_s = 0.0;
  std::uint64_t seed = 0;
  std::string config_hash;
};

Json to_json(const EpochLog& entry);

struct TrainLog {
  std::vector<EpochLog> epochs;
  /// One JSON object per line.
  void write_jsonl(const std::filesystem::path& path) const;
};

struct TrainOptions {
  std::size_t epochs = 500;
  AdamOptions adam;
  std::size_t batch = 1;
  std::uint64_t seed = 0;
  /// Global gradient-norm clip; 0 disables it until a non-finite loss turns it on at 10.
  double clip_norm = 0.0;
  bool normalize = true;
  std::string v_var = "gender";
  /// Write <checkpoint_dir>/epoch_NNNN.gbu1 every K epochs (0: never).
  std::size_t checkpoint_every = 0;
  std::filesystem::path checkpoint_dir;
  std::function<void(const EpochLog&)> on_epoch;
};

struct TrainState {
  model::Model<float> model;
  AdamState<float> adam;
  std::size_t epochs_done = 0;
  double clip_norm = 0.0;
  std::optional<gate::GateMap> gate;
};

/// Fresh model from (config, seed). Gated models get `gate`, or the identity
/// map when it fits N, or kConfig.
TrainState init_train_state(const model::ModelConfig& config, const TrainOptions& options,
                            std::optional<gate::GateMap> gate = std::nullopt);

/// Runs epochs epochs_done+1 .. until; one Adam step per record per epoch,
/// order shuffled from (seed, epoch).
void train_epochs(TrainState& state, std::span<const data::Record> records, const TrainOptions& options,
                  std::size_t until, TrainLog& log, const std::string& phase = "train");

struct TrainResult {
  TrainState state;
  TrainLog log;
};

TrainResult train(const model::ModelConfig& config, std::span<const data::Record> records,
                  const TrainOptions& options, std::optional<gate::GateMap> gate = std::nullopt);

/// Model and Adam state with N heads, every head (and its moments) copied from head 1.
TrainState expand_heads(const TrainState& state, std::size_t n_heads, gate::GateMap gate);

enum class GateMode { kIdentity, kManual, kGradSim };
GateMode parse_gate_mode(const std::string& text);
std::string_view to_string(GateMode mode);

struct PipelineOptions {
  TrainOptions train;
  double pretrain_fraction = 0.2;
  GateMode gate_mode = GateMode::kGradSim;
  Json manual_table = Json::object();
  gate::StateGradientOptions gradients;
};

struct PipelineResult {
  TrainState state;
  TrainLog log;
  gate::GateMap gate;
};

/// Phase 1 trains a one-head model, phase 2 builds the gate map, phase 3
/// copies the head N times and finishes the epoch budget with true-u gating.
PipelineResult train_gated_pipeline(const model::ModelConfig& config, std::span<const data::Record> records,
                                    const PipelineOptions& options);

/// GBU1 file with Adam moments as state tensors and the step, epoch count,
/// clip setting and gate map in the manifest.
void save_train_state(const std::filesystem::path& path, const TrainState& state, const Json& extra = Json::object());
TrainState load_train_state(const std::filesystem::path& path);

/// Records ready for the model: cropped, normalized breathing, normalized targets.
struct Prepared {
  nn::Tensor<float> x;
  std::vector<float> y;
  std::vector<std::uint8_t> u;
  int v = 0;
};
Prepared prepare(const model::ModelConfig& config, const data::Record& record, bool normalize,
                 const std::string& v_var = "gender");

}  // namespace gbu::train
