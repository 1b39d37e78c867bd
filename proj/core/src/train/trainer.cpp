#include "gbu/train/trainer.hpp"

#include "gbu/common/hash.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

namespace gbu::train {

namespace {

constexpr double kAutoClipNorm = 10.0;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t epoch, std::uint64_t step, std::uint64_t tag) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), static_cast<std::uint32_t>(step),
                    static_cast<std::uint32_t>(tag)};
  return std::mt19937_64(seq);
}

double grad_norm(const model::ParamSet<float>& params) {
  double sq = 0.0;
  for (const auto& [name, e] : params)
    if (e.trainable)
      for (float g : e.tensor.grad()) sq += static_cast<double>(g) * g;
  return std::sqrt(sq);
}

void scale_grads(const model::ParamSet<float>& params, double factor) {
  for (const auto& [name, e] : params)
    if (e.trainable)
      for (float& g : e.tensor.node().grad) g = static_cast<float>(g * factor);
}

std::string model_config_hash(const model::ModelConfig& config) { return model::config_hash(model::to_json(config)); }

}  // namespace

Json to_json(const EpochLog& e) {
  return Json{{"epoch", e.epoch}, {"phase", e.phase},   {"loss", e.loss},     {"l1", e.l1},
              {"corr", e.corr},   {"ce", e.ce},         {"steps", e.steps},   {"skipped", e.skipped},
              {"wall_s", e.wall_s}, {"seed", e.seed},   {"config_hash", e.config_hash},
              {"tool_version", std::string(kToolVersion)}};
}

void TrainLog::write_jsonl(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  require(out.good(), ErrorCode::kIo, "cannot write " + path.string());
  for (const auto& e : epochs) out << to_json(e).dump() << '\n';
  require(out.good(), ErrorCode::kIo, "write failed for " + path.string());
}

Prepared prepare(const model::ModelConfig& config, const data::Record& record, bool normalize,
                 const std::string& v_var) {
  const auto quantum = static_cast<std::size_t>(config.quantum_seconds());
  require(record.duration_s % quantum == 0, ErrorCode::kLength,
          record.subject_id + ": T = " + std::to_string(record.duration_s) + " s is not a multiple of " +
              std::to_string(quantum) + " s; crop it first");
  require(record.fb == config.f_b && record.fo == config.f_o, ErrorCode::kConfig,
          record.subject_id + ": sampling rates differ from the model config");
  Prepared p;
  p.v = record.variable(v_var);
  require(p.v >= 0 && static_cast<std::size_t>(p.v) < config.v_states, ErrorCode::kValueRange,
          record.subject_id + ": " + v_var + " = " + std::to_string(p.v) + " outside the configured states");
  p.x = model::make_input<float>(config, data::model_breathing(record, normalize), p.v);
  const auto y = data::normalized_spo2(record);
  p.y.assign(y.begin(), y.end());
  p.u = record.stages;
  for (auto& s : p.u)
    require(s == gate::kMissingU || s < config.u_classes, ErrorCode::kLabel,
            record.subject_id + ": stage label outside the configured classes");
  return p;
}

TrainState init_train_state(const model::ModelConfig& config, const TrainOptions& options,
                            std::optional<gate::GateMap> gate) {
  TrainState state{model::build_model<float>(config, options.seed), AdamState<float>{options.adam}, 0,
                   options.clip_norm, std::nullopt};
  if (config.variant == model::Variant::kGated) {
    if (!gate) {
      require(config.n_gate_heads == config.v_states * config.u_classes, ErrorCode::kConfig,
              "gated model with " + std::to_string(config.n_gate_heads) + " heads needs an explicit gate map");
      gate = gate::identity_gate_map(config.v_states, config.u_classes);
    }
    gate->validate();
    require(gate->n_heads == config.n_gate_heads && gate->v_states == config.v_states &&
                gate->u_states == config.u_classes,
            ErrorCode::kConfig, "gate map does not match the model's heads or state space");
    state.gate = std::move(gate);
  }
  return state;
}

void train_epochs(TrainState& state, std::span<const data::Record> records, const TrainOptions& options,
                  std::size_t until, TrainLog& log, const std::string& phase) {
  require(!records.empty(), ErrorCode::kEmptyInput, "training set is empty");
  require(options.batch == 1, ErrorCode::kConfig, "only batch = 1 (one night per step) is supported");
  const auto& config = state.model.config;
  const std::string hash = model_config_hash(config);

  std::vector<Prepared> data;
  data.reserve(records.size());
  for (const auto& r : records) data.push_back(prepare(config, r, options.normalize, options.v_var));

  const gate::GateMap* gate = state.gate ? &*state.gate : nullptr;
  const auto source = config.variant == model::Variant::kGated ? model::GateSource::kTruth : model::GateSource::kAuto;
  state.adam.options = options.adam;

  for (std::size_t epoch = state.epochs_done + 1; epoch <= until; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto shuffle_rng = stream(options.seed, epoch, 0, 0x5u);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    EpochLog entry;
    entry.epoch = epoch;
    entry.phase = phase;
    entry.seed = options.seed;
    entry.config_hash = hash;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const auto& d = data[order[step]];
      auto act_rng = stream(options.seed, epoch, step + 1, 0xacu);
      const model::ForwardContext ctx{nn::Mode::kTrain, &act_rng, source};
      const auto prediction = model::forward(state.model, d.x, d.v, std::span<const std::uint8_t>(d.u), gate, ctx);
      const auto terms = model::variant_loss(state.model, prediction, std::span<const float>(d.y),
                                             std::span<const std::uint8_t>(d.u));
      const double loss = terms.total.item();
      state.model.params.zero_grad();
      bool finite = std::isfinite(loss);
      if (finite) {
        terms.total.backward();
        finite = std::isfinite(grad_norm(state.model.params));
      }
      if (!finite) {
        state.model.params.zero_grad();
        require(state.clip_norm == 0.0, ErrorCode::kNonFinite,
                "non-finite loss or gradient at epoch " + std::to_string(epoch) + ", step " +
                    std::to_string(step + 1) + " (record " + records[order[step]].subject_id +
                    ") with clipping already on");
        state.clip_norm = kAutoClipNorm;
        spdlog::error("non-finite loss at epoch {}, step {} (record {}): step skipped, gradient clipping enabled at {}",
                      epoch, step + 1, records[order[step]].subject_id, kAutoClipNorm);
        ++entry.skipped;
        continue;
      }
      if (state.clip_norm > 0.0) {
        const double norm = grad_norm(state.model.params);
        if (norm > state.clip_norm) scale_grads(state.model.params, state.clip_norm / norm);
      }
      adam_step(state.model.params, state.adam);
      state.model.params.zero_grad();
      entry.loss += loss;
      entry.l1 += terms.l1;
      entry.corr += terms.corr;
      entry.ce += terms.ce;
      ++entry.steps;
    }
    if (entry.steps > 0) {
      const double n = static_cast<double>(entry.steps);
      entry.loss /= n;
      entry.l1 /= n;
      entry.corr /= n;
      entry.ce /= n;
    }
    entry.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.epochs_done = epoch;
    log.epochs.push_back(entry);
    if (options.on_epoch) options.on_epoch(entry);
    if (options.checkpoint_every > 0 && epoch % options.checkpoint_every == 0 && !options.checkpoint_dir.empty()) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%04zu.gbu1", epoch);
      std::filesystem::create_directories(options.checkpoint_dir);
      save_train_state(options.checkpoint_dir / name, state);
    }
  }
}

TrainResult train(const model::ModelConfig& config, std::span<const data::Record> records,
                  const TrainOptions& options, std::optional<gate::GateMap> gate) {
  TrainResult out{init_train_state(config, options, std::move(gate)), {}};
  train_epochs(out.state, records, options, options.epochs, out.log);
  return out;
}

TrainState expand_heads(const TrainState& state, std::size_t n_heads, gate::GateMap gate) {
  require(n_heads >= 1, ErrorCode::kConfig, "n_heads must be >= 1");
  auto config = state.model.config;
  require(config.n_heads() == 1, ErrorCode::kConfig, "head expansion starts from a one-head model");
  config.variant = model::Variant::kGated;
  config.n_gate_heads = n_heads;
  config.validate();

  TrainState out{{config, {}}, AdamState<float>{state.adam.options, state.adam.step, {}, {}}, state.epochs_done,
                 state.clip_norm, std::move(gate)};
  const std::string head1 = "heads.1.";
  for (const auto& [name, e] : state.model.params) {
    const bool per_head = name.starts_with(head1);
    const std::size_t copies = per_head ? n_heads : 1;
    for (std::size_t k = 1; k <= copies; ++k) {
      const std::string target = per_head ? "heads." + std::to_string(k) + "." + name.substr(head1.size()) : name;
      out.model.params.add(target, e.tensor.clone(), e.trainable);
      if (const auto it = state.adam.m.find(name); it != state.adam.m.end()) out.adam.m[target] = it->second;
      if (const auto it = state.adam.v.find(name); it != state.adam.v.end()) out.adam.v[target] = it->second;
    }
  }
  out.gate->validate();
  require(out.gate->n_heads == n_heads, ErrorCode::kConfig, "gate map head count differs from n_heads");
  return out;
}

GateMode parse_gate_mode(const std::string& text) {
  if (text == "identity") return GateMode::kIdentity;
  if (text == "manual") return GateMode::kManual;
  if (text == "grad-sim") return GateMode::kGradSim;
  fail(ErrorCode::kConfig, "unknown gate mode '" + text + "' (identity | manual | grad-sim)");
}

std::string_view to_string(GateMode mode) {
  switch (mode) {
    case GateMode::kIdentity: return "identity";
    case GateMode::kManual: return "manual";
    case GateMode::kGradSim: return "grad-sim";
  }
  return "?";
}

PipelineResult train_gated_pipeline(const model::ModelConfig& config, std::span<const data::Record> records,
                                    const PipelineOptions& options) {
  require(config.variant == model::Variant::kGated, ErrorCode::kConfig, "pipeline needs the gated variant");
  require(options.pretrain_fraction > 0.0 && options.pretrain_fraction <= 1.0, ErrorCode::kConfig,
          "pretrain_fraction must lie in (0, 1]");
  const std::size_t total = options.train.epochs;
  const std::size_t pretrain = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(options.pretrain_fraction * static_cast<double>(total))), 1,
      std::max<std::size_t>(total, 1));

  auto single = config;
  single.n_gate_heads = 1;
  PipelineResult out{init_train_state(single, options.train, gate::single_head_gate_map(config.v_states,
                                                                                           config.u_classes)),
                     {}, {}};
  train_epochs(out.state, records, options.train, pretrain, out.log, "pretrain");

  switch (options.gate_mode) {
    case GateMode::kIdentity:
      out.gate = gate::identity_gate_map(config.v_states, config.u_classes);
      break;
    case GateMode::kManual:
      out.gate = gate::manual_gate_map(config.n_gate_heads, config.v_states, config.u_classes, options.manual_table);
      break;
    case GateMode::kGradSim: {
      auto grads = options.gradients;
      grads.normalize = options.train.normalize;
      grads.v_var = options.train.v_var;
      out.gate = gate::derive_gate_map(out.state.model, records, config.n_gate_heads, config.v_states,
                                       config.u_classes, grads);
      break;
    }
  }
  require(out.gate.n_heads == config.n_gate_heads, ErrorCode::kConfig,
          "gate map has " + std::to_string(out.gate.n_heads) + " heads, config asks for " +
              std::to_string(config.n_gate_heads));

  out.state = expand_heads(out.state, config.n_gate_heads, out.gate);
  train_epochs(out.state, records, options.train, total, out.log, "gated");
  return out;
}

void save_train_state(const std::filesystem::path& path, const TrainState& state, const Json& extra) {
  model::Checkpoint ckpt{state.model.config, state.model.params.clone(), {}, extra.is_object() ? extra : Json::object()};
  for (const auto& [name, m] : state.adam.m)
    ckpt.state.emplace("adam.m." + name, nn::Tensor<float>::from_data({m.size()}, m));
  for (const auto& [name, v] : state.adam.v)
    ckpt.state.emplace("adam.v." + name, nn::Tensor<float>::from_data({v.size()}, v));
  const auto& o = state.adam.options;
  ckpt.metadata["training"] = Json{{"epochs_done", state.epochs_done},
                                   {"adam_step", state.adam.step},
                                   {"adam", {{"lr", o.lr}, {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps}}},
                                   {"clip_norm", state.clip_norm}};
  if (state.gate) ckpt.metadata["gate_map"] = gate::to_json(*state.gate);
  model::save_checkpoint(path.string(), ckpt);
}

TrainState load_train_state(const std::filesystem::path& path) {
  auto ckpt = model::load_checkpoint(path.string());
  TrainState state{{ckpt.config, std::move(ckpt.params)}, {}, 0, 0.0, std::nullopt};
  if (ckpt.metadata.contains("training")) {
    const Json& t = ckpt.metadata.at("training");
    const std::string where = path.string() + " training";
    state.epochs_done = json_get<std::size_t>(t, "epochs_done", 0, where);
    state.adam.step = json_get<std::size_t>(t, "adam_step", 0, where);
    state.clip_norm = json_get<double>(t, "clip_norm", 0.0, where);
    if (t.contains("adam")) {
      const Json& a = t.at("adam");
      state.adam.options = {json_get(a, "lr", 2e-4, where), json_get(a, "beta1", 0.9, where),
                            json_get(a, "beta2", 0.999, where), json_get(a, "eps", 1e-8, where)};
    }
  }
  for (const auto& [name, tensor] : ckpt.state) {
    const std::vector<float> values(tensor.values().begin(), tensor.values().end());
    if (name.starts_with("adam.m.")) state.adam.m[name.substr(7)] = values;
    else if (name.starts_with("adam.v.")) state.adam.v[name.substr(7)] = values;
  }
  if (ckpt.metadata.contains("gate_map")) state.gate = gate::gate_map_from_json(ckpt.metadata.at("gate_map"));
  if (state.model.config.variant == model::Variant::kGated)
    require(state.gate.has_value(), ErrorCode::kConfig, path.string() + ": gated checkpoint without a gate map");
  return state;
}

}  // namespace gbu::train
