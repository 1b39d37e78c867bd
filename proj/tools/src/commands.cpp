#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>

#include "gbu/common/error.hpp"
#include "gbu/common/hash.hpp"
#include "gbu/data/record.hpp"
#include "gbu/data/synth.hpp"
#include "gbu/eval/evaluate.hpp"
#include "gbu/gate/similarity.hpp"
#include "gbu/model/checkpoint.hpp"
#include "gbu/model/grad_check.hpp"
#include "gbu/nn/grad_check.hpp"
#include "gbu/train/trainer.hpp"
#include "run_config.hpp"

namespace gbu::cli {

namespace {

constexpr std::size_t kReferenceParameters = 26'821'113;

/// Runs f, turning library errors about the inputs into usage errors.
template <typename F>
auto input(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
}

Json read_json_or_empty(const std::optional<std::string>& path) {
  if (!path) return Json::object();
  return input([&] { return parse_json_file(*path); });
}

void set_override(Json& j, const std::string& section, const std::string& key, const Json& value,
                  const std::string& flag) {
  if (!j.contains(section)) j[section] = Json::object();
  if (!j[section].is_object()) throw UsageError("config section " + section + " must be an object");
  const auto it = j[section].find(key);
  if (it != j[section].end() && *it != value)
    spdlog::info("{} overrides {}.{}: {} -> {}", flag, section, key, it->dump(), value.dump());
  else
    spdlog::info("{} sets {}.{} = {}", flag, section, key, value.dump());
  j[section][key] = value;
}

std::optional<std::string> config_path(const std::optional<std::string>& flag) {
  if (flag) return flag;
  if (const char* env = std::getenv("GBU_CONFIG"); env != nullptr && *env != '\0') {
    spdlog::info("using config from GBU_CONFIG={}", env);
    return std::string(env);
  }
  return std::nullopt;
}

std::vector<data::Record> load_records(const std::string& dir) {
  if (dir.empty()) throw UsageError("no data directory (use --data or data.dir)");
  auto records = input([&] { return data::read_record_dir(dir); });
  if (records.empty()) throw UsageError("no .rsp1 records in " + dir);
  return records;
}

std::vector<std::string> subject_ids(const std::vector<data::Record>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) ids.push_back(r.subject_id);
  return ids;
}

/// "all", "train" or "test" part of records under the config's subject split.
std::vector<data::Record> split_part(const std::vector<data::Record>& records, const RunConfig& config,
                                     const std::string& part) {
  if (part == "all") return records;
  if (part != "train" && part != "test") throw UsageError("--split must be all, train or test");
  if (config.split_ratio >= 1.0) {
    if (part == "test") throw UsageError("data.split_ratio is 1, so there is no test split");
    return records;
  }
  const auto split = input([&] { return data::split_subjects(subject_ids(records), config.split_ratio, config.split_seed); });
  return data::select_subjects(records, part == "train" ? split.train : split.test);
}

Json artifact_tag(const std::string& hash) {
  return Json{{"config_hash", hash}, {"tool_version", std::string(kToolVersion)}};
}

std::string group_digits(std::size_t n) {
  std::string s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

RunConfig stored_run_config(const Json& metadata) {
  if (!metadata.contains("run_config")) return RunConfig{};
  return input([&] { return run_config_from_json(metadata.at("run_config")); });
}

}  // namespace

int cmd_synth(const SynthArgs& args) {
  auto profile = data::default_profile();
  if (args.profile) profile = input([&] { return data::synth_profile_from_json(parse_json_file(*args.profile)); });
  if (args.seed) {
    spdlog::info("--seed overrides profile seed: {} -> {}", profile.seed, *args.seed);
    profile.seed = *args.seed;
  }
  input([&] { profile.validate(); });
  const auto records = data::synth_generate(profile);
  const auto manifest = data::write_synth_dataset(profile, records, args.out);
  std::printf("wrote %zu records to %s (config_hash %s)\n", records.size(), args.out.c_str(),
              manifest.at("config_hash").get<std::string>().c_str());
  return kExitOk;
}

int cmd_train(const TrainArgs& args) {
  Json j = read_json_or_empty(config_path(args.config));
  if (!j.is_object()) throw UsageError("config must be a JSON object");
  if (args.variant) set_override(j, "model", "variant", *args.variant, "--variant");
  if (args.data) set_override(j, "data", "dir", *args.data, "--data");
  if (args.epochs) set_override(j, "train", "epochs", *args.epochs, "--epochs");
  if (args.seed) set_override(j, "train", "seed", *args.seed, "--seed");
  if (args.lr) set_override(j, "train", "lr", *args.lr, "--lr");
  const RunConfig config = input([&] { return run_config_from_json(j); });
  const std::string hash = run_config_hash(config);
  const auto records = split_part(load_records(config.data_dir), config, "train");
  spdlog::info("training {} on {} nights, {} epochs, config {}", model::to_string(config.model.variant),
               records.size(), config.epochs, hash);

  auto options = train_options(config);
  options.on_epoch = [](const train::EpochLog& e) {
    spdlog::info("epoch {} [{}] loss {:.5f} l1 {:.5f} corr {:.4f}", e.epoch, e.phase, e.loss, e.l1, e.corr);
  };
  train::TrainState state;
  train::TrainLog log;
  if (config.model.variant == model::Variant::kGated) {
    train::PipelineOptions pipeline;
    pipeline.train = options;
    pipeline.pretrain_fraction = config.pretrain_fraction;
    pipeline.gate_mode = config.gate_mode;
    pipeline.manual_table = config.manual_table;
    auto result = train::train_gated_pipeline(config.model, records, pipeline);
    state = std::move(result.state);
    log = std::move(result.log);
  } else {
    auto result = train::train(config.model, records, options);
    state = std::move(result.state);
    log = std::move(result.log);
  }

  Json extra{{"run_config", to_json(config)}, {"run_config_hash", hash}, {"train_subjects", records.size()}};
  train::save_train_state(args.out, state, extra);
  for (auto& e : log.epochs) e.config_hash = hash;
  log.write_jsonl(args.out + ".log.jsonl");
  if (state.gate) {
    Json map = gate::to_json(*state.gate);
    map.update(artifact_tag(hash));
    const std::string gate_out = args.gate_out.value_or(args.out + ".gate.json");
    write_json_file(gate_out, map);
    std::printf("gate map: %s\n", gate_out.c_str());
  }
  const auto& last = log.epochs.back();
  std::printf("checkpoint: %s (config_hash %s, final loss %.6f, l1 %.6f)\n", args.out.c_str(), hash.c_str(),
              last.loss, last.l1);
  return kExitOk;
}

int cmd_gatemap(const GateMapArgs& args) {
  auto state = input([&] { return train::load_train_state(args.ckpt); });
  const auto ckpt = input([&] { return model::load_checkpoint(args.ckpt); });
  const RunConfig config = stored_run_config(ckpt.metadata);
  const auto records = split_part(load_records(args.data.value_or(config.data_dir)), config, "train");
  const auto& mc = state.model.config;
  const std::size_t states = mc.v_states * mc.u_classes;
  if (args.n_heads < 1 || args.n_heads > states)
    throw UsageError("--n-heads must lie in 1.." + std::to_string(states));
  gate::StateGradientOptions options;
  options.normalize = config.normalize;
  const auto map = gate::derive_gate_map(state.model, records, args.n_heads, mc.v_states, mc.u_classes, options);
  Json j = gate::to_json(map);
  j.update(artifact_tag(ckpt.metadata.value("run_config_hash", model::config_hash(model::to_json(mc)))));
  write_json_file(args.out, j);
  std::printf("gate map with %zu heads: %s\n", map.n_heads, args.out.c_str());
  for (const auto& [key, head] : map.table) std::printf("  %s -> %d\n", gate::pair_key(key.first, key.second).c_str(), head);
  return kExitOk;
}

int cmd_eval(const EvalArgs& args) {
  auto state = input([&] { return train::load_train_state(args.ckpt); });
  const auto ckpt = input([&] { return model::load_checkpoint(args.ckpt); });
  const std::string model_hash = model::config_hash(model::to_json(state.model.config));

  RunConfig config = stored_run_config(ckpt.metadata);
  if (const auto path = config_path(args.config)) {
    config = input([&] { return load_run_config(*path); });
    const std::string given = model::config_hash(model::to_json(config.model));
    if (given != model_hash)
      throw UsageError("hash_mismatch: config " + *path + " describes model " + given + ", checkpoint holds " +
                       model_hash);
  }
  if (args.aggregation) config.aggregation = input([&] { return eval::parse_aggregation(*args.aggregation); });
  if (args.group_by) config.group_var = *args.group_by;

  std::optional<gate::GateMap> gate_map = state.gate;
  if (args.gate_map) gate_map = input([&] { return gate::gate_map_from_json(parse_json_file(*args.gate_map)); });
  if (state.model.config.variant == model::Variant::kGated) {
    if (!gate_map) throw UsageError("gated checkpoint without a gate map; pass --gate-map");
    if (gate_map->n_heads != state.model.config.n_gate_heads)
      throw UsageError("gate map has " + std::to_string(gate_map->n_heads) + " heads, model has " +
                       std::to_string(state.model.config.n_gate_heads));
  }
  const gate::GateMap* gate = state.model.config.variant == model::Variant::kGated ? &*gate_map : nullptr;

  const std::string part = args.split.value_or(config.split_ratio < 1.0 ? "test" : "all");
  const auto records = split_part(load_records(args.data.value_or(config.data_dir)), config, part);

  eval::EvalOptions options;
  options.aggregation = config.aggregation;
  options.normalize = config.normalize;
  options.group_var = config.group_var;
  if (options.group_var)
    for (const auto& r : records)
      if (!r.has_variable(*options.group_var))
        throw UsageError("record " + r.subject_id + " has no variable '" + *options.group_var + "'");

  std::vector<eval::NightPrediction> predictions;
  for (const auto& r : records) predictions.push_back(eval::predict_night(state.model, gate, r, options.normalize));
  auto report = eval::score(predictions, options);
  if (options.group_var) report.groups = eval::group_distribution(records, predictions, *options.group_var);
  report.config_hash = ckpt.metadata.value("run_config_hash", model_hash);
  report.checkpoint_id = model::file_id(args.ckpt);

  Json j = eval::to_json(report);
  j["tool_version"] = std::string(kToolVersion);
  j["split"] = part;
  write_json_file(args.report, j);

  if (args.dump) {
    std::filesystem::create_directories(*args.dump);
    const std::string comment = "gbu " + std::string(kToolVersion) + " config_hash=" + report.config_hash +
                                " checkpoint=" + report.checkpoint_id;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "night%04zu.tsv", i);
      eval::dump_predictions(predictions[i], std::filesystem::path(*args.dump) / name,
                             comment + " subject=" + predictions[i].subject_id);
    }
  }
  const auto& h = report.headline();
  std::printf("%s mean over %zu nights (%zu segments, %zu flat): Corr %.4f MAE %.4f RMSE %.4f\n",
              std::string(eval::to_string(report.aggregation)).c_str(), report.nights.size(), h.segments,
              h.excluded, h.corr, h.mae, h.rmse);
  for (const auto& [dataset, a] : report.by_dataset)
    std::printf("  %-12s Corr %.4f MAE %.4f RMSE %.4f\n", dataset.c_str(), a.corr, a.mae, a.rmse);
  return kExitOk;
}

int cmd_gradcheck(const GradCheckArgs& args) {
  if (args.scale != "tiny") throw UsageError("--scale supports only tiny");
  nn::KernelSuiteOptions kernel;
  kernel.seed = args.seed;
  auto entries = nn::kernel_gradcheck_suite(kernel);
  model::ModelCheckOptions composed;
  composed.seed = args.seed;
  const auto model_entries = model::model_gradcheck_suite(composed);
  entries.insert(entries.end(), model_entries.begin(), model_entries.end());

  std::vector<const nn::GradCheckEntry*> failed;
  for (const auto& e : entries) {
    std::printf("%-4s %-28s %-3s max rel err %.3e (tol %.0e, %zu instances, %zu one-sided)\n",
                e.passed() ? "ok" : "FAIL", e.name.c_str(), e.precision.c_str(), e.max_rel_error, e.tolerance,
                e.instances, e.kinks);
    if (!e.passed()) failed.push_back(&e);
  }
  if (failed.empty()) {
    std::printf("gradcheck passed: %zu checks\n", entries.size());
    return kExitOk;
  }
  std::sort(failed.begin(), failed.end(), [](const auto* a, const auto* b) {
    return a->max_rel_error / a->tolerance > b->max_rel_error / b->tolerance;
  });
  std::printf("gradcheck FAILED: %zu of %zu checks; worst offenders:\n", failed.size(), entries.size());
  for (std::size_t i = 0; i < std::min<std::size_t>(failed.size(), 5); ++i)
    std::printf("  %s (%s): %.3e > %.0e\n", failed[i]->name.c_str(), failed[i]->precision.c_str(),
                failed[i]->max_rel_error, failed[i]->tolerance);
  return kExitFailure;
}

int cmd_inspect(const InspectArgs& args) {
  if (args.ckpt.has_value() == config_path(args.config).has_value() && args.ckpt)
    throw UsageError("pass either --ckpt or --config, not both");
  model::Checkpoint ckpt;
  std::string id;
  if (args.ckpt) {
    ckpt = input([&] { return model::load_checkpoint(*args.ckpt); });
    id = model::file_id(*args.ckpt);
  } else if (const auto path = config_path(args.config)) {
    const auto config = input([&] { return load_run_config(*path); });
    ckpt.config = config.model;
    ckpt.params = model::build_model<float>(config.model, config.seed).params;
  } else {
    throw UsageError("inspect needs --ckpt or --config");
  }
  std::printf("config %s\n%s\n", model::config_hash(model::to_json(ckpt.config)).c_str(),
              model::to_json(ckpt.config).dump(2).c_str());
  if (!id.empty()) std::printf("checkpoint id %s\n", id.c_str());
  if (ckpt.metadata.contains("training"))
    std::printf("training %s\n", ckpt.metadata.at("training").dump().c_str());
  std::printf("tensors (%zu):\n", ckpt.params.size());
  for (const auto& [name, e] : ckpt.params) {
    std::string shape;
    for (auto d : e.tensor.shape()) shape += (shape.empty() ? "" : "x") + std::to_string(d);
    std::printf("  %-48s %-14s %s\n", name.c_str(), shape.c_str(), e.trainable ? "param" : "buffer");
  }
  if (!ckpt.state.empty()) std::printf("optimizer state tensors: %zu\n", ckpt.state.size());
  std::printf("parameters: %s trainable, %s with buffers (reference model size %s)\n",
              group_digits(ckpt.params.count()).c_str(), group_digits(ckpt.params.count(false)).c_str(),
              group_digits(kReferenceParameters).c_str());
  return kExitOk;
}

}  // namespace gbu::cli
