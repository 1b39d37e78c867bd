#include "run_config.hpp"

#include "gbu/common/error.hpp"
#include "gbu/common/hash.hpp"

namespace gbu::cli {

namespace {

model::ModelConfig preset(const std::string& name, model::Variant variant) {
  if (name == "full") {
    model::ModelConfig c;
    c.variant = variant;
    return c;
  }
  if (name == "small") return model::small_config(variant);
  if (name == "tiny") return model::tiny_config(variant);
  fail(ErrorCode::kConfig, "model.preset must be full, small or tiny, got '" + name + "'");
}

template <typename V>
V pick_shared(const Json& model, const Json& other, const std::string& model_key, const std::string& other_key,
              V fallback, std::string_view where) {
  const bool in_model = model.contains(model_key), in_other = other.contains(other_key);
  const V from_model = json_get<V>(model, model_key, fallback, "model");
  const V from_other = json_get<V>(other, other_key, fallback, where);
  require(!(in_model && in_other) || from_model == from_other, ErrorCode::kConfig,
          "model." + model_key + " and " + std::string(where) + "." + other_key + " disagree");
  return in_other ? from_other : from_model;
}

}  // namespace

RunConfig run_config_from_json(const Json& j) {
  require(j.is_object(), ErrorCode::kConfig, "run config must be a JSON object");
  reject_unknown_keys(j, {"model", "train", "gate", "data", "eval"}, "config");
  const Json empty = Json::object();
  const Json& m = j.contains("model") ? j.at("model") : empty;
  const Json& t = j.contains("train") ? j.at("train") : empty;
  const Json& g = j.contains("gate") ? j.at("gate") : empty;
  const Json& d = j.contains("data") ? j.at("data") : empty;
  const Json& e = j.contains("eval") ? j.at("eval") : empty;
  for (const auto* section : {&m, &t, &g, &d, &e})
    require(section->is_object(), ErrorCode::kConfig, "config sections must be objects");

  reject_unknown_keys(t, {"lr", "epochs", "batch", "seed", "lambda", "lambda_u", "pretrain_fraction", "clip_norm"},
                      "train");
  reject_unknown_keys(g, {"n_heads", "mode", "manual_table"}, "gate");
  reject_unknown_keys(d, {"dir", "split_ratio", "split_seed", "normalize"}, "data");
  reject_unknown_keys(e, {"aggregation", "group_var"}, "eval");

  RunConfig c;
  const auto variant = model::parse_variant(json_get<std::string>(m, "variant", "gated", "model"));
  const auto base = preset(json_get<std::string>(m, "preset", "small", "model"), variant);
  Json model_json = model::to_json(base);
  for (const auto& item : m.items())
    if (item.key() != "preset") model_json[item.key()] = item.value();
  c.model = model::model_config_from_json(model_json);
  c.model.lambda = pick_shared<double>(m, t, "lambda", "lambda", base.lambda, "train");
  c.model.lambda_u = pick_shared<double>(m, t, "lambda_u", "lambda_u", base.lambda_u, "train");
  c.model.n_gate_heads = pick_shared<std::size_t>(m, g, "n_gate_heads", "n_heads", base.n_gate_heads, "gate");
  c.model.validate();

  c.lr = json_get<double>(t, "lr", c.lr, "train");
  c.epochs = json_get<std::size_t>(t, "epochs", c.epochs, "train");
  c.batch = json_get<std::size_t>(t, "batch", c.batch, "train");
  c.seed = json_get<std::uint64_t>(t, "seed", c.seed, "train");
  c.pretrain_fraction = json_get<double>(t, "pretrain_fraction", c.pretrain_fraction, "train");
  c.clip_norm = json_get<double>(t, "clip_norm", c.clip_norm, "train");
  require(c.lr >= 0.0, ErrorCode::kConfig, "train.lr must be >= 0");
  require(c.epochs >= 1, ErrorCode::kConfig, "train.epochs must be >= 1");
  require(c.batch == 1, ErrorCode::kConfig, "train.batch must be 1 (one night per step)");
  require(c.pretrain_fraction > 0.0 && c.pretrain_fraction <= 1.0, ErrorCode::kConfig,
          "train.pretrain_fraction must lie in (0, 1]");
  require(c.clip_norm >= 0.0, ErrorCode::kConfig, "train.clip_norm must be >= 0");

  c.gate_mode = train::parse_gate_mode(json_get<std::string>(g, "mode", "grad-sim", "gate"));
  c.manual_table = g.value("manual_table", Json::object());
  require(c.manual_table.is_object(), ErrorCode::kConfig, "gate.manual_table must be an object");
  if (c.model.variant == model::Variant::kGated) {
    if (c.gate_mode == train::GateMode::kIdentity)
      require(c.model.n_gate_heads == c.model.v_states * c.model.u_classes, ErrorCode::kConfig,
              "gate.mode identity needs n_heads = |V|*|U|");
    if (c.gate_mode == train::GateMode::kManual)
      (void)gate::manual_gate_map(c.model.n_gate_heads, c.model.v_states, c.model.u_classes, c.manual_table);
  }

  c.data_dir = json_get<std::string>(d, "dir", "", "data");
  c.split_ratio = json_get<double>(d, "split_ratio", c.split_ratio, "data");
  c.split_seed = json_get<std::uint64_t>(d, "split_seed", c.split_seed, "data");
  c.normalize = json_get<bool>(d, "normalize", c.normalize, "data");
  require(c.split_ratio > 0.0 && c.split_ratio <= 1.0, ErrorCode::kConfig, "data.split_ratio must lie in (0, 1]");

  c.aggregation = eval::parse_aggregation(json_get<std::string>(e, "aggregation", "segment", "eval"));
  if (e.contains("group_var") && !e.at("group_var").is_null())
    c.group_var = json_get<std::string>(e, "group_var", "", "eval");
  return c;
}

Json to_json(const RunConfig& c) {
  return Json{{"model", model::to_json(c.model)},
              {"train",
               {{"lr", c.lr},
                {"epochs", c.epochs},
                {"batch", c.batch},
                {"seed", c.seed},
                {"lambda", c.model.lambda},
                {"lambda_u", c.model.lambda_u},
                {"pretrain_fraction", c.pretrain_fraction},
                {"clip_norm", c.clip_norm}}},
              {"gate",
               {{"n_heads", c.model.n_gate_heads},
                {"mode", std::string(train::to_string(c.gate_mode))},
                {"manual_table", c.manual_table}}},
              {"data",
               {{"dir", c.data_dir},
                {"split_ratio", c.split_ratio},
                {"split_seed", c.split_seed},
                {"normalize", c.normalize}}},
              {"eval",
               {{"aggregation", std::string(eval::to_string(c.aggregation))},
                {"group_var", c.group_var ? Json(*c.group_var) : Json(nullptr)}}}};
}

std::string run_config_hash(const RunConfig& config) { return hex64(fnv1a64(to_json(config).dump())); }

RunConfig load_run_config(const std::string& path) { return run_config_from_json(parse_json_file(path)); }

train::TrainOptions train_options(const RunConfig& c) {
  train::TrainOptions o;
  o.epochs = c.epochs;
  o.adam.lr = c.lr;
  o.batch = c.batch;
  o.seed = c.seed;
  o.clip_norm = c.clip_norm;
  o.normalize = c.normalize;
  return o;
}

}  // namespace gbu::cli
