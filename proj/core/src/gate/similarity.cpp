#include "gbu/gate/similarity.hpp"

#include <cmath>
#include <limits>

#include <spdlog/spdlog.h>

namespace gbu::gate {

std::vector<std::string> backbone_parameter_names(const model::ParamSet<float>& params) {
  std::vector<std::string> out;
  for (const auto& name : params.trainable_names()) {
    if (name.starts_with("aux.")) continue;
    if (name.starts_with("heads.") && !name.starts_with("heads.1.")) continue;
    out.push_back(name);
  }
  return out;
}

StateGradient state_gradient(const model::Model<float>& backbone, std::span<const data::Record> records, int v, int u,
                             const StateGradientOptions& options) {
  const auto names = backbone_parameter_names(backbone.params);
  std::size_t total = 0;
  for (const auto& n : names) total += backbone.params.at(n).numel();

  StateGradient out{v, u, std::vector<double>(total, 0.0), 0};
  const model::ForwardContext ctx{nn::Mode::kEval, nullptr};
  for (const auto& record : records) {
    if (record.variable(options.v_var) != v) continue;
    std::vector<std::uint8_t> mask(record.stages.size(), 0);
    std::size_t hits = 0;
    for (std::size_t t = 0; t < mask.size(); ++t)
      if (record.stages[t] == u) {
        mask[t] = 1;
        ++hits;
      }
    if (hits == 0) continue;

    backbone.params.zero_grad();
    const auto x = model::make_input<float>(backbone.config, data::model_breathing(record, options.normalize), v);
    const auto encoded = model::encode(backbone, x, ctx);
    const auto y_hat = model::decode_head(backbone, 1, encoded, ctx);
    const auto yd = data::normalized_spo2(record);
    const std::vector<float> y(yd.begin(), yd.end());
    model::loss_main(y_hat, std::span<const float>(y), backbone.config.lambda, mask).total.backward();

    std::size_t offset = 0;
    for (const auto& n : names) {
      const auto& p = backbone.params.at(n);
      if (p.has_grad()) {
        const auto g = p.grad();
        for (std::size_t i = 0; i < g.size(); ++i) out.gradient[offset + i] += static_cast<double>(g[i]);
      }
      offset += p.numel();
    }
    ++out.samples;
  }
  backbone.params.zero_grad();
  require(out.samples > 0, ErrorCode::kEmptySubset,
          "no record carries state (" + pair_key(v, u) + "); drop or merge it first");
  for (double& g : out.gradient) g /= static_cast<double>(out.samples);
  return out;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorCode::kDimension,
          "cosine_similarity: lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  require(na > 0.0 && nb > 0.0, ErrorCode::kUndefinedSimilarity, "cosine_similarity of a zero vector");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

GateMap build_gate_map(std::vector<StateGradient> gradients, std::size_t n_heads, std::size_t v_states,
                       std::size_t u_states) {
  const auto index = [&](const StateGradient& g) { return g.v * static_cast<int>(u_states) + g.u; };
  std::sort(gradients.begin(), gradients.end(),
            [&](const StateGradient& a, const StateGradient& b) { return index(a) < index(b); });
  for (std::size_t i = 0; i < gradients.size(); ++i) {
    const auto& g = gradients[i];
    require(g.v >= 0 && static_cast<std::size_t>(g.v) < v_states && g.u >= 0 &&
                static_cast<std::size_t>(g.u) < u_states,
            ErrorCode::kConfig, "state gradient for (" + pair_key(g.v, g.u) + ") outside the state space");
    require(i == 0 || index(gradients[i - 1]) != index(g), ErrorCode::kConfig,
            "duplicate state gradient for (" + pair_key(g.v, g.u) + ")");
  }
  const std::size_t n = gradients.size();
  require(n_heads >= 1 && n_heads <= n, ErrorCode::kConfig,
          "n_heads = " + std::to_string(n_heads) + " outside 1.." + std::to_string(n) + " populated states");

  std::vector<std::vector<double>> sim(n, std::vector<double>(n, 1.0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) sim[i][j] = sim[j][i] = cosine_similarity(gradients[i].gradient, gradients[j].gradient);

  // clusters hold positions into `gradients`, kept sorted by smallest member
  std::vector<std::vector<std::size_t>> clusters(n);
  for (std::size_t i = 0; i < n; ++i) clusters[i] = {i};
  const auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    double s = 0.0;
    for (auto i : a)
      for (auto j : b) s += sim[i][j];
    return s / static_cast<double>(a.size() * b.size());
  };
  Json merges = Json::array();
  while (clusters.size() > n_heads) {
    std::size_t best_a = 0, best_b = 1;
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < clusters.size(); ++a)
      for (std::size_t b = a + 1; b < clusters.size(); ++b) {
        const double s = linkage(clusters[a], clusters[b]);
        if (s > best) {
          best = s;
          best_a = a;
          best_b = b;
        }
      }
    merges.push_back(Json{{"linkage", best}, {"sizes", {clusters[best_a].size(), clusters[best_b].size()}}});
    clusters[best_a].insert(clusters[best_a].end(), clusters[best_b].begin(), clusters[best_b].end());
    std::sort(clusters[best_a].begin(), clusters[best_a].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(best_b));
  }

  GateMap map;
  map.n_heads = n_heads;
  map.v_states = v_states;
  map.u_states = u_states;
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto i : clusters[c]) map.table[{gradients[i].v, gradients[i].u}] = static_cast<int>(c + 1);

  Json merged = Json::object();
  for (std::size_t v = 0; v < v_states; ++v)
    for (std::size_t u = 0; u < u_states; ++u) {
      const std::pair<int, int> key{static_cast<int>(v), static_cast<int>(u)};
      if (map.table.count(key)) continue;
      // nearest populated u with the same v, else the nearest populated state overall
      long best_cost = std::numeric_limits<long>::max();
      std::pair<int, int> donor{-1, -1};
      for (const auto& g : gradients) {
        const long cost = (g.v == key.first ? 0L : 1000000L) + std::abs(g.u - key.second) * 1000L +
                          std::abs(g.v - key.first);
        if (cost < best_cost) {
          best_cost = cost;
          donor = {g.v, g.u};
        }
      }
      map.table[key] = map.table.at(donor);
      merged[pair_key(key.first, key.second)] = pair_key(donor.first, donor.second);
      spdlog::warn("gate map: state ({}) has no samples; merged into ({})", pair_key(key.first, key.second),
                   pair_key(donor.first, donor.second));
    }

  Json states = Json::array();
  for (const auto& g : gradients)
    states.push_back(Json{{"state", pair_key(g.v, g.u)}, {"samples", g.samples}});
  Json clusters_json = Json::array();
  for (const auto& c : clusters) {
    Json members = Json::array();
    for (auto i : c) members.push_back(pair_key(gradients[i].v, gradients[i].u));
    clusters_json.push_back(members);
  }
  map.provenance = Json{{"kind", "gradient-similarity"}, {"linkage", "average"}, {"states", states},
                        {"similarity", sim},           {"merges", merges},     {"clusters", clusters_json},
                        {"merged_states", merged}};
  map.validate();
  return map;
}

GateMap derive_gate_map(const model::Model<float>& backbone, std::span<const data::Record> records,
                        std::size_t n_heads, std::size_t v_states, std::size_t u_states,
                        const StateGradientOptions& options) {
  std::vector<StateGradient> gradients;
  for (std::size_t v = 0; v < v_states; ++v)
    for (std::size_t u = 0; u < u_states; ++u) {
      try {
        gradients.push_back(state_gradient(backbone, records, static_cast<int>(v), static_cast<int>(u), options));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::kEmptySubset) throw;
      }
    }
  return build_gate_map(std::move(gradients), n_heads, v_states, u_states);
}

}  // namespace gbu::gate
