#pragma once

#include <span>
#include <string>
#include <vector>

#include "gbu/data/record.hpp"
#include "gbu/gate/gate_map.hpp"
#include "gbu/model/model.hpp"

namespace gbu::gate {

struct StateGradient {
  int v = 0;
  int u = 0;
  std::vector<double> gradient;
  std::size_t samples = 0;  // contributing records
};

struct StateGradientOptions {
  std::string v_var = "gender";
  bool normalize = true;
};

/// Trainable entries of head 1, encoder and BERT; the aux head is excluded.
std::vector<std::string> backbone_parameter_names(const model::ParamSet<float>& params);

/// Mean over records with v_var == v of the main-loss gradient, restricted by
/// mask to the seconds whose stage is u, in eval mode. kEmptySubset when no
/// record has such a second.
StateGradient state_gradient(const model::Model<float>& backbone, std::span<const data::Record> records, int v, int u,
                             const StateGradientOptions& options = {});

/// dot / (|a| |b|). kUndefinedSimilarity for a zero vector, kDimension for unequal lengths.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// Average-linkage merging of the given states until n_heads clusters remain,
/// numbered by smallest member. States of the v x u space without a gradient
/// take the head of the populated state with the same v and nearest u.
GateMap build_gate_map(std::vector<StateGradient> gradients, std::size_t n_heads, std::size_t v_states,
                       std::size_t u_states);

/// Gradients for every populated state of v_states x u_states, then build_gate_map.
GateMap derive_gate_map(const model::Model<float>& backbone, std::span<const data::Record> records,
                        std::size_t n_heads, std::size_t v_states, std::size_t u_states,
                        const StateGradientOptions& options = {});

}  // namespace gbu::gate
