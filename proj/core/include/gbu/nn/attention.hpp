#pragma once

#include <vector>

#include "gbu/nn/ops.hpp"

namespace gbu::nn {

/// One post-norm BERT encoder block: self-attention, add & norm, GELU
/// feed-forward, add & norm.
///
/// Projections are stored PyTorch-style as weight[out, in]. The attention width
/// is heads * head_dim, where head_dim = hidden / heads (floor); when hidden is
/// not a multiple of heads the projections are rectangular and the output
/// projection maps back to hidden.
template <typename T>
struct AttentionBlockParams {
  Tensor<T> query_weight, query_bias;
  Tensor<T> key_weight, key_bias;
  Tensor<T> value_weight, value_bias;
  Tensor<T> output_weight, output_bias;
  Tensor<T> attention_norm_gamma, attention_norm_beta;
  Tensor<T> intermediate_weight, intermediate_bias;
  Tensor<T> ffn_output_weight, ffn_output_bias;
  Tensor<T> output_norm_gamma, output_norm_beta;
};

/// Stack of blocks preceded by learned position embeddings and an embedding
/// layer norm.
template <typename T>
struct BertParams {
  Tensor<T> position_embeddings;  // [max_positions, hidden]
  Tensor<T> embedding_norm_gamma, embedding_norm_beta;
  std::vector<AttentionBlockParams<T>> blocks;
};

inline constexpr double kLayerNormEps = 1e-12;

/// x[L, hidden] -> [L, hidden]. Unmasked (bidirectional) scaled dot-product attention.
template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const AttentionBlockParams<T>& params, std::size_t n_heads);

/// Adds position embeddings to x[L, hidden] and runs every block.
/// Throws kSequenceLength when L exceeds the position table.
template <typename T>
Tensor<T> bert_encode(const Tensor<T>& x, const BertParams<T>& params, std::size_t n_heads);

extern template Tensor<float> multi_head_self_attention<float>(const Tensor<float>&, const AttentionBlockParams<float>&,
                                                               std::size_t);
extern template Tensor<double> multi_head_self_attention<double>(const Tensor<double>&,
                                                                 const AttentionBlockParams<double>&, std::size_t);
extern template Tensor<float> bert_encode<float>(const Tensor<float>&, const BertParams<float>&, std::size_t);
extern template Tensor<double> bert_encode<double>(const Tensor<double>&, const BertParams<double>&, std::size_t);

}  // namespace gbu::nn
