#include "gbu/nn/attention.hpp"

#include <cmath>

namespace gbu::nn {

template <typename T>
Tensor<T> multi_head_self_attention(const Tensor<T>& x, const AttentionBlockParams<T>& params, std::size_t n_heads) {
  require(x.rank() == 2, ErrorCode::kDimension, "attention: expected x[L, hidden], got " + shape_string(x.shape()));
  require(n_heads > 0, ErrorCode::kConfig, "attention: need at least one head");
  const std::size_t width = params.query_weight.dim(0);
  require(width % n_heads == 0, ErrorCode::kConfig, "attention: projection width not a multiple of head count");
  const std::size_t head_dim = width / n_heads;
  const T inv_sqrt_dim = T{1} / std::sqrt(static_cast<T>(head_dim));

  const Tensor<T> q = linear(x, params.query_weight, params.query_bias);
  const Tensor<T> k = linear(x, params.key_weight, params.key_bias);
  const Tensor<T> v = linear(x, params.value_weight, params.value_bias);

  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const auto qh = narrow(q, 1, h * head_dim, head_dim);
    const auto kh = narrow(k, 1, h * head_dim, head_dim);
    const auto vh = narrow(v, 1, h * head_dim, head_dim);
    const auto weights = softmax_rows(scale(matmul_nt(qh, kh), inv_sqrt_dim));
    heads.push_back(matmul(weights, vh));
  }
  const Tensor<T> merged = n_heads == 1 ? heads.front() : concat(heads, 1);
  const Tensor<T> attended = linear(merged, params.output_weight, params.output_bias);
  const Tensor<T> h1 =
      layer_norm(add(x, attended), params.attention_norm_gamma, params.attention_norm_beta, kLayerNormEps);

  const Tensor<T> ffn = linear(gelu(linear(h1, params.intermediate_weight, params.intermediate_bias)),
                               params.ffn_output_weight, params.ffn_output_bias);
  return layer_norm(add(h1, ffn), params.output_norm_gamma, params.output_norm_beta, kLayerNormEps);
}

template <typename T>
Tensor<T> bert_encode(const Tensor<T>& x, const BertParams<T>& params, std::size_t n_heads) {
  require(x.rank() == 2, ErrorCode::kDimension, "bert: expected x[L, hidden], got " + shape_string(x.shape()));
  const std::size_t len = x.dim(0);
  const std::size_t max_positions = params.position_embeddings.dim(0);
  require(len <= max_positions, ErrorCode::kSequenceLength,
          "sequence of length " + std::to_string(len) + " exceeds " + std::to_string(max_positions) + " positions");
  Tensor<T> h = add(x, narrow(params.position_embeddings, 0, 0, len));
  h = layer_norm(h, params.embedding_norm_gamma, params.embedding_norm_beta, kLayerNormEps);
  for (const auto& block : params.blocks) h = multi_head_self_attention(h, block, n_heads);
  return h;
}

template Tensor<float> multi_head_self_attention<float>(const Tensor<float>&, const AttentionBlockParams<float>&,
                                                        std::size_t);
template Tensor<double> multi_head_self_attention<double>(const Tensor<double>&, const AttentionBlockParams<double>&,
                                                          std::size_t);
template Tensor<float> bert_encode<float>(const Tensor<float>&, const BertParams<float>&, std::size_t);
template Tensor<double> bert_encode<double>(const Tensor<double>&, const BertParams<double>&, std::size_t);

}  // namespace gbu::nn
