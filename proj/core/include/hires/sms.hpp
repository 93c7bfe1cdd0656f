#pragma once

#include <cstdint>
#include <stdexcept>

#include "hires/attention.hpp"
#include "hires/rng.hpp"
#include "hires/sra.hpp"

namespace hires {

// Token compressor: queries are the average-pooled tokens themselves, so
// each output token keeps the grid position of its pooling window. One
// cross-attention block (pre-norms on query and key/value, residual),
// a pre-norm FFN (residual), then an output norm.
template <typename T>
struct SmsWeights {
  int64_t pool = 2;  // pooling kernel, S x S
  LayerNormParams<T> q_norm, kv_norm;
  AttentionWeights<T> cross;  // no rotary embedding
  LayerNormParams<T> ffn_norm;
  LinearWeights<T> ffn_fc, ffn_out;
  LayerNormParams<T> out_norm;
};

template <typename T>
SmsWeights<T> init_sms_weights(int64_t dim, int64_t heads, int64_t pool, uint64_t seed) {
  if (heads < 1 || dim % heads != 0)
    throw std::invalid_argument("sms: heads must divide dim");
  Rng rng(seed);
  const double sd = 0.02;
  SmsWeights<T> w;
  w.pool = pool;
  w.q_norm = detail::init_layer_norm<T>(dim);
  w.kv_norm = detail::init_layer_norm<T>(dim);
  w.cross = detail::init_attention<T>(rng, dim, heads, sd);
  w.ffn_norm = detail::init_layer_norm<T>(dim);
  w.ffn_fc.weight = detail::gauss_leaf<T>(rng, {dim, 4 * dim}, sd);
  w.ffn_fc.bias = ag::Var<T>::leaf(Tensor<T>({4 * dim}), false);
  w.ffn_out.weight = detail::gauss_leaf<T>(rng, {4 * dim, dim}, sd);
  w.ffn_out.bias = ag::Var<T>::leaf(Tensor<T>({dim}), false);
  w.out_norm = detail::init_layer_norm<T>(dim);
  return w;
}

// Average-pool the token grid per channel; S must divide both sides.
template <typename T>
FeatureMap<T> pool_queries(const FeatureMap<T>& p, int64_t s) {
  const int64_t d = p.tokens.value().dim(1);
  if (s < 1 || p.rows % s != 0 || p.cols % s != 0)
    throw std::invalid_argument("pool_queries: kernel must divide the token grid");
  auto spatial = ag::reshape(p.tokens, {p.rows, p.cols, d});
  auto pooled = ag::avg_pool2d(spatial, s);
  return FeatureMap<T>{ag::reshape(pooled, {(p.rows / s) * (p.cols / s), d}),
                       p.rows / s, p.cols / s};
}

template <typename T>
FeatureMap<T> sms_forward(const FeatureMap<T>& p, const SmsWeights<T>& w) {
  FeatureMap<T> q0 = pool_queries(p, w.pool);
  auto attended = cross_attention(layer_norm(q0.tokens, w.q_norm),
                                  layer_norm(p.tokens, w.kv_norm), w.cross);
  auto q1 = ag::add(q0.tokens, attended);
  auto ffn = linear(ag::gelu(linear(layer_norm(q1, w.ffn_norm), w.ffn_fc)), w.ffn_out);
  auto q2 = ag::add(q1, ffn);
  return FeatureMap<T>{layer_norm(q2, w.out_norm), q0.rows, q0.cols};
}

}  // namespace hires
