#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hires/autograd.hpp"

namespace hires {

template <typename T>
struct LinearWeights {
  ag::Var<T> weight;  // [D_in, D_out]
  ag::Var<T> bias;    // [D_out]
};

template <typename T>
ag::Var<T> linear(const ag::Var<T>& x, const LinearWeights<T>& w) {
  return ag::add_rowvec(ag::matmul(x, w.weight), w.bias);
}

template <typename T>
struct LayerNormParams {
  ag::Var<T> gamma;  // [D]
  ag::Var<T> beta;   // [D]
  T eps = static_cast<T>(1e-5);
};

template <typename T>
ag::Var<T> layer_norm(const ag::Var<T>& x, const LayerNormParams<T>& p) {
  return ag::layer_norm(x, p.gamma, p.beta, p.eps);
}

template <typename T>
struct AttentionWeights {
  ag::Var<T> wq, wk, wv, wo;  // each [D, D], no biases
  int64_t heads = 1;
  bool use_rope2d = false;
  T rope_base = static_cast<T>(10000);
};

// Scaled dot-product attention with per-head column splits:
// softmax(Q Kᵀ / sqrt(D/heads)) V per head, heads concatenated, then Wo.
// When coords are given, Q and K rows are rotated by the 2D rotary
// embedding before the scores.
template <typename T>
ag::Var<T> attention(const ag::Var<T>& q_src, const ag::Var<T>& kv_src,
                     const AttentionWeights<T>& w,
                     const std::vector<ops::TokenCoord>* coords) {
  const int64_t d = q_src.value().dim(1);
  if (kv_src.value().dim(1) != d)
    throw std::invalid_argument("attention: query/key dims differ");
  if (w.wq.value().dim(0) != d)
    throw std::invalid_argument("attention: weight dim mismatch");
  if (w.heads < 1 || d % w.heads != 0)
    throw std::invalid_argument("attention: heads must divide dim");
  if (coords) {
    if (static_cast<int64_t>(coords->size()) != q_src.value().dim(0) ||
        static_cast<int64_t>(coords->size()) != kv_src.value().dim(0))
      throw std::invalid_argument("attention: coords length must equal token count");
  }
  auto q = ag::matmul(q_src, w.wq);
  auto k = ag::matmul(kv_src, w.wk);
  auto v = ag::matmul(kv_src, w.wv);
  const int64_t dh = d / w.heads;
  const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(dh));
  std::vector<ag::Var<T>> head_outs;
  head_outs.reserve(static_cast<size_t>(w.heads));
  for (int64_t h = 0; h < w.heads; ++h) {
    auto qh = ag::slice_cols(q, h * dh, (h + 1) * dh);
    auto kh = ag::slice_cols(k, h * dh, (h + 1) * dh);
    auto vh = ag::slice_cols(v, h * dh, (h + 1) * dh);
    if (coords) {
      qh = ag::rope2d(qh, *coords, w.rope_base);
      kh = ag::rope2d(kh, *coords, w.rope_base);
    }
    auto scores = ag::scale(ag::matmul(qh, ag::transpose(kh)), inv_sqrt);
    auto attn = ag::softmax_rows(scores);
    head_outs.push_back(ag::matmul(attn, vh));
  }
  return ag::matmul(ag::concat_cols(head_outs), w.wo);
}

// Self-attention. coords must be supplied exactly when use_rope2d is set.
template <typename T>
ag::Var<T> mhsa(const ag::Var<T>& x, const AttentionWeights<T>& w,
                const std::vector<ops::TokenCoord>* coords = nullptr) {
  if (w.use_rope2d && !coords)
    throw std::invalid_argument("mhsa: use_rope2d requires token coords");
  if (!w.use_rope2d && coords)
    throw std::invalid_argument("mhsa: coords given but use_rope2d is off");
  return attention(x, x, w, w.use_rope2d ? coords : nullptr);
}

// Queries attend over a separate token set. No rotary embedding here.
template <typename T>
ag::Var<T> cross_attention(const ag::Var<T>& q, const ag::Var<T>& kv,
                           const AttentionWeights<T>& w) {
  return attention(q, kv, w, nullptr);
}

}  // namespace hires
