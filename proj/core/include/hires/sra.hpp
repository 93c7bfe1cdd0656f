#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "hires/attention.hpp"
#include "hires/autograd.hpp"
#include "hires/slicer.hpp"

namespace hires {

// Token map with its 2D arrangement. tokens is [rows*cols, D] with token
// (i, j) at row i*cols + j.
template <typename T>
struct FeatureMap {
  ag::Var<T> tokens;
  int64_t rows = 0;
  int64_t cols = 0;

  int64_t token_count() const { return rows * cols; }
};

// Adapter weights: a 3x3 depthwise kernel for the local path and a
// rotary-position self-attention (with its pre-norm) over a downsampled map
// for the global path.
template <typename T>
struct SraWeights {
  ag::Var<T> dw_kernel;          // [3, 3, D]
  LayerNormParams<T> attn_norm;  // applied before the global attention
  AttentionWeights<T> global_attn;  // use_rope2d = true
  int64_t down_factor = 2;
};

namespace detail {

// Row index map from concatenated slice tokens to the merged map.
// Merged token (gr, gc) with gr = row*ht + i, gc = col*wt + j reads
// slice k = row*n + col, token i*wt + j.
inline std::vector<int64_t> merge_index_map(int64_t m, int64_t n, int64_t ht, int64_t wt) {
  std::vector<int64_t> idx(static_cast<size_t>(m * ht * n * wt));
  const int64_t slice_len = ht * wt;
  for (int64_t gr = 0; gr < m * ht; ++gr) {
    const int64_t row = gr / ht, i = gr % ht;
    for (int64_t gc = 0; gc < n * wt; ++gc) {
      const int64_t col = gc / wt, j = gc % wt;
      idx[static_cast<size_t>(gr * n * wt + gc)] = (row * n + col) * slice_len + i * wt + j;
    }
  }
  return idx;
}

inline std::vector<int64_t> invert_index_map(const std::vector<int64_t>& idx) {
  std::vector<int64_t> inv(idx.size());
  for (size_t i = 0; i < idx.size(); ++i) inv[static_cast<size_t>(idx[i])] = static_cast<int64_t>(i);
  return inv;
}

}  // namespace detail

// Rebuilds the whole-image map from row-major slices.
template <typename T>
FeatureMap<T> merge(const std::vector<FeatureMap<T>>& slices, const GridSpec& grid) {
  if (static_cast<int64_t>(slices.size()) != grid.m * grid.n)
    throw std::invalid_argument("merge: expected " + std::to_string(grid.m * grid.n) +
                                " slices, got " + std::to_string(slices.size()));
  const int64_t ht = slices[0].rows, wt = slices[0].cols;
  std::vector<ag::Var<T>> parts;
  parts.reserve(slices.size());
  for (const auto& s : slices) {
    if (s.rows != ht || s.cols != wt)
      throw std::invalid_argument("merge: slices must share one spatial shape");
    parts.push_back(s.tokens);
  }
  auto cat = ag::concat_rows(parts);
  auto whole = ag::gather_rows(cat, detail::merge_index_map(grid.m, grid.n, ht, wt));
  return FeatureMap<T>{whole, grid.m * ht, grid.n * wt};
}

// Exact inverse of merge.
template <typename T>
std::vector<FeatureMap<T>> reslice(const FeatureMap<T>& whole, const GridSpec& grid,
                                   int64_t ht, int64_t wt) {
  if (whole.rows != grid.m * ht || whole.cols != grid.n * wt)
    throw std::invalid_argument("reslice: map dims do not match grid");
  auto back = ag::gather_rows(
      whole.tokens,
      detail::invert_index_map(detail::merge_index_map(grid.m, grid.n, ht, wt)));
  std::vector<FeatureMap<T>> out;
  out.reserve(static_cast<size_t>(grid.m * grid.n));
  const int64_t slice_len = ht * wt;
  for (int64_t k = 0; k < grid.m * grid.n; ++k)
    out.push_back(FeatureMap<T>{ag::slice_rows(back, k * slice_len, (k + 1) * slice_len), ht, wt});
  return out;
}

template <typename T>
FeatureMap<T> local_fuse(const FeatureMap<T>& whole, const ag::Var<T>& dw_kernel) {
  const int64_t d = whole.tokens.value().dim(1);
  auto spatial = ag::reshape(whole.tokens, {whole.rows, whole.cols, d});
  auto conv = ag::depthwise_conv3x3(spatial, dw_kernel);
  return FeatureMap<T>{ag::reshape(conv, {whole.rows * whole.cols, d}), whole.rows, whole.cols};
}

// Downsample, pre-norm, self-attention with 2D rotary coords on the
// downsampled grid, upsample back.
template <typename T>
FeatureMap<T> global_fuse(const FeatureMap<T>& whole, const SraWeights<T>& w) {
  const int64_t d = whole.tokens.value().dim(1);
  const int64_t df = w.down_factor;
  if (df < 1 || whole.rows % df != 0 || whole.cols % df != 0)
    throw std::invalid_argument("global_fuse: down_factor must divide map dims");
  const int64_t hd = whole.rows / df, wd = whole.cols / df;
  auto spatial = ag::reshape(whole.tokens, {whole.rows, whole.cols, d});
  auto down = ag::resize_bilinear(spatial, hd, wd);
  auto tokens = ag::reshape(down, {hd * wd, d});
  auto normed = layer_norm(tokens, w.attn_norm);
  std::vector<ops::TokenCoord> coords(static_cast<size_t>(hd * wd));
  for (int64_t i = 0; i < hd; ++i)
    for (int64_t j = 0; j < wd; ++j) coords[static_cast<size_t>(i * wd + j)] = {i, j};
  auto attended = mhsa(normed, w.global_attn, w.global_attn.use_rope2d ? &coords : nullptr);
  auto up = ag::resize_bilinear(ag::reshape(attended, {hd, wd, d}), whole.rows, whole.cols);
  return FeatureMap<T>{ag::reshape(up, {whole.rows * whole.cols, d}), whole.rows, whole.cols};
}

// Elementwise sum of the local and global paths.
template <typename T>
FeatureMap<T> capture(const FeatureMap<T>& whole, const SraWeights<T>& w) {
  FeatureMap<T> local = local_fuse(whole, w.dw_kernel);
  FeatureMap<T> global = global_fuse(whole, w);
  return FeatureMap<T>{ag::add(local.tokens, global.tokens), whole.rows, whole.cols};
}

// merge -> capture -> reslice.
template <typename T>
std::vector<FeatureMap<T>> sra_forward(const std::vector<FeatureMap<T>>& slices,
                                       const GridSpec& grid, const SraWeights<T>& w) {
  const int64_t ht = slices[0].rows, wt = slices[0].cols;
  FeatureMap<T> whole = merge(slices, grid);
  FeatureMap<T> fused = capture(whole, w);
  return reslice(fused, grid, ht, wt);
}

}  // namespace hires
