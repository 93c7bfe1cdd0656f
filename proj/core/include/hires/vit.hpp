#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <stdexcept>
#include <vector>

#include "hires/attention.hpp"
#include "hires/image.hpp"
#include "hires/rng.hpp"
#include "hires/sra.hpp"

namespace hires {

struct VitConfig {
  int64_t input_size = 28;  // square input side
  int64_t patch_size = 7;
  int64_t channels = 3;
  int64_t dim = 32;
  int64_t depth = 4;
  int64_t heads = 4;
  std::set<int> adapter_layers = {2, 3};
  double mlp_ratio = 4.0;

  int64_t tokens_per_side() const { return input_size / patch_size; }
  int64_t token_count() const { return tokens_per_side() * tokens_per_side(); }
  int64_t mlp_hidden() const { return static_cast<int64_t>(mlp_ratio * static_cast<double>(dim)); }

  void validate() const {
    if (input_size < 1 || patch_size < 1 || input_size % patch_size != 0)
      throw std::invalid_argument("vit config: patch size must divide input size");
    if (heads < 1 || dim % heads != 0)
      throw std::invalid_argument("vit config: heads must divide dim");
    for (int l : adapter_layers)
      if (l < 0 || l >= depth)
        throw std::invalid_argument("vit config: adapter layer out of range");
  }
};

template <typename T>
struct VitLayerWeights {
  LayerNormParams<T> ln_attn;
  AttentionWeights<T> attn;
  LayerNormParams<T> ln_mlp;
  LinearWeights<T> mlp_fc;
  LinearWeights<T> mlp_out;
};

template <typename T>
struct VitWeights {
  LinearWeights<T> patch_proj;  // [p*p*C, D] + [D]
  ag::Var<T> pos_embed;         // [L, D], learned, no class token
  std::vector<VitLayerWeights<T>> layers;
};

namespace detail {

template <typename T>
ag::Var<T> gauss_leaf(Rng& rng, std::vector<int64_t> shape, double stddev) {
  Tensor<T> t(std::move(shape));
  fill_gaussian(t, rng, 0.0, stddev);
  return ag::Var<T>::leaf(std::move(t), false);
}

template <typename T>
LayerNormParams<T> init_layer_norm(int64_t d) {
  return {ag::Var<T>::leaf(Tensor<T>::full({d}, T(1)), false),
          ag::Var<T>::leaf(Tensor<T>({d}), false)};
}

template <typename T>
AttentionWeights<T> init_attention(Rng& rng, int64_t d, int64_t heads, double stddev) {
  AttentionWeights<T> w;
  w.wq = gauss_leaf<T>(rng, {d, d}, stddev);
  w.wk = gauss_leaf<T>(rng, {d, d}, stddev);
  w.wv = gauss_leaf<T>(rng, {d, d}, stddev);
  w.wo = gauss_leaf<T>(rng, {d, d}, stddev);
  w.heads = heads;
  return w;
}

}  // namespace detail

// Gaussian(0, 0.02) projections, unit/zero norms, zero biases.
template <typename T>
VitWeights<T> init_vit_weights(const VitConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const double sd = 0.02;
  const int64_t d = cfg.dim;
  VitWeights<T> w;
  w.patch_proj.weight =
      detail::gauss_leaf<T>(rng, {cfg.patch_size * cfg.patch_size * cfg.channels, d}, sd);
  w.patch_proj.bias = ag::Var<T>::leaf(Tensor<T>({d}), false);
  w.pos_embed = detail::gauss_leaf<T>(rng, {cfg.token_count(), d}, sd);
  w.layers.resize(static_cast<size_t>(cfg.depth));
  for (auto& layer : w.layers) {
    layer.ln_attn = detail::init_layer_norm<T>(d);
    layer.attn = detail::init_attention<T>(rng, d, cfg.heads, sd);
    layer.ln_mlp = detail::init_layer_norm<T>(d);
    layer.mlp_fc.weight = detail::gauss_leaf<T>(rng, {d, cfg.mlp_hidden()}, sd);
    layer.mlp_fc.bias = ag::Var<T>::leaf(Tensor<T>({cfg.mlp_hidden()}), false);
    layer.mlp_out.weight = detail::gauss_leaf<T>(rng, {cfg.mlp_hidden(), d}, sd);
    layer.mlp_out.bias = ag::Var<T>::leaf(Tensor<T>({d}), false);
  }
  return w;
}

// Adapter initialized as an exact no-op: zero depthwise kernel, attention
// Wq/Wk/Wv and pre-norm copied from the host layer, Wo zero.
template <typename T>
SraWeights<T> init_sra_from_host(const VitConfig& cfg, const VitWeights<T>& host,
                                 int layer, int64_t down_factor) {
  if (layer < 0 || layer >= static_cast<int>(host.layers.size()))
    throw std::invalid_argument("init_sra_from_host: layer out of range");
  const auto& src = host.layers[static_cast<size_t>(layer)];
  SraWeights<T> w;
  w.dw_kernel = ag::Var<T>::leaf(Tensor<T>({3, 3, cfg.dim}), false);
  w.attn_norm.gamma = ag::Var<T>::leaf(src.ln_attn.gamma.value(), false);
  w.attn_norm.beta = ag::Var<T>::leaf(src.ln_attn.beta.value(), false);
  w.attn_norm.eps = src.ln_attn.eps;
  w.global_attn.wq = ag::Var<T>::leaf(src.attn.wq.value(), false);
  w.global_attn.wk = ag::Var<T>::leaf(src.attn.wk.value(), false);
  w.global_attn.wv = ag::Var<T>::leaf(src.attn.wv.value(), false);
  w.global_attn.wo = ag::Var<T>::leaf(Tensor<T>({cfg.dim, cfg.dim}), false);
  w.global_attn.heads = src.attn.heads;
  w.global_attn.use_rope2d = true;
  w.down_factor = down_factor;
  return w;
}

// Non-overlapping patches, flattened row-major (patch rows, patch cols,
// channels), projected and shifted by the learned position embedding.
template <typename T>
FeatureMap<T> patch_embed(const ImageBuffer& img, const VitConfig& cfg,
                          const VitWeights<T>& w) {
  cfg.validate();
  if (img.height != cfg.input_size || img.width != cfg.input_size)
    throw std::invalid_argument("patch_embed: image must be " +
                                std::to_string(cfg.input_size) + " square");
  if (img.channels != cfg.channels)
    throw std::invalid_argument("patch_embed: channel count mismatch");
  const int64_t p = cfg.patch_size, side = cfg.tokens_per_side(), c = cfg.channels;
  Tensor<T> patches({side * side, p * p * c});
  for (int64_t pi = 0; pi < side; ++pi)
    for (int64_t pj = 0; pj < side; ++pj) {
      const int64_t tok = pi * side + pj;
      for (int64_t a = 0; a < p; ++a)
        for (int64_t b = 0; b < p; ++b)
          for (int64_t ch = 0; ch < c; ++ch)
            patches(tok, (a * p + b) * c + ch) =
                static_cast<T>(img.at(pi * p + a, pj * p + b, ch));
    }
  auto tokens = ag::add(linear(ag::constant(std::move(patches)), w.patch_proj), w.pos_embed);
  return FeatureMap<T>{tokens, side, side};
}

// Pre-norm encoder over a batch of slices sharing one weight set. Per layer:
//   x <- x + SelfAttn(LN(x)) [+ SRA({LN(x_j)}) when the layer has an adapter]
//   x <- x + MLP(LN(x))
// The adapter reads the same normalized input as the attention sublayer and
// couples all slices through the merged map; plain layers treat slices
// independently.
template <typename T>
std::vector<FeatureMap<T>> encoder_forward(
    const std::vector<FeatureMap<T>>& slices, const GridSpec& grid,
    const VitConfig& cfg, const VitWeights<T>& w,
    const std::map<int, SraWeights<T>>* adapters = nullptr) {
  if (slices.empty()) throw std::invalid_argument("encoder_forward: no slices");
  const int64_t ht = slices[0].rows, wt = slices[0].cols;
  for (const auto& s : slices)
    if (s.rows != ht || s.cols != wt)
      throw std::invalid_argument("encoder_forward: slices must share one spatial shape");
  if (adapters)
    for (const auto& [l, _] : *adapters)
      if (l < 0 || l >= static_cast<int>(w.layers.size()))
        throw std::invalid_argument("encoder_forward: adapter layer out of range");

  std::vector<ag::Var<T>> x;
  x.reserve(slices.size());
  for (const auto& s : slices) x.push_back(s.tokens);

  for (int l = 0; l < static_cast<int>(w.layers.size()); ++l) {
    const auto& layer = w.layers[static_cast<size_t>(l)];
    std::vector<ag::Var<T>> normed(x.size());
    for (size_t i = 0; i < x.size(); ++i) normed[i] = layer_norm(x[i], layer.ln_attn);

    const SraWeights<T>* sra = nullptr;
    if (adapters) {
      auto it = adapters->find(l);
      if (it != adapters->end()) sra = &it->second;
    }
    std::vector<FeatureMap<T>> sra_out;
    if (sra) {
      std::vector<FeatureMap<T>> normed_maps;
      normed_maps.reserve(x.size());
      for (const auto& nv : normed) normed_maps.push_back(FeatureMap<T>{nv, ht, wt});
      sra_out = sra_forward(normed_maps, grid, *sra);
    }

    for (size_t i = 0; i < x.size(); ++i) {
      x[i] = ag::add(x[i], mhsa(normed[i], layer.attn));
      if (sra) x[i] = ag::add(x[i], sra_out[i].tokens);
      auto h = layer_norm(x[i], layer.ln_mlp);
      x[i] = ag::add(x[i], linear(ag::gelu(linear(h, layer.mlp_fc)), layer.mlp_out));
    }
  }

  std::vector<FeatureMap<T>> out;
  out.reserve(x.size());
  for (const auto& xv : x) out.push_back(FeatureMap<T>{xv, ht, wt});
  return out;
}

}  // namespace hires
