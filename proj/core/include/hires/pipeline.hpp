#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hires/assembler.hpp"
#include "hires/entitygrid.hpp"
#include "hires/sms.hpp"
#include "hires/vit.hpp"

namespace hires {

struct PipelineConfig {
  VitConfig vit;
  int64_t sms_pool = 2;
  int64_t sms_heads = 4;
  int64_t sra_down_factor = 2;
  int64_t max_slices = 16;
  bool use_separators = true;

  void validate() const {
    vit.validate();
    if (sms_pool < 1 || vit.tokens_per_side() % sms_pool != 0)
      throw std::invalid_argument("pipeline config: pool kernel must divide the token grid");
    if (max_slices < 1)
      throw std::invalid_argument("pipeline config: max_slices must be >= 1");
  }
};

std::string pipeline_config_to_json(const PipelineConfig& cfg);
PipelineConfig pipeline_config_from_json(const std::string& json_text);

template <typename T>
struct PipelineWeights {
  VitWeights<T> vit;
  std::map<int, SraWeights<T>> adapters;
  SmsWeights<T> sms;
  SeparatorSet<T> separators;
};

template <typename T>
PipelineWeights<T> init_pipeline_weights(const PipelineConfig& cfg, uint64_t seed) {
  cfg.validate();
  PipelineWeights<T> w;
  w.vit = init_vit_weights<T>(cfg.vit, mix_seed(seed, 0));
  for (int l : cfg.vit.adapter_layers)
    w.adapters.emplace(l, init_sra_from_host(cfg.vit, w.vit, l, cfg.sra_down_factor));
  w.sms = init_sms_weights<T>(cfg.vit.dim, cfg.sms_heads, cfg.sms_pool, mix_seed(seed, 1));
  w.separators = init_separators<T>(cfg.vit.dim, mix_seed(seed, 2));
  return w;
}

inline GridSpec single_slice_grid(int64_t r) {
  GridSpec g;
  g.r = r;
  g.m = 1;
  g.n = 1;
  g.canvas_h = r;
  g.canvas_w = r;
  g.scaled_h = r;
  g.scaled_w = r;
  return g;
}

// Full vision path: dynamic grid, low-resolution overview plus slices through
// the shared encoder (adapters on the slice branch only), the shared
// compressor on every view, then the separator-delimited sequence.
template <typename T>
AssembledSequence<T> encode(const ImageBuffer& img, const PipelineConfig& cfg,
                            const PipelineWeights<T>& w, bool use_adapters = true) {
  cfg.validate();
  const int64_t r = cfg.vit.input_size;
  const GridSpec grid = compute_grid(img.height, img.width, r, cfg.max_slices);
  const ImageBuffer canvas = pad_to_canvas(img, grid);
  const std::vector<ImageBuffer> slice_px = extract_slices(canvas, grid);
  const ImageBuffer low_px = lowres_view(img, r);

  std::vector<FeatureMap<T>> low_in = {patch_embed(low_px, cfg.vit, w.vit)};
  const std::vector<FeatureMap<T>> low_enc =
      encoder_forward(low_in, single_slice_grid(r), cfg.vit, w.vit, nullptr);
  const ag::Var<T> low_tokens = sms_forward(low_enc[0], w.sms).tokens;

  std::vector<FeatureMap<T>> slice_in;
  slice_in.reserve(slice_px.size());
  for (const auto& px : slice_px) slice_in.push_back(patch_embed(px, cfg.vit, w.vit));
  const std::map<int, SraWeights<T>>* adapters =
      (use_adapters && !w.adapters.empty()) ? &w.adapters : nullptr;
  const std::vector<FeatureMap<T>> slice_enc =
      encoder_forward(slice_in, grid, cfg.vit, w.vit, adapters);
  std::vector<ag::Var<T>> slice_tokens;
  slice_tokens.reserve(slice_enc.size());
  for (const auto& f : slice_enc) slice_tokens.push_back(sms_forward(f, w.sms).tokens);

  return assemble(low_tokens, slice_tokens, grid, w.separators, cfg.use_separators);
}

// Flat name -> tensor view of the weight bundle, for the TNSR1 manifest
// directory format.
template <typename T>
std::map<std::string, Tensor<T>> pipeline_named_tensors(const PipelineWeights<T>& w) {
  std::map<std::string, Tensor<T>> out;
  out["vit.patch_proj.weight"] = w.vit.patch_proj.weight.value();
  out["vit.patch_proj.bias"] = w.vit.patch_proj.bias.value();
  out["vit.pos_embed"] = w.vit.pos_embed.value();
  for (size_t l = 0; l < w.vit.layers.size(); ++l) {
    const auto& layer = w.vit.layers[l];
    const std::string p = "vit.layer" + std::to_string(l) + ".";
    out[p + "ln_attn.gamma"] = layer.ln_attn.gamma.value();
    out[p + "ln_attn.beta"] = layer.ln_attn.beta.value();
    out[p + "attn.wq"] = layer.attn.wq.value();
    out[p + "attn.wk"] = layer.attn.wk.value();
    out[p + "attn.wv"] = layer.attn.wv.value();
    out[p + "attn.wo"] = layer.attn.wo.value();
    out[p + "ln_mlp.gamma"] = layer.ln_mlp.gamma.value();
    out[p + "ln_mlp.beta"] = layer.ln_mlp.beta.value();
    out[p + "mlp_fc.weight"] = layer.mlp_fc.weight.value();
    out[p + "mlp_fc.bias"] = layer.mlp_fc.bias.value();
    out[p + "mlp_out.weight"] = layer.mlp_out.weight.value();
    out[p + "mlp_out.bias"] = layer.mlp_out.bias.value();
  }
  for (const auto& [l, sra] : w.adapters) {
    const std::string p = "sra.layer" + std::to_string(l) + ".";
    out[p + "dw_kernel"] = sra.dw_kernel.value();
    out[p + "attn_norm.gamma"] = sra.attn_norm.gamma.value();
    out[p + "attn_norm.beta"] = sra.attn_norm.beta.value();
    out[p + "attn.wq"] = sra.global_attn.wq.value();
    out[p + "attn.wk"] = sra.global_attn.wk.value();
    out[p + "attn.wv"] = sra.global_attn.wv.value();
    out[p + "attn.wo"] = sra.global_attn.wo.value();
  }
  out["sms.q_norm.gamma"] = w.sms.q_norm.gamma.value();
  out["sms.q_norm.beta"] = w.sms.q_norm.beta.value();
  out["sms.kv_norm.gamma"] = w.sms.kv_norm.gamma.value();
  out["sms.kv_norm.beta"] = w.sms.kv_norm.beta.value();
  out["sms.cross.wq"] = w.sms.cross.wq.value();
  out["sms.cross.wk"] = w.sms.cross.wk.value();
  out["sms.cross.wv"] = w.sms.cross.wv.value();
  out["sms.cross.wo"] = w.sms.cross.wo.value();
  out["sms.ffn_norm.gamma"] = w.sms.ffn_norm.gamma.value();
  out["sms.ffn_norm.beta"] = w.sms.ffn_norm.beta.value();
  out["sms.ffn_fc.weight"] = w.sms.ffn_fc.weight.value();
  out["sms.ffn_fc.bias"] = w.sms.ffn_fc.bias.value();
  out["sms.ffn_out.weight"] = w.sms.ffn_out.weight.value();
  out["sms.ffn_out.bias"] = w.sms.ffn_out.bias.value();
  out["sms.out_norm.gamma"] = w.sms.out_norm.gamma.value();
  out["sms.out_norm.beta"] = w.sms.out_norm.beta.value();
  out["sep.global"] = w.separators.sep_global.value();
  out["sep.slice"] = w.separators.sep_slice.value();
  out["sep.row"] = w.separators.sep_row.value();
  return out;
}

template <typename T>
PipelineWeights<T> pipeline_weights_from_tensors(const PipelineConfig& cfg,
                                                 const std::map<std::string, Tensor<T>>& t) {
  cfg.validate();
  auto get = [&](const std::string& name) -> ag::Var<T> {
    auto it = t.find(name);
    if (it == t.end()) throw std::runtime_error("weights: missing tensor " + name);
    return ag::Var<T>::leaf(it->second, false);
  };
  PipelineWeights<T> w;
  w.vit.patch_proj.weight = get("vit.patch_proj.weight");
  w.vit.patch_proj.bias = get("vit.patch_proj.bias");
  w.vit.pos_embed = get("vit.pos_embed");
  w.vit.layers.resize(static_cast<size_t>(cfg.vit.depth));
  for (size_t l = 0; l < w.vit.layers.size(); ++l) {
    auto& layer = w.vit.layers[l];
    const std::string p = "vit.layer" + std::to_string(l) + ".";
    layer.ln_attn.gamma = get(p + "ln_attn.gamma");
    layer.ln_attn.beta = get(p + "ln_attn.beta");
    layer.attn.wq = get(p + "attn.wq");
    layer.attn.wk = get(p + "attn.wk");
    layer.attn.wv = get(p + "attn.wv");
    layer.attn.wo = get(p + "attn.wo");
    layer.attn.heads = cfg.vit.heads;
    layer.ln_mlp.gamma = get(p + "ln_mlp.gamma");
    layer.ln_mlp.beta = get(p + "ln_mlp.beta");
    layer.mlp_fc.weight = get(p + "mlp_fc.weight");
    layer.mlp_fc.bias = get(p + "mlp_fc.bias");
    layer.mlp_out.weight = get(p + "mlp_out.weight");
    layer.mlp_out.bias = get(p + "mlp_out.bias");
  }
  for (int l : cfg.vit.adapter_layers) {
    const std::string p = "sra.layer" + std::to_string(l) + ".";
    SraWeights<T> sra;
    sra.dw_kernel = get(p + "dw_kernel");
    sra.attn_norm.gamma = get(p + "attn_norm.gamma");
    sra.attn_norm.beta = get(p + "attn_norm.beta");
    sra.global_attn.wq = get(p + "attn.wq");
    sra.global_attn.wk = get(p + "attn.wk");
    sra.global_attn.wv = get(p + "attn.wv");
    sra.global_attn.wo = get(p + "attn.wo");
    sra.global_attn.heads = cfg.vit.heads;
    sra.global_attn.use_rope2d = true;
    sra.down_factor = cfg.sra_down_factor;
    w.adapters.emplace(l, std::move(sra));
  }
  w.sms.pool = cfg.sms_pool;
  w.sms.q_norm.gamma = get("sms.q_norm.gamma");
  w.sms.q_norm.beta = get("sms.q_norm.beta");
  w.sms.kv_norm.gamma = get("sms.kv_norm.gamma");
  w.sms.kv_norm.beta = get("sms.kv_norm.beta");
  w.sms.cross.wq = get("sms.cross.wq");
  w.sms.cross.wk = get("sms.cross.wk");
  w.sms.cross.wv = get("sms.cross.wv");
  w.sms.cross.wo = get("sms.cross.wo");
  w.sms.cross.heads = cfg.sms_heads;
  w.sms.ffn_norm.gamma = get("sms.ffn_norm.gamma");
  w.sms.ffn_norm.beta = get("sms.ffn_norm.beta");
  w.sms.ffn_fc.weight = get("sms.ffn_fc.weight");
  w.sms.ffn_fc.bias = get("sms.ffn_fc.bias");
  w.sms.ffn_out.weight = get("sms.ffn_out.weight");
  w.sms.ffn_out.bias = get("sms.ffn_out.bias");
  w.sms.out_norm.gamma = get("sms.out_norm.gamma");
  w.sms.out_norm.beta = get("sms.out_norm.beta");
  w.separators.sep_global = get("sep.global");
  w.separators.sep_slice = get("sep.slice");
  w.separators.sep_row = get("sep.row");
  return w;
}

// Linear probe over the mean-pooled assembled sequence; stands in for the
// out-of-scope language model so the benchmark loop closes end to end.
template <typename T>
struct ToyHeadWeights {
  LinearWeights<T> head;  // [D, C]
  std::vector<std::string> classes;
};

struct ToyRunResult {
  entitygrid::EvalReport with_sra;
  entitygrid::EvalReport zero_sra;
  std::vector<double> loss_with;  // epoch 0 is the untrained loss
  std::vector<double> loss_zero;
  std::vector<std::string> classes;
  bool direction_holds = false;  // with-SRA D1 >= zero-SRA D1
};

std::string toy_run_result_to_json(const ToyRunResult& r);

namespace detail {

template <typename T>
void collect_trainable(PipelineWeights<T>& w, ToyHeadWeights<T>& head, bool include_sra,
                       bool include_separators, std::vector<ag::Var<T>>& params) {
  if (include_sra) {
    for (auto& [l, sra] : w.adapters) {
      params.push_back(sra.dw_kernel);
      params.push_back(sra.attn_norm.gamma);
      params.push_back(sra.attn_norm.beta);
      params.push_back(sra.global_attn.wq);
      params.push_back(sra.global_attn.wk);
      params.push_back(sra.global_attn.wv);
      params.push_back(sra.global_attn.wo);
    }
  }
  params.push_back(w.sms.q_norm.gamma);
  params.push_back(w.sms.q_norm.beta);
  params.push_back(w.sms.kv_norm.gamma);
  params.push_back(w.sms.kv_norm.beta);
  params.push_back(w.sms.cross.wq);
  params.push_back(w.sms.cross.wk);
  params.push_back(w.sms.cross.wv);
  params.push_back(w.sms.cross.wo);
  params.push_back(w.sms.ffn_norm.gamma);
  params.push_back(w.sms.ffn_norm.beta);
  params.push_back(w.sms.ffn_fc.weight);
  params.push_back(w.sms.ffn_fc.bias);
  params.push_back(w.sms.ffn_out.weight);
  params.push_back(w.sms.ffn_out.bias);
  params.push_back(w.sms.out_norm.gamma);
  params.push_back(w.sms.out_norm.beta);
  if (include_separators) {
    params.push_back(w.separators.sep_global);
    params.push_back(w.separators.sep_slice);
    params.push_back(w.separators.sep_row);
  }
  params.push_back(head.head.weight);
  params.push_back(head.head.bias);
}

}  // namespace detail

// One training/eval pass over the identification items of a corpus.
// Full-batch gradient descent with step halving whenever a step would
// increase the loss, so the recorded curve is non-increasing.
template <typename T>
struct ToyTrainOutput {
  entitygrid::EvalReport report;
  std::vector<double> losses;
  std::optional<double> d1;
};

template <typename T>
ToyTrainOutput<T> toy_train_one(const entitygrid::Corpus& corpus,
                                const std::vector<ImageBuffer>& images,
                                const std::vector<const entitygrid::QAItem*>& items,
                                const PipelineConfig& cfg, bool use_sra, int epochs,
                                uint64_t seed, double lr) {
  PipelineWeights<T> weights = init_pipeline_weights<T>(cfg, seed);
  const std::vector<entitygrid::EntitySpec> catalog =
      entitygrid::catalog_for_resolution(corpus.manifest.spec.r);
  ToyHeadWeights<T> head;
  for (const auto& e : catalog) head.classes.push_back(e.label);
  std::sort(head.classes.begin(), head.classes.end());
  const int64_t c = static_cast<int64_t>(head.classes.size());
  head.head.weight = ag::Var<T>::leaf(Tensor<T>({cfg.vit.dim, c}), false);
  head.head.bias = ag::Var<T>::leaf(Tensor<T>({c}), false);
  std::map<std::string, int64_t> class_of;
  for (int64_t i = 0; i < c; ++i) class_of[head.classes[static_cast<size_t>(i)]] = i;

  std::vector<int64_t> labels;
  labels.reserve(items.size());
  for (const auto* item : items) {
    const std::string answer_text = item->options[static_cast<size_t>(item->answer - 'A')];
    auto it = class_of.find(answer_text);
    if (it == class_of.end())
      throw std::runtime_error("answer label not in class space: " + answer_text);
    labels.push_back(it->second);
  }

  std::vector<ag::Var<T>> params;
  detail::collect_trainable(weights, head, use_sra, cfg.use_separators, params);
  for (auto& p : params) p.set_requires_grad(true);

  auto batch_logits = [&]() -> ag::Var<T> {
    std::vector<ag::Var<T>> rows;
    rows.reserve(items.size());
    for (size_t i = 0; i < items.size(); ++i) {
      auto seq = encode(images[i], cfg, weights, use_sra);
      rows.push_back(linear(ag::mean_rows(seq.tokens), head.head));
    }
    return ag::concat_rows(rows);
  };
  auto batch_loss_value = [&]() -> double {
    ag::NoGradGuard off;
    return static_cast<double>(ag::softmax_xent(batch_logits(), labels).value()[0]);
  };

  ToyTrainOutput<T> out;
  out.losses.push_back(batch_loss_value());
  double step = lr;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (auto& p : params) p.zero_grad();
    ag::Var<T> loss = ag::softmax_xent(batch_logits(), labels);
    const double before = static_cast<double>(loss.value()[0]);
    if (!std::isfinite(before))
      throw std::runtime_error("training diverged (loss is not finite) at epoch " +
                               std::to_string(epoch));
    loss.backward();
    std::vector<Tensor<T>> saved;
    saved.reserve(params.size());
    for (auto& p : params) saved.push_back(p.value());
    auto apply_step = [&](double s) {
      for (size_t i = 0; i < params.size(); ++i) {
        Tensor<T>& v = params[i].mutable_value();
        const Tensor<T>& g = params[i].grad();
        if (g.numel() == 0) continue;
        for (int64_t k = 0; k < v.numel(); ++k)
          v[k] = saved[i][k] - static_cast<T>(s) * g[k];
      }
    };
    apply_step(step);
    double after = batch_loss_value();
    int halvings = 0;
    while ((!std::isfinite(after) || after > before) && halvings < 30) {
      step *= 0.5;
      apply_step(step);
      after = batch_loss_value();
      ++halvings;
    }
    if (!std::isfinite(after) || after > before) {
      // No usable descent direction at representable step sizes; keep the
      // previous iterate.
      for (size_t i = 0; i < params.size(); ++i) params[i].mutable_value() = saved[i];
      after = before;
    }
    out.losses.push_back(after);
  }

  // Option-restricted argmax: score each option text with its class logit.
  std::map<std::string, char> predictions;
  std::map<std::string, int> position_of;
  {
    ag::NoGradGuard off;
    for (size_t i = 0; i < items.size(); ++i) {
      auto seq = encode(images[i], cfg, weights, use_sra);
      const Tensor<T> logits = linear(ag::mean_rows(seq.tokens), head.head).value();
      int best = 0;
      double best_score = -1e300;
      for (int o = 0; o < 4; ++o) {
        auto it = class_of.find(items[i]->options[static_cast<size_t>(o)]);
        if (it == class_of.end()) continue;
        const double s = static_cast<double>(logits(0, it->second));
        if (s > best_score) {
          best_score = s;
          best = o;
        }
      }
      predictions[items[i]->image_id] = static_cast<char>('A' + best);
      position_of[items[i]->image_id] = items[i]->probe_position;
    }
  }
  std::vector<entitygrid::QAItem> eval_items;
  eval_items.reserve(items.size());
  for (const auto* item : items) eval_items.push_back(*item);
  out.report = entitygrid::evaluate(predictions, eval_items, position_of);
  out.d1 = out.report.discrepancy1;
  return out;
}

// Trains and evaluates the adapter-enabled and adapter-free configurations
// from identical initializations and reports both.
template <typename T>
ToyRunResult toy_train_eval(const entitygrid::Corpus& corpus, const PipelineConfig& cfg,
                            int epochs, uint64_t seed, double lr = 0.5) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::vector<const entitygrid::QAItem*> items;
  for (const auto& item : corpus.items)
    if (item.task == entitygrid::Task::identification) items.push_back(&item);
  if (items.empty())
    throw std::invalid_argument("toy_train_eval: corpus has no identification items");
  std::vector<ImageBuffer> images;
  images.reserve(items.size());
  for (const auto* item : items)
    images.push_back(read_pnm((fs::path(corpus.dir) / item->image_path).string()));

  ToyRunResult r;
  auto with = toy_train_one<T>(corpus, images, items, cfg, /*use_sra=*/true, epochs, seed, lr);
  auto zero = toy_train_one<T>(corpus, images, items, cfg, /*use_sra=*/false, epochs, seed, lr);
  r.with_sra = with.report;
  r.zero_sra = zero.report;
  r.loss_with = with.losses;
  r.loss_zero = zero.losses;
  if (!items.empty()) {
    const std::vector<entitygrid::EntitySpec> catalog =
        entitygrid::catalog_for_resolution(corpus.manifest.spec.r);
    for (const auto& e : catalog) r.classes.push_back(e.label);
    std::sort(r.classes.begin(), r.classes.end());
  }
  r.direction_holds = with.d1 && zero.d1 && *with.d1 >= *zero.d1 - 1e-12;
  return r;
}

}  // namespace hires
