// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/backbone.hpp"

#include <string>

#include "icx/error.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace {

constexpr double kInitStd = 0.02;

Tensor normal_tensor(Pcg32& rng, Shape shape) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto& v : t.mutable_data()) v = rng.normal(0.0, kInitStd);
  return t;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return add_bias(matmul(x, w), b); }

}  // namespace

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("model: " + msg); };
  if (d_model == 0) fail("d_model must be positive");
  if (n_heads == 0 || d_model % n_heads != 0) fail("d_model must be divisible by n_heads");
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (max_classes < 2) fail("max_classes must be >= 2");
  if (max_features < 1) fail("max_features must be >= 1");
  if (d_ff == 0) fail("d_ff must be positive");
}

BackboneWeights BackboneWeights::init(const ModelConfig& config) {
  config.validate();
  const std::size_t d = config.d_model;
  Pcg32 rng = Pcg32::keyed(config.seed, 0xbac6b0e);
  BackboneWeights w;
  w.config = config;
  w.feature_w = normal_tensor(rng, {config.max_features, d});
  w.feature_b = Tensor::zeros({d}, true);
  w.label_embedding = normal_tensor(rng, {config.max_classes + 1, d});
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    EncoderLayerWeights L;
    L.ln1_gain = Tensor::full({d}, 1.0, true);
    L.ln1_bias = Tensor::zeros({d}, true);
    L.query_w = normal_tensor(rng, {d, d});
    L.query_b = Tensor::zeros({d}, true);
    L.key_w = normal_tensor(rng, {d, d});
    L.key_b = Tensor::zeros({d}, true);
    L.value_w = normal_tensor(rng, {d, d});
    L.value_b = Tensor::zeros({d}, true);
    L.out_w = normal_tensor(rng, {d, d});
    L.out_b = Tensor::zeros({d}, true);
    L.ln2_gain = Tensor::full({d}, 1.0, true);
    L.ln2_bias = Tensor::zeros({d}, true);
    L.ff1_w = normal_tensor(rng, {d, config.d_ff});
    L.ff1_b = Tensor::zeros({config.d_ff}, true);
    L.ff2_w = normal_tensor(rng, {config.d_ff, d});
    L.ff2_b = Tensor::zeros({d}, true);
    w.layers.push_back(std::move(L));
  }
  return w;
}

NamedTensors BackboneWeights::named_parameters() const {
  NamedTensors out{{"embed.feature.w", feature_w},
                   {"embed.feature.b", feature_b},
                   {"embed.label", label_embedding}};
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = "layer" + std::to_string(l) + ".";
    out.emplace_back(p + "ln1.g", L.ln1_gain);
    out.emplace_back(p + "ln1.b", L.ln1_bias);
    out.emplace_back(p + "attn.q.w", L.query_w);
    out.emplace_back(p + "attn.q.b", L.query_b);
    out.emplace_back(p + "attn.k.w", L.key_w);
    out.emplace_back(p + "attn.k.b", L.key_b);
    out.emplace_back(p + "attn.v.w", L.value_w);
    out.emplace_back(p + "attn.v.b", L.value_b);
    out.emplace_back(p + "attn.o.w", L.out_w);
    out.emplace_back(p + "attn.o.b", L.out_b);
    out.emplace_back(p + "ln2.g", L.ln2_gain);
    out.emplace_back(p + "ln2.b", L.ln2_bias);
    out.emplace_back(p + "ff1.w", L.ff1_w);
    out.emplace_back(p + "ff1.b", L.ff1_b);
    out.emplace_back(p + "ff2.w", L.ff2_w);
    out.emplace_back(p + "ff2.b", L.ff2_b);
  }
  return out;
}

std::vector<Tensor> BackboneWeights::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

BackboneWeights BackboneWeights::clone() const {
  BackboneWeights w = *this;
  w.feature_w = feature_w.clone();
  w.feature_b = feature_b.clone();
  w.label_embedding = label_embedding.clone();
  for (auto& L : w.layers) {
    for (Tensor* t : {&L.ln1_gain, &L.ln1_bias, &L.query_w, &L.query_b, &L.key_w, &L.key_b,
                      &L.value_w, &L.value_b, &L.out_w, &L.out_b, &L.ln2_gain, &L.ln2_bias,
                      &L.ff1_w, &L.ff1_b, &L.ff2_w, &L.ff2_b})
      *t = t->clone();
  }
  return w;
}

void check_capacity(const SyntheticTask& task, const ModelConfig& config) {
  if (task.n_features() > config.max_features) {
    throw CapacityError("task has " + std::to_string(task.n_features()) +
                        " features; model supports at most " + std::to_string(config.max_features));
  }
  if (task.n_classes > config.max_classes || task.n_classes < 2) {
    throw CapacityError("task has " + std::to_string(task.n_classes) +
                        " classes; model supports 2.." + std::to_string(config.max_classes));
  }
  if (task.n_train() == 0 || task.n_test() == 0) {
    throw CapacityError("task needs at least one train row and one test row");
  }
  if (task.x_test.cols() != task.n_features() || task.x_test.rows() != task.n_test() ||
      task.x_train.rows() != task.n_train()) {
    throw DimensionError("task matrices disagree: train " + shape_string(task.x_train.shape()) +
                         ", test " + shape_string(task.x_test.shape()));
  }
  for (std::size_t y : task.y_train) {
    if (y >= task.n_classes) throw ContractError("train label out of range");
  }
}

LayerActivations embed(const SyntheticTask& task, const BackboneWeights& weights) {
  const ModelConfig& cfg = weights.config;
  check_capacity(task, cfg);
  const std::size_t n_train = task.n_train(), n_test = task.n_test();
  const std::size_t n = n_train + n_test, f = task.n_features();

  std::vector<double> padded(n * cfg.max_features, 0.0);
  const auto xtr = task.x_train.data(), xte = task.x_test.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* src = i < n_train ? xtr.data() + i * f : xte.data() + (i - n_train) * f;
    std::copy_n(src, f, padded.begin() + i * cfg.max_features);
  }
  std::vector<std::size_t> label_rows(task.y_train.begin(), task.y_train.end());
  label_rows.resize(n, cfg.max_classes);

  Tensor x({n, cfg.max_features}, std::move(padded));
  Tensor tokens =
      add(linear(x, weights.feature_w, weights.feature_b), gather_rows(weights.label_embedding, label_rows));
  return {tokens, 0, n_train, n_test};
}

LayerActivations encode_layer(const LayerActivations& acts, std::size_t layer,
                              const BackboneWeights& weights) {
  if (layer >= weights.layers.size()) {
    throw ContractError("encode_layer: layer " + std::to_string(layer) + " out of range [0, " +
                        std::to_string(weights.layers.size()) + ")");
  }
  if (acts.layer_index != layer) {
    throw ContractError("encode_layer: activations are at layer " +
                        std::to_string(acts.layer_index) + ", expected " + std::to_string(layer));
  }
  const auto& L = weights.layers[layer];
  const Tensor& x = acts.tokens;

  const Tensor h = layer_norm(x, L.ln1_gain, L.ln1_bias);
  const Tensor q = linear(h, L.query_w, L.query_b);
  const Tensor k = linear(h, L.key_w, L.key_b);
  const Tensor v = linear(h, L.value_w, L.value_b);
  const Tensor attended = context_attention(q, k, v, weights.config.n_heads, acts.n_train);
  const Tensor x2 = add(x, linear(attended, L.out_w, L.out_b));

  const Tensor h2 = layer_norm(x2, L.ln2_gain, L.ln2_bias);
  const Tensor ff = linear(gelu(linear(h2, L.ff1_w, L.ff1_b)), L.ff2_w, L.ff2_b);
  return {add(x2, ff), layer + 1, acts.n_train, acts.n_test};
}

LayerActivations forward_until(const SyntheticTask& task, const BackboneWeights& weights,
                               std::size_t n_layers) {
  if (n_layers > weights.config.n_layers) {
    throw ContractError("forward_until: " + std::to_string(n_layers) + " exceeds model depth " +
                        std::to_string(weights.config.n_layers));
  }
  LayerActivations acts = embed(task, weights);
  for (std::size_t l = 0; l < n_layers; ++l) acts = encode_layer(acts, l, weights);
  return acts;
}

std::uint64_t embed_flops(const ModelConfig& c, std::size_t n_train, std::size_t n_test) {
  const std::uint64_t n = n_train + n_test, d = c.d_model;
  // projection + bias + label-embedding add
  return flop_cost::matmul(n, c.max_features, d) + n * d + n * d;
}

std::uint64_t encoder_layer_flops(const ModelConfig& c, std::size_t n_train, std::size_t n_test) {
  const std::uint64_t n = n_train + n_test, d = c.d_model, ff = c.d_ff, heads = c.n_heads;
  const std::uint64_t dh = d / heads;
  const std::uint64_t norms = 2 * n * d * flop_cost::kLayerNormPerElement;
  const std::uint64_t projections = 4 * (flop_cost::matmul(n, d, d) + n * d);
  // Context rows see n_train keys; query rows see n_train keys plus themselves.
  const std::uint64_t keys = n * n_train + n_test;
  const std::uint64_t attention = keys * heads * (4 * dh + flop_cost::kAttentionSoftmaxPerKey);
  const std::uint64_t feed_forward = flop_cost::matmul(n, d, ff) + n * ff +
                                     n * ff * flop_cost::kGeluPerElement +
                                     flop_cost::matmul(n, ff, d) + n * d;
  const std::uint64_t residuals = 2 * n * d;
  return norms + projections + attention + feed_forward + residuals;
}

}  // namespace icx
