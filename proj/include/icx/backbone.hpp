// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "icx/prior.hpp"
#include "icx/tensor.hpp"

namespace icx {

struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 6;
  std::size_t n_heads = 4;
  std::size_t d_ff = 256;
  std::size_t max_features = 8;
  std::size_t max_classes = 4;
  /// Hidden width of every decoder head; 0 means 2 * d_model.
  std::size_t decoder_hidden = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t decoder_width() const { return decoder_hidden ? decoder_hidden : 2 * d_model; }
  bool operator==(const ModelConfig&) const = default;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

struct EncoderLayerWeights {
  Tensor ln1_gain, ln1_bias;
  Tensor query_w, query_b, key_w, key_b, value_w, value_b, out_w, out_b;
  Tensor ln2_gain, ln2_bias;
  Tensor ff1_w, ff1_b, ff2_w, ff2_b;
};

struct BackboneWeights {
  ModelConfig config;
  Tensor feature_w;        // [max_features x d_model]
  Tensor feature_b;        // [d_model]
  Tensor label_embedding;  // [max_classes + 1 x d_model]; last row marks query rows
  std::vector<EncoderLayerWeights> layers;

  /// Normal(0, 0.02) projections and embeddings, zero biases, unit norm gains.
  static BackboneWeights init(const ModelConfig& config);
  /// Handles aliasing this object's storage, in checkpoint order.
  NamedTensors named_parameters() const;
  std::vector<Tensor> parameters() const;
  /// Deep copy.
  BackboneWeights clone() const;
};

/// Token matrix after `layer_index` encoder layers (0 = straight after embedding).
/// Rows are the context rows followed by the query rows.
struct LayerActivations {
  Tensor tokens;
  std::size_t layer_index = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
};

/// Throws CapacityError if the task does not fit the model.
void check_capacity(const SyntheticTask& task, const ModelConfig& config);

LayerActivations embed(const SyntheticTask& task, const BackboneWeights& weights);
/// Applies encoder layer `layer` (0-based) to activations at layer_index == layer.
LayerActivations encode_layer(const LayerActivations& acts, std::size_t layer,
                              const BackboneWeights& weights);
LayerActivations forward_until(const SyntheticTask& task, const BackboneWeights& weights,
                               std::size_t n_layers);

/// Analytic FLOP costs, using the same per-kernel costs as the instrumented
/// counter.
std::uint64_t embed_flops(const ModelConfig& config, std::size_t n_train, std::size_t n_test);
std::uint64_t encoder_layer_flops(const ModelConfig& config, std::size_t n_train,
                                  std::size_t n_test);

}  // namespace icx
