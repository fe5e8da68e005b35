// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "icx/backbone.hpp"
#include "icx/tensor.hpp"

namespace icx {

/// Two-affine GELU classification head reading one layer's query tokens.
struct DecoderWeights {
  Tensor hidden_w;  // [d_model x d_hidden]
  Tensor hidden_b;  // [d_hidden]
  Tensor out_w;     // [d_hidden x max_classes]
  Tensor out_b;     // [max_classes]
  std::size_t layer_index = 0;

  static DecoderWeights init(const ModelConfig& config, std::size_t layer_index, std::uint64_t seed);
  /// Names are dec{layer_index}.{hidden,out}.{w,b}.
  NamedTensors named_parameters() const;
  std::vector<Tensor> parameters() const;
  DecoderWeights clone() const;
};

/// One decoder per encoder layer; decoder(i) reads activations at layer i.
class DecoderBank {
 public:
  DecoderBank() = default;
  /// `decoders` must hold layer indices 1..N in order.
  explicit DecoderBank(std::vector<DecoderWeights> decoders);

  std::size_t n_layers() const { return decoders_.size(); }
  const DecoderWeights& decoder(std::size_t layer) const;
  const std::vector<DecoderWeights>& decoders() const { return decoders_; }
  const DecoderWeights& final_decoder() const { return decoders_.back(); }
  NamedTensors named_parameters() const;

 private:
  std::vector<DecoderWeights> decoders_;
};

/// Logits [n_test x n_classes] for the trailing n_test rows of `acts`.
/// Throws ContractError when acts.layer_index != dec.layer_index.
Tensor decode(const LayerActivations& acts, const DecoderWeights& dec, std::size_t n_classes);
/// Same head applied regardless of which layer it was trained on.
Tensor decode_unchecked(const LayerActivations& acts, const DecoderWeights& dec,
                        std::size_t n_classes);

/// FLOPs of one decode call, including the softmax over its output.
std::uint64_t decode_flops(const ModelConfig& config, std::size_t n_test, std::size_t n_classes);

}  // namespace icx
