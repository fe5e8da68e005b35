// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/decoder.hpp"

#include <string>

#include "icx/error.hpp"
#include "icx/rng.hpp"

namespace icx {

DecoderWeights DecoderWeights::init(const ModelConfig& config, std::size_t layer_index,
                                    std::uint64_t seed) {
  const std::size_t d = config.d_model, hidden = config.decoder_width();
  Pcg32 rng = Pcg32::keyed(seed, 0xdec0de00 + layer_index);
  auto normal = [&rng](Shape shape) {
    Tensor t = Tensor::zeros(std::move(shape), true);
    for (auto& v : t.mutable_data()) v = rng.normal(0.0, 0.02);
    return t;
  };
  DecoderWeights w;
  w.hidden_w = normal({d, hidden});
  w.hidden_b = Tensor::zeros({hidden}, true);
  w.out_w = normal({hidden, config.max_classes});
  w.out_b = Tensor::zeros({config.max_classes}, true);
  w.layer_index = layer_index;
  return w;
}

NamedTensors DecoderWeights::named_parameters() const {
  const std::string p = "dec" + std::to_string(layer_index) + ".";
  return {{p + "hidden.w", hidden_w}, {p + "hidden.b", hidden_b}, {p + "out.w", out_w}, {p + "out.b", out_b}};
}

std::vector<Tensor> DecoderWeights::parameters() const { return {hidden_w, hidden_b, out_w, out_b}; }

DecoderWeights DecoderWeights::clone() const {
  return {hidden_w.clone(), hidden_b.clone(), out_w.clone(), out_b.clone(), layer_index};
}

DecoderBank::DecoderBank(std::vector<DecoderWeights> decoders) : decoders_(std::move(decoders)) {
  for (std::size_t i = 0; i < decoders_.size(); ++i) {
    if (decoders_[i].layer_index != i + 1) {
      throw ContractError("decoder bank slot " + std::to_string(i + 1) + " holds a decoder for layer " +
                          std::to_string(decoders_[i].layer_index));
    }
  }
}

const DecoderWeights& DecoderBank::decoder(std::size_t layer) const {
  if (layer < 1 || layer > decoders_.size()) {
    throw ContractError("no decoder for layer " + std::to_string(layer));
  }
  return decoders_[layer - 1];
}

NamedTensors DecoderBank::named_parameters() const {
  NamedTensors out;
  for (const auto& d : decoders_) {
    auto named = d.named_parameters();
    out.insert(out.end(), named.begin(), named.end());
  }
  return out;
}

Tensor decode_unchecked(const LayerActivations& acts, const DecoderWeights& dec,
                        std::size_t n_classes) {
  if (n_classes < 1 || n_classes > dec.out_w.cols()) {
    throw CapacityError("decode: " + std::to_string(n_classes) + " classes exceed head width " +
                        std::to_string(dec.out_w.cols()));
  }
  const std::size_t n_rows = acts.tokens.rows();
  if (acts.n_test == 0 || acts.n_test > n_rows) throw ContractError("decode: no query rows");
  const Tensor queries = slice_rows(acts.tokens, n_rows - acts.n_test, acts.n_test);
  const Tensor hidden = gelu(add_bias(matmul(queries, dec.hidden_w), dec.hidden_b));
  const Tensor logits = add_bias(matmul(hidden, dec.out_w), dec.out_b);
  return slice_cols(logits, 0, n_classes);
}

Tensor decode(const LayerActivations& acts, const DecoderWeights& dec, std::size_t n_classes) {
  if (acts.layer_index != dec.layer_index) {
    throw ContractError("decode: activations at layer " + std::to_string(acts.layer_index) +
                        " given to the decoder for layer " + std::to_string(dec.layer_index));
  }
  return decode_unchecked(acts, dec, n_classes);
}

std::uint64_t decode_flops(const ModelConfig& c, std::size_t n_test, std::size_t n_classes) {
  const std::uint64_t n = n_test, d = c.d_model, h = c.decoder_width(), k = c.max_classes;
  return flop_cost::matmul(n, d, h) + n * h + n * h * flop_cost::kGeluPerElement +
         flop_cost::matmul(n, h, k) + n * k + n * n_classes * flop_cost::kSoftmaxPerElement;
}

}  // namespace icx
