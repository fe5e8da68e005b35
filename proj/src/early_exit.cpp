// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/early_exit.hpp"

#include <chrono>
#include <cmath>
#include <string>

#include "icx/error.hpp"

namespace icx {

void ExitConfig::validate(std::size_t n_layers) const {
  if (!(tau >= 0.0)) throw ConfigError("exit: tau must be >= 0");
  if (min_layer < 1 || min_layer > n_layers) {
    throw ConfigError("exit: min_layer " + std::to_string(min_layer) + " outside [1, " +
                      std::to_string(n_layers) + "]");
  }
}

double mean_entropy(const Tensor& probs) {
  const std::size_t n = probs.rows(), k = probs.cols();
  if (n == 0 || k == 0) throw ContractError("mean_entropy: empty distribution matrix");
  const auto p = probs.data();
  double total = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double row_sum = 0.0, h = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double v = p[r * k + j];
      if (!(v >= 0.0)) throw ContractError("mean_entropy: negative or NaN probability in row " + std::to_string(r));
      row_sum += v;
      if (v > 0.0) h -= v * std::log(v);
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw ContractError("mean_entropy: row " + std::to_string(r) + " sums to " + std::to_string(row_sum));
    }
    total += h;
  }
  return total / static_cast<double>(n);
}

ExitReport predict_early_exit(const SyntheticTask& task, const BackboneWeights& backbone,
                              const DecoderBank& bank, const ExitConfig& config) {
  const std::size_t n_layers = backbone.config.n_layers;
  if (bank.n_layers() != n_layers) {
    throw ContractError("decoder bank has " + std::to_string(bank.n_layers()) +
                        " decoders for a backbone of depth " + std::to_string(n_layers));
  }
  config.validate(n_layers);
  const double log_k = std::log(static_cast<double>(task.n_classes));

  const auto started = std::chrono::steady_clock::now();
  ExitReport report;
  LayerActivations acts = embed(task, backbone);
  for (std::size_t layer = 1; layer <= n_layers; ++layer) {
    acts = encode_layer(acts, layer - 1, backbone);
    if (layer < config.min_layer) continue;
    Tensor probs = softmax(decode(acts, bank.decoder(layer), task.n_classes));
    ++report.decode_count;
    double h = mean_entropy(probs);
    if (config.normalize_entropy) h /= log_k;
    report.entropy_trace.push_back(h);
    report.probs = std::move(probs);
    report.exit_layer = layer;
    if (h < config.tau) break;
  }
  report.elapsed_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

FlopBreakdown count_flops(const ModelConfig& config, std::size_t n_train, std::size_t n_test,
                          std::size_t n_classes, std::size_t exit_layer, std::size_t min_layer) {
  if (exit_layer < 1 || exit_layer > config.n_layers) {
    throw ContractError("count_flops: exit layer " + std::to_string(exit_layer) + " outside [1, " +
                        std::to_string(config.n_layers) + "]");
  }
  FlopBreakdown f;
  f.embedding = embed_flops(config, n_train, n_test);
  f.encoder = exit_layer * encoder_layer_flops(config, n_train, n_test);
  const std::size_t decodes = exit_layer >= min_layer ? exit_layer - min_layer + 1 : 0;
  f.decoding = decodes * decode_flops(config, n_test, n_classes);
  return f;
}

FlopBreakdown count_flops(const SyntheticTask& task, const ModelConfig& config,
                          std::size_t exit_layer, std::size_t min_layer) {
  return count_flops(config, task.n_train(), task.n_test(), task.n_classes, exit_layer, min_layer);
}

}  // namespace icx
