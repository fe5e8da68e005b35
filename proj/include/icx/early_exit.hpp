// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Entropy-gated early exit over the encoder stack.
//
// After each encoder layer the query rows are decoded by that layer's
// decoder and the mean predictive entropy over all query rows is compared
// with tau. The pass stops at the first layer whose mean entropy is strictly
// below tau; otherwise it runs to the last layer and returns that decoder's
// prediction.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "icx/backbone.hpp"
#include "icx/decoder.hpp"
#include "icx/tensor.hpp"

namespace icx {

enum class ExitPolicy {
  BatchMean,  // whole query set exits together on its mean entropy
};

struct ExitConfig {
  double tau = 0.0;  // nats
  ExitPolicy policy = ExitPolicy::BatchMean;
  /// Divide each entropy by ln K before comparing with tau.
  bool normalize_entropy = false;
  std::size_t min_layer = 1;

  /// Throws ConfigError; `n_layers` is the model depth.
  void validate(std::size_t n_layers) const;
};

struct ExitReport {
  Tensor probs;  // [n_test x K], from the decoder at exit_layer
  std::size_t exit_layer = 0;
  std::vector<double> entropy_trace;  // one entry per decoded layer, min_layer first
  std::size_t decode_count = 0;
  double elapsed_s = 0.0;
};

/// Mean over rows of -sum p log p (natural log, 0 log 0 = 0). Rows must sum
/// to 1 within 1e-6 and be non-negative, else ContractError.
double mean_entropy(const Tensor& probs);

ExitReport predict_early_exit(const SyntheticTask& task, const BackboneWeights& backbone,
                              const DecoderBank& bank, const ExitConfig& config);

/// Analytic cost of an early-exit run: embedding, `exit_layer` encoder
/// layers and one decode (with softmax) per layer in [min_layer, exit_layer].
struct FlopBreakdown {
  std::uint64_t embedding = 0;
  std::uint64_t encoder = 0;
  std::uint64_t decoding = 0;
  std::uint64_t total() const { return embedding + encoder + decoding; }
};

FlopBreakdown count_flops(const ModelConfig& config, std::size_t n_train, std::size_t n_test,
                          std::size_t n_classes, std::size_t exit_layer, std::size_t min_layer = 1);
FlopBreakdown count_flops(const SyntheticTask& task, const ModelConfig& config,
                          std::size_t exit_layer, std::size_t min_layer = 1);

}  // namespace icx
