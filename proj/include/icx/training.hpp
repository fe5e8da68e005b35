// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Pretraining of the backbone (jointly with its final decoder) and of the
// per-layer decoders on top of the frozen backbone.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <vector>

#include "icx/backbone.hpp"
#include "icx/decoder.hpp"
#include "icx/prior.hpp"

namespace icx {

// Reference decoder pretraining schedule (about 820k tasks per decoder).
inline constexpr std::size_t kFullScaleDecoderEpochs = 100;
inline constexpr std::size_t kFullScaleDecoderStepsPerEpoch = 1024;
inline constexpr std::size_t kFullScaleDecoderBatchSize = 8;
inline constexpr double kFullScaleDecoderLearningRate = 3e-5;

struct BackboneTrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 8;
  double lr = 1e-3;
};

struct DecoderTrainConfig {
  std::size_t epochs = 5;
  std::size_t steps_per_epoch = 200;
  std::size_t batch_size = 8;
  double lr = 1e-3;

  std::size_t total_steps() const { return epochs * steps_per_epoch; }
};

/// Disjoint regions of the prior's task index space.
inline constexpr std::uint64_t kBackboneTaskOffset = 0;
inline constexpr std::uint64_t kDecoderTaskOffset = 1ULL << 34;
inline constexpr std::uint64_t kHeldOutTaskOffset = 1ULL << 38;

/// Called after every optimizer step with (step, mean batch loss).
using ProgressFn = std::function<void(std::size_t, double)>;

struct TrainedBackbone {
  BackboneWeights backbone;
  DecoderWeights final_decoder;
  std::vector<double> losses;  // one mean batch loss per step
};

/// End-to-end cross-entropy training on query rows of prior tasks with Adam.
/// Throws NumericError naming the step when the loss stops being finite.
TrainedBackbone train_backbone(const ModelConfig& model, const PriorConfig& prior,
                               const BackboneTrainConfig& train, const ProgressFn& progress = {});

struct TrainedDecoder {
  DecoderWeights decoder;
  std::vector<double> losses;
};

/// Trains the decoder of layer `layer` (1 <= layer < N) with the backbone frozen.
TrainedDecoder train_decoder(std::size_t layer, const BackboneWeights& backbone,
                             const PriorConfig& prior, const DecoderTrainConfig& train,
                             const ProgressFn& progress = {});

struct TrainedBank {
  DecoderBank bank;
  std::vector<std::vector<double>> losses;  // per intermediate layer
};

/// Decoders for layers 1..N-1 plus the unchanged final decoder at N. Every
/// intermediate decoder sees the same task sequence it would see under
/// train_decoder, so the result equals N-1 independent train_decoder runs;
/// one backbone pass per task is shared across layers.
TrainedBank train_bank(const TrainedBackbone& backbone, const PriorConfig& prior,
                       const DecoderTrainConfig& train, const ProgressFn& progress = {});

/// Held-out quality of exiting at each layer, averaged over prior tasks.
struct LayerQuality {
  std::size_t layer = 0;
  double accuracy = 0.0;        // dedicated decoder
  double auc = 0.0;             // dedicated decoder
  double final_decoder_accuracy = 0.0;
  double final_decoder_auc = 0.0;
};

struct HeldOutReport {
  std::vector<LayerQuality> layers;  // index 0 is layer 1
  double majority_accuracy = 0.0;
  std::size_t n_tasks = 0;
};

HeldOutReport evaluate_held_out(const BackboneWeights& backbone, const DecoderBank& bank,
                                const PriorConfig& prior, std::size_t n_tasks,
                                std::uint64_t start = kHeldOutTaskOffset);

}  // namespace icx
