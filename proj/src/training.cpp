// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/training.hpp"

#include <cmath>
#include <string>

#include "icx/error.hpp"
#include "icx/metrics.hpp"
#include "icx/optim.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace {

void check_compatible(const ModelConfig& model, const PriorConfig& prior) {
  model.validate();
  prior.validate();
  if (prior.max_features > model.max_features || prior.max_classes > model.max_classes) {
    throw ConfigError("prior draws up to " + std::to_string(prior.max_features) + " features / " +
                      std::to_string(prior.max_classes) + " classes but the model holds " +
                      std::to_string(model.max_features) + " / " + std::to_string(model.max_classes));
  }
}

void require_finite(double loss, const char* what, std::size_t step) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string(what) + " training diverged at step " + std::to_string(step) +
                       " (loss is not finite)");
  }
}

template <class Fn>
auto with_step_context(const char* what, std::size_t step, Fn&& fn) {
  try {
    return fn();
  } catch (const NumericError& e) {
    throw NumericError(std::string(what) + " training diverged at step " + std::to_string(step) + ": " +
                       e.what());
  }
}

std::uint64_t decoder_seed(const ModelConfig& model) { return hash_key(model.seed, 0x5eedd3c0); }

// Accumulates d(loss / batch)/d(params) for one task through `dec`.
double decoder_loss_and_grad(const LayerActivations& acts, const DecoderWeights& dec,
                             const SyntheticTask& task, std::size_t batch) {
  GradTape tape;
  TapeScope scope(tape);
  const Tensor loss = cross_entropy(decode(acts, dec, task.n_classes), task.y_test);
  tape.backward(scale(loss, 1.0 / static_cast<double>(batch)));
  return loss.item();
}

}  // namespace

TrainedBackbone train_backbone(const ModelConfig& model, const PriorConfig& prior,
                               const BackboneTrainConfig& train, const ProgressFn& progress) {
  check_compatible(model, prior);
  if (train.steps == 0 || train.batch_size == 0 || !(train.lr >= 0.0)) {
    throw ConfigError("backbone training needs positive steps and batch size and lr >= 0");
  }
  TrainedBackbone out{BackboneWeights::init(model),
                      DecoderWeights::init(model, model.n_layers, decoder_seed(model)), {}};
  std::vector<Tensor> params = out.backbone.parameters();
  for (const auto& p : out.final_decoder.parameters()) params.push_back(p);
  Adam adam(params, AdamOptions{train.lr});

  for (std::size_t step = 0; step < train.steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      const SyntheticTask task = sample_task(prior, kBackboneTaskOffset + step * train.batch_size + b);
      GradTape tape;
      TapeScope scope(tape);
      const Tensor loss = with_step_context("backbone", step, [&] {
        const LayerActivations acts = forward_until(task, out.backbone, model.n_layers);
        return cross_entropy(decode(acts, out.final_decoder, task.n_classes), task.y_test);
      });
      require_finite(loss.item(), "backbone", step);
      tape.backward(scale(loss, 1.0 / static_cast<double>(train.batch_size)));
      batch_loss += loss.item();
    }
    adam.step();
    adam.zero_grad();
    batch_loss /= static_cast<double>(train.batch_size);
    out.losses.push_back(batch_loss);
    if (progress) progress(step, batch_loss);
  }
  return out;
}

TrainedDecoder train_decoder(std::size_t layer, const BackboneWeights& backbone,
                             const PriorConfig& prior, const DecoderTrainConfig& train,
                             const ProgressFn& progress) {
  const ModelConfig& model = backbone.config;
  check_compatible(model, prior);
  if (layer < 1 || layer >= model.n_layers) {
    throw ContractError("train_decoder: layer " + std::to_string(layer) + " outside [1, " +
                        std::to_string(model.n_layers) + ")");
  }
  if (train.total_steps() == 0 || train.batch_size == 0 || !(train.lr >= 0.0)) {
    throw ConfigError("decoder training needs positive epochs, steps and batch size and lr >= 0");
  }
  TrainedDecoder out{DecoderWeights::init(model, layer, decoder_seed(model)), {}};
  Adam adam(out.decoder.parameters(), AdamOptions{train.lr});
  const std::size_t steps = train.total_steps();
  for (std::size_t step = 0; step < steps; ++step) {
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      const SyntheticTask task = sample_task(prior, kDecoderTaskOffset + step * train.batch_size + b);
      // No tape is active here, so the backbone pass records nothing.
      const double loss = with_step_context("decoder", step, [&] {
        const LayerActivations acts = forward_until(task, backbone, layer);
        return decoder_loss_and_grad(acts, out.decoder, task, train.batch_size);
      });
      require_finite(loss, "decoder", step);
      batch_loss += loss;
    }
    adam.step();
    adam.zero_grad();
    batch_loss /= static_cast<double>(train.batch_size);
    out.losses.push_back(batch_loss);
    if (progress) progress(step, batch_loss);
  }
  return out;
}

TrainedBank train_bank(const TrainedBackbone& trained, const PriorConfig& prior,
                       const DecoderTrainConfig& train, const ProgressFn& progress) {
  const BackboneWeights& backbone = trained.backbone;
  const ModelConfig& model = backbone.config;
  check_compatible(model, prior);
  if (trained.final_decoder.layer_index != model.n_layers) {
    throw ContractError("final decoder must read layer " + std::to_string(model.n_layers));
  }
  if (train.total_steps() == 0 || train.batch_size == 0 || !(train.lr >= 0.0)) {
    throw ConfigError("decoder training needs positive epochs, steps and batch size and lr >= 0");
  }
  const std::size_t n_mid = model.n_layers - 1;
  std::vector<DecoderWeights> decoders;
  std::vector<Adam> optimizers;
  for (std::size_t l = 1; l <= n_mid; ++l) {
    decoders.push_back(DecoderWeights::init(model, l, decoder_seed(model)));
    optimizers.emplace_back(decoders.back().parameters(), AdamOptions{train.lr});
  }
  TrainedBank out;
  out.losses.assign(n_mid, {});
  const std::size_t steps = train.total_steps();
  for (std::size_t step = 0; step < steps && n_mid > 0; ++step) {
    std::vector<double> batch_loss(n_mid, 0.0);
    for (std::size_t b = 0; b < train.batch_size; ++b) {
      const SyntheticTask task = sample_task(prior, kDecoderTaskOffset + step * train.batch_size + b);
      LayerActivations acts = embed(task, backbone);
      for (std::size_t l = 1; l <= n_mid; ++l) {
        acts = encode_layer(acts, l - 1, backbone);
        const double loss = with_step_context("decoder", step, [&] {
          return decoder_loss_and_grad(acts, decoders[l - 1], task, train.batch_size);
        });
        require_finite(loss, "decoder", step);
        batch_loss[l - 1] += loss;
      }
    }
    double mean_loss = 0.0;
    for (std::size_t l = 0; l < n_mid; ++l) {
      optimizers[l].step();
      optimizers[l].zero_grad();
      out.losses[l].push_back(batch_loss[l] / static_cast<double>(train.batch_size));
      mean_loss += out.losses[l].back();
    }
    if (progress) progress(step, mean_loss / static_cast<double>(n_mid));
  }
  decoders.push_back(trained.final_decoder);
  out.bank = DecoderBank(std::move(decoders));
  return out;
}

HeldOutReport evaluate_held_out(const BackboneWeights& backbone, const DecoderBank& bank,
                                const PriorConfig& prior, std::size_t n_tasks, std::uint64_t start) {
  const std::size_t n_layers = backbone.config.n_layers;
  if (bank.n_layers() != n_layers) throw ContractError("decoder bank depth differs from backbone");
  HeldOutReport report;
  report.n_tasks = n_tasks;
  report.layers.resize(n_layers);
  std::vector<std::size_t> auc_count(n_layers, 0), final_auc_count(n_layers, 0);
  for (std::uint64_t t = 0; t < n_tasks; ++t) {
    const SyntheticTask task = sample_task(prior, start + t);
    report.majority_accuracy += majority_baseline(task.y_train, task.y_test, task.n_classes);
    LayerActivations acts = embed(task, backbone);
    for (std::size_t l = 1; l <= n_layers; ++l) {
      acts = encode_layer(acts, l - 1, backbone);
      auto& q = report.layers[l - 1];
      const Tensor own = softmax(decode(acts, bank.decoder(l), task.n_classes));
      const Tensor via_final = softmax(decode_unchecked(acts, bank.final_decoder(), task.n_classes));
      q.accuracy += accuracy_from_probs(own, task.y_test);
      q.final_decoder_accuracy += accuracy_from_probs(via_final, task.y_test);
      if (const double a = roc_auc_from_probs(own, task.y_test); !std::isnan(a)) {
        q.auc += a;
        ++auc_count[l - 1];
      }
      if (const double a = roc_auc_from_probs(via_final, task.y_test); !std::isnan(a)) {
        q.final_decoder_auc += a;
        ++final_auc_count[l - 1];
      }
    }
  }
  const double n = static_cast<double>(n_tasks);
  report.majority_accuracy /= n;
  for (std::size_t l = 0; l < n_layers; ++l) {
    auto& q = report.layers[l];
    q.layer = l + 1;
    q.accuracy /= n;
    q.final_decoder_accuracy /= n;
    q.auc /= static_cast<double>(std::max<std::size_t>(auc_count[l], 1));
    q.final_decoder_auc /= static_cast<double>(std::max<std::size_t>(final_auc_count[l], 1));
  }
  return report;
}

}  // namespace icx
