// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "icx/error.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace {

constexpr int kSplitAttempts = 100;

struct RandomMlp {
  // layers[l] is [fan_in x fan_out] row-major plus a bias of fan_out.
  std::vector<std::vector<double>> weights;
  std::vector<std::vector<double>> biases;
  std::vector<std::size_t> widths;  // input width first, 1 last

  double operator()(std::span<const double> input) const {
    std::vector<double> h(input.begin(), input.end());
    for (std::size_t l = 0; l < weights.size(); ++l) {
      const std::size_t fin = widths[l], fout = widths[l + 1];
      std::vector<double> next(biases[l]);
      for (std::size_t i = 0; i < fin; ++i)
        for (std::size_t j = 0; j < fout; ++j) next[j] += h[i] * weights[l][i * fout + j];
      const bool last = l + 1 == weights.size();
      if (!last)
        for (auto& v : next) v = std::tanh(v);
      h = std::move(next);
    }
    return h[0];
  }
};

RandomMlp draw_mlp(Pcg32& rng, std::size_t n_features, const PriorConfig& config) {
  RandomMlp mlp;
  const auto depth = static_cast<std::size_t>(rng.uniform_int(
      static_cast<std::int64_t>(config.mlp_depth_range.first),
      static_cast<std::int64_t>(config.mlp_depth_range.second)));
  mlp.widths.push_back(n_features);
  for (std::size_t l = 0; l < depth; ++l) {
    mlp.widths.push_back(static_cast<std::size_t>(
        rng.uniform_int(static_cast<std::int64_t>(config.mlp_width_range.first),
                        static_cast<std::int64_t>(config.mlp_width_range.second))));
  }
  mlp.widths.push_back(1);
  for (std::size_t l = 0; l + 1 < mlp.widths.size(); ++l) {
    const std::size_t fin = mlp.widths[l], fout = mlp.widths[l + 1];
    const double sd = 1.0 / std::sqrt(static_cast<double>(fin));
    std::vector<double> w(fin * fout);
    for (auto& v : w) v = rng.normal(0.0, sd);
    std::vector<double> b(fout);
    for (auto& v : b) v = rng.normal(0.0, sd);
    mlp.weights.push_back(std::move(w));
    mlp.biases.push_back(std::move(b));
  }
  return mlp;
}

void zscore_by_train(std::vector<double>& train, std::vector<double>& test, std::size_t f) {
  const std::size_t n_train = train.size() / f, n_test = test.size() / f;
  for (std::size_t j = 0; j < f; ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) mu += train[i * f + j];
    mu /= static_cast<double>(n_train);
    double var = 0.0;
    for (std::size_t i = 0; i < n_train; ++i) var += (train[i * f + j] - mu) * (train[i * f + j] - mu);
    var /= static_cast<double>(n_train);
    const double sd = std::sqrt(var);
    const double inv = sd > 1e-12 ? 1.0 / sd : 1.0;
    for (std::size_t i = 0; i < n_train; ++i) train[i * f + j] = (train[i * f + j] - mu) * inv;
    for (std::size_t i = 0; i < n_test; ++i) test[i * f + j] = (test[i * f + j] - mu) * inv;
  }
}

}  // namespace

void PriorConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError("prior: " + msg); };
  if (max_classes < 2) fail("max_classes must be >= 2");
  if (max_features < 1) fail("max_features must be >= 1");
  if (n_samples_per_task < 4) fail("n_samples_per_task must be >= 4");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) fail("train_fraction must lie in (0, 1)");
  if (train_fraction * static_cast<double>(n_samples_per_task) < static_cast<double>(max_classes))
    fail("train_fraction * n_samples_per_task must be >= max_classes");
  if (n_test() < 1) fail("train split leaves no test rows");
  if (mlp_depth_range.first > mlp_depth_range.second) fail("mlp_depth_range is empty");
  if (mlp_width_range.first < 1 || mlp_width_range.first > mlp_width_range.second)
    fail("mlp_width_range is invalid");
  if (!(noise_std >= 0.0)) fail("noise_std must be >= 0");
}

std::size_t PriorConfig::n_train() const {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_samples_per_task)));
}

std::size_t quantile_label(double score, const std::vector<double>& cuts) {
  return static_cast<std::size_t>(std::upper_bound(cuts.begin(), cuts.end(), score) - cuts.begin());
}

SyntheticTask sample_task(const PriorConfig& config, std::uint64_t task_index) {
  config.validate();
  const std::size_t n = config.n_samples_per_task;
  const std::size_t n_train = config.n_train();
  const std::size_t n_test = n - n_train;

  for (std::uint64_t index = task_index;; index += kRegenerateStride) {
    Pcg32 rng = Pcg32::keyed(config.seed, index);
    const auto f = static_cast<std::size_t>(
        rng.uniform_int(1, static_cast<std::int64_t>(config.max_features)));
    const auto k = static_cast<std::size_t>(
        rng.uniform_int(2, static_cast<std::int64_t>(config.max_classes)));
    const RandomMlp mlp = draw_mlp(rng, f, config);

    std::vector<double> latent(n * f), features(n * f), scores(n);
    for (auto& v : latent) v = rng.normal();
    for (std::size_t i = 0; i < n * f; ++i) features[i] = latent[i] + config.noise_std * rng.normal();
    for (std::size_t i = 0; i < n; ++i) scores[i] = mlp(std::span<const double>(latent).subspan(i * f, f));

    std::vector<double> sorted(scores);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (std::size_t c = 1; c < k; ++c) cuts.push_back(sorted[c * n / k]);
    std::vector<std::size_t> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = quantile_label(scores[i], cuts);

    std::vector<std::size_t> rows(n);
    for (int attempt = 0; attempt < kSplitAttempts; ++attempt) {
      std::iota(rows.begin(), rows.end(), std::size_t{0});
      rng.shuffle(std::span<std::size_t>(rows));
      std::vector<bool> seen(k, false);
      for (std::size_t i = 0; i < n_train; ++i) seen[labels[rows[i]]] = true;
      if (std::find(seen.begin(), seen.end(), false) != seen.end()) continue;

      SyntheticTask task;
      task.n_classes = k;
      std::vector<double> xtr(n_train * f), xte(n_test * f);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = rows[i];
        double* dst = i < n_train ? xtr.data() + i * f : xte.data() + (i - n_train) * f;
        std::copy_n(features.begin() + src * f, f, dst);
        (i < n_train ? task.y_train : task.y_test).push_back(labels[src]);
        task.debug_scores.push_back(scores[src]);
      }
      zscore_by_train(xtr, xte, f);
      task.x_train = Tensor({n_train, f}, std::move(xtr));
      task.x_test = Tensor({n_test, f}, std::move(xte));
      task.debug_cuts = std::move(cuts);
      return task;
    }
  }
}

TaskStream::TaskStream(PriorConfig config, std::uint64_t start, std::uint64_t count)
    : config_(std::move(config)), start_(start), count_(count) {
  if (count_ < 1) throw ConfigError("task_stream: count must be >= 1");
  config_.validate();
}

TaskStream task_stream(const PriorConfig& config, std::uint64_t start, std::uint64_t count) {
  return TaskStream(config, start, count);
}

}  // namespace icx
