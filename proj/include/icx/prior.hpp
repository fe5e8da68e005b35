// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Synthetic classification tasks for pretraining.
//
// Each task is a random tanh MLP applied to a Gaussian latent; the scalar
// score is cut into K classes at its empirical quantiles and the observed
// features are the latent plus Gaussian noise.

#pragma once

#include <cstddef>
#include <cstdint>
#include <iterator>
#include <utility>
#include <vector>

#include "icx/tensor.hpp"

namespace icx {

// Reference pretraining scale. Desk defaults below are deliberately smaller.
inline constexpr std::size_t kFullScaleSamplesPerTask = 1152;
inline constexpr std::size_t kFullScaleMaxFeatures = 100;
inline constexpr std::size_t kFullScaleMaxClasses = 10;

struct PriorConfig {
  std::size_t n_samples_per_task = 128;
  std::size_t max_features = 8;
  std::size_t max_classes = 4;
  double train_fraction = 0.7;
  std::pair<std::size_t, std::size_t> mlp_depth_range{1, 3};
  std::pair<std::size_t, std::size_t> mlp_width_range{4, 16};
  double noise_std = 0.1;
  std::uint64_t seed = 0;

  /// Throws ConfigError when an invariant does not hold.
  void validate() const;
  std::size_t n_train() const;
  std::size_t n_test() const { return n_samples_per_task - n_train(); }
};

/// A classification task with a context split (train) and a query split (test).
struct SyntheticTask {
  Tensor x_train;  // [n_train x f]
  std::vector<std::size_t> y_train;
  Tensor x_test;  // [n_test x f]
  std::vector<std::size_t> y_test;
  std::size_t n_classes = 0;

  // Latent scores and the quantile cut points used for labelling, in the
  // same row order as train followed by test.
  std::vector<double> debug_scores;
  std::vector<double> debug_cuts;

  std::size_t n_features() const { return x_train.cols(); }
  std::size_t n_train() const { return y_train.size(); }
  std::size_t n_test() const { return y_test.size(); }
};

/// Label of `score` given ascending cut points (class = number of cuts <= score).
std::size_t quantile_label(double score, const std::vector<double>& cuts);

/// Deterministic in (config.seed, task_index).
SyntheticTask sample_task(const PriorConfig& config, std::uint64_t task_index);

/// Index stride used when a task has to be regenerated after repeated
/// failures to place every class in the train split.
inline constexpr std::uint64_t kRegenerateStride = 1ULL << 40;

/// Lazy range over sample_task(config, start + i), i in [0, count).
class TaskStream {
 public:
  class iterator {
   public:
    using value_type = SyntheticTask;
    using difference_type = std::ptrdiff_t;
    using iterator_category = std::input_iterator_tag;

    iterator() = default;
    iterator(const PriorConfig* config, std::uint64_t index) : config_(config), index_(index) {}
    SyntheticTask operator*() const { return sample_task(*config_, index_); }
    iterator& operator++() {
      ++index_;
      return *this;
    }
    iterator operator++(int) {
      auto copy = *this;
      ++index_;
      return copy;
    }
    bool operator==(const iterator& other) const { return index_ == other.index_; }

   private:
    const PriorConfig* config_ = nullptr;
    std::uint64_t index_ = 0;
  };

  TaskStream(PriorConfig config, std::uint64_t start, std::uint64_t count);
  iterator begin() const { return {&config_, start_}; }
  iterator end() const { return {&config_, start_ + count_}; }
  std::uint64_t size() const { return count_; }

 private:
  PriorConfig config_;
  std::uint64_t start_;
  std::uint64_t count_;
};

TaskStream task_stream(const PriorConfig& config, std::uint64_t start, std::uint64_t count);

}  // namespace icx
