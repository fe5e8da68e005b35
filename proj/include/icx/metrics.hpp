// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>

#include "icx/tensor.hpp"

namespace icx {

/// P(score of a random positive > score of a random negative), ties count
/// one half. Rank-sum with midranks, O(n log n). `positive` flags class 1.
/// Throws NumericError when only one class is present.
double roc_auc(std::span<const double> scores, std::span<const bool> positive);

/// Binary tasks score by the class-1 probability; K > 2 averages one-vs-rest
/// AUC over classes that have both positives and negatives in `labels`.
/// Returns NaN when no class qualifies.
double roc_auc_from_probs(const Tensor& probs, std::span<const std::size_t> labels);

double accuracy_from_probs(const Tensor& probs, std::span<const std::size_t> labels);

/// Accuracy of always predicting the most frequent training label.
double majority_baseline(std::span<const std::size_t> train_labels,
                         std::span<const std::size_t> test_labels, std::size_t n_classes);

}  // namespace icx
