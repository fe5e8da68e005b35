// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <vector>

#include "icx/error.hpp"

namespace icx {

double roc_auc(std::span<const double> scores, std::span<const bool> positive) {
  if (scores.size() != positive.size()) {
    throw DimensionError("roc_auc: " + std::to_string(scores.size()) + " scores for " +
                         std::to_string(positive.size()) + " labels");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Twice the midrank keeps the rank sum integral, so tie handling is exact.
  std::uint64_t rank_sum_x2 = 0;
  std::uint64_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const std::uint64_t midrank_x2 = (i + 1) + j;  // ranks i+1 .. j
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum_x2 += midrank_x2;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::uint64_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw NumericError("roc_auc: both classes must be present");
  const std::uint64_t u_x2 = rank_sum_x2 - n_pos * (n_pos + 1);
  return static_cast<double>(u_x2) / (2.0 * static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

double roc_auc_from_probs(const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t n = probs.rows(), k = probs.cols();
  if (labels.size() != n) throw DimensionError("roc_auc_from_probs: label count mismatch");
  const auto p = probs.data();
  std::vector<double> scores(n);
  std::unique_ptr<bool[]> flags(new bool[n]);
  auto one_class = [&](std::size_t c) {
    std::size_t pos = 0;
    for (std::size_t i = 0; i < n; ++i) {
      scores[i] = p[i * k + c];
      flags[i] = labels[i] == c;
      pos += flags[i];
    }
    if (pos == 0 || pos == n) return std::numeric_limits<double>::quiet_NaN();
    return roc_auc(scores, std::span<const bool>(flags.get(), n));
  };
  if (k == 2) return one_class(1);
  double total = 0.0;
  std::size_t used = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double a = one_class(c);
    if (std::isnan(a)) continue;
    total += a;
    ++used;
  }
  return used ? total / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

double accuracy_from_probs(const Tensor& probs, std::span<const std::size_t> labels) {
  const std::size_t n = probs.rows(), k = probs.cols();
  if (labels.size() != n || n == 0) throw DimensionError("accuracy: label count mismatch");
  const auto p = probs.data();
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = p.subspan(i * k, k);
    const auto best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    hits += best == labels[i];
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

double majority_baseline(std::span<const std::size_t> train_labels,
                         std::span<const std::size_t> test_labels, std::size_t n_classes) {
  std::vector<std::size_t> counts(n_classes, 0);
  for (auto y : train_labels) ++counts.at(y);
  const auto major = static_cast<std::size_t>(std::max_element(counts.begin(), counts.end()) - counts.begin());
  if (test_labels.empty()) return 0.0;
  const auto hits = std::count(test_labels.begin(), test_labels.end(), major);
  return static_cast<double>(hits) / static_cast<double>(test_labels.size());
}

}  // namespace icx
