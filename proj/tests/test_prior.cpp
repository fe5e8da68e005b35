// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>

#include "icx/error.hpp"
#include "icx/prior.hpp"

using namespace icx;

namespace {

bool same_task(const SyntheticTask& a, const SyntheticTask& b) {
  auto bytes_equal = [](const Tensor& x, const Tensor& y) {
    return x.shape() == y.shape() &&
           std::memcmp(x.data().data(), y.data().data(), x.numel() * sizeof(double)) == 0;
  };
  return a.n_classes == b.n_classes && a.y_train == b.y_train && a.y_test == b.y_test &&
         bytes_equal(a.x_train, b.x_train) && bytes_equal(a.x_test, b.x_test);
}

void check_invariants(const SyntheticTask& t, const PriorConfig& c) {
  REQUIRE(t.n_classes >= 2);
  REQUIRE(t.n_classes <= c.max_classes);
  CHECK(t.n_features() >= 1);
  CHECK(t.n_features() <= c.max_features);
  CHECK(t.n_train() == c.n_train());
  CHECK(t.n_test() == c.n_test());
  std::vector<int> seen(t.n_classes, 0);
  for (auto y : t.y_train) {
    REQUIRE(y < t.n_classes);
    seen[y] = 1;
  }
  for (auto y : t.y_test) CHECK(y < t.n_classes);
  CHECK(std::count(seen.begin(), seen.end(), 1) == static_cast<long>(t.n_classes));
}

}  // namespace

TEST_SUITE("prior_gen") {

TEST_CASE("full-scale constants are recorded") {
  CHECK(kFullScaleSamplesPerTask == 1152);
  CHECK(kFullScaleMaxFeatures == 100);
  CHECK(kFullScaleMaxClasses == 10);
}

TEST_CASE("config validation") {
  PriorConfig c;
  CHECK_NOTHROW(c.validate());
  c.max_classes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_features = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.n_samples_per_task = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.n_samples_per_task = 6;
  c.train_fraction = 0.5;  // 3 context rows cannot hold 4 classes
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  CHECK_THROWS_AS(sample_task([] { PriorConfig p; p.noise_std = -1; return p; }(), 0), ConfigError);
}

TEST_CASE("same seed and index give bit-identical tasks") {
  PriorConfig c;
  c.seed = 9;
  for (std::uint64_t i : {0ULL, 1ULL, 12345ULL, 1ULL << 38}) CHECK(same_task(sample_task(c, i), sample_task(c, i)));
}

TEST_CASE("seed 1 index 0 satisfies the postconditions") {
  PriorConfig c;
  c.seed = 1;
  check_invariants(sample_task(c, 0), c);
}

TEST_CASE("class imbalance stays bounded") {
  // Measured before pinning: the average largest-class share over 1000
  // default tasks sits near 0.37, far below the 0.75 bound.
  PriorConfig c;
  double total = 0.0;
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const SyntheticTask t = sample_task(c, i);
    std::vector<std::size_t> counts(t.n_classes, 0);
    for (auto y : t.y_train) ++counts[y];
    for (auto y : t.y_test) ++counts[y];
    total += static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
             static_cast<double>(c.n_samples_per_task);
  }
  const double mean_share = total / 1000.0;
  MESSAGE("mean largest-class share: " << mean_share);
  CHECK(mean_share < 0.75);
  CHECK(mean_share < 0.45);
}

TEST_CASE("task_stream equals individual samples") {
  PriorConfig c;
  c.seed = 4;
  std::vector<SyntheticTask> streamed;
  for (const auto& t : task_stream(c, 0, 3)) streamed.push_back(t);
  REQUIRE(streamed.size() == 3);
  for (std::uint64_t i = 0; i < 3; ++i) CHECK(same_task(streamed[i], sample_task(c, i)));

  std::vector<SyntheticTask> a, b;
  for (const auto& t : task_stream(c, 0, 5)) a.push_back(t);
  for (const auto& t : task_stream(c, 3, 5)) b.push_back(t);
  CHECK(same_task(a[3], b[0]));
  CHECK(same_task(a[4], b[1]));
  CHECK_THROWS_AS(task_stream(c, 0, 0), ConfigError);
}

TEST_CASE("a stream of 8 default tasks satisfies every invariant") {
  PriorConfig c;
  for (const auto& t : task_stream(c, 100, 8)) check_invariants(t, c);
}

TEST_CASE("distinct seeds give distinct tasks") {
  PriorConfig a, b;
  a.seed = 1;
  b.seed = 2;
  std::size_t differing = 0;
  for (std::uint64_t i = 0; i < 100; ++i) differing += same_task(sample_task(a, i), sample_task(b, i)) ? 0 : 1;
  CHECK(differing == 100);
}

TEST_CASE("labels re-derive from stored scores by empirical quantiles") {
  PriorConfig c;
  for (std::uint64_t i = 0; i < 200; ++i) {
    const SyntheticTask t = sample_task(c, i);
    const std::size_t n = c.n_samples_per_task, k = t.n_classes;
    REQUIRE(t.debug_scores.size() == n);
    std::vector<double> sorted(t.debug_scores);
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> cuts;
    for (std::size_t q = 1; q < k; ++q) cuts.push_back(sorted[q * n / k]);
    REQUIRE(cuts == t.debug_cuts);
    for (std::size_t r = 0; r < n; ++r) {
      std::size_t label = 0;
      for (double cut : cuts) label += t.debug_scores[r] >= cut ? 1 : 0;
      const std::size_t stored = r < t.n_train() ? t.y_train[r] : t.y_test[r - t.n_train()];
      CHECK(label == stored);
    }
  }
}

TEST_CASE("features are z-scored with train statistics") {
  PriorConfig c;
  for (std::uint64_t i = 0; i < 50; ++i) {
    const SyntheticTask t = sample_task(c, i);
    const std::size_t f = t.n_features(), n = t.n_train();
    for (std::size_t j = 0; j < f; ++j) {
      long double mu = 0.0L;
      for (std::size_t r = 0; r < n; ++r) mu += t.x_train.at(r, j);
      mu /= n;
      long double var = 0.0L;
      for (std::size_t r = 0; r < n; ++r) var += (t.x_train.at(r, j) - mu) * (t.x_train.at(r, j) - mu);
      var /= n;
      CHECK(std::abs(static_cast<double>(mu)) < 1e-9);
      CHECK(std::abs(std::sqrt(static_cast<double>(var)) - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("quantile_label counts cuts at or below the score") {
  const std::vector<double> cuts{-1.0, 0.0, 2.0};
  CHECK(quantile_label(-5.0, cuts) == 0);
  CHECK(quantile_label(-1.0, cuts) == 1);
  CHECK(quantile_label(1.0, cuts) == 2);
  CHECK(quantile_label(9.0, cuts) == 3);
}

TEST_CASE("every K in range appears over many tasks") {
  PriorConfig c;
  std::set<std::size_t> ks, fs;
  for (std::uint64_t i = 0; i < 500; ++i) {
    const SyntheticTask t = sample_task(c, i);
    ks.insert(t.n_classes);
    fs.insert(t.n_features());
  }
  CHECK(ks == std::set<std::size_t>{2, 3, 4});
  CHECK(fs.size() == c.max_features);
}

}  // TEST_SUITE
