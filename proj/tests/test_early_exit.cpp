// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>

#include "icx/early_exit.hpp"
#include "icx/error.hpp"
#include "support/oracles.hpp"

using namespace icx;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

struct Fixture {
  ModelConfig config = icx::testing::toy_model_config(5);
  BackboneWeights backbone;
  DecoderBank bank;
  Fixture() {
    config.max_classes = 4;
    backbone = BackboneWeights::init(config);
    icx::testing::perturb(backbone.parameters(), 21, 0.4);
    std::vector<DecoderWeights> decs;
    for (std::size_t l = 1; l <= config.n_layers; ++l) {
      decs.push_back(DecoderWeights::init(config, l, 30));
      // Scale each head differently so traces move across layers.
      icx::testing::perturb(decs.back().parameters(), 40 + l, 0.25 * static_cast<double>(l));
    }
    bank = DecoderBank(std::move(decs));
  }
  Tensor reference(const SyntheticTask& t, std::size_t j) const {
    return softmax(decode(forward_until(t, backbone, j), bank.decoder(j), t.n_classes));
  }
};

}  // namespace

TEST_SUITE("early_exit") {

TEST_CASE("mean entropy examples") {
  CHECK(mean_entropy(Tensor({2, 3}, {1, 0, 0, 0, 0, 1})) == 0.0);
  CHECK(std::abs(mean_entropy(Tensor({1, 2}, {0.5, 0.5})) - std::log(2.0)) < 1e-12);
  CHECK(std::abs(mean_entropy(Tensor({1, 2}, {0.5, 0.5})) - 0.693147) < 1e-6);
  for (std::size_t k = 2; k <= 10; ++k) {
    const Tensor u = Tensor::full({3, k}, 1.0 / static_cast<double>(k));
    CHECK(std::abs(mean_entropy(u) - std::log(static_cast<double>(k))) < 1e-9);
  }
  const double h = mean_entropy(Tensor({2, 2}, {0.9, 0.1, 0.5, 0.5}));
  const long double want =
      (icx::testing::entropy_long({0.9, 0.1}) + icx::testing::entropy_long({0.5, 0.5})) / 2.0L;
  CHECK(std::abs(h - 0.509115) < 1e-6);
  CHECK(std::abs(static_cast<long double>(h) - want) < 1e-12L);
  CHECK(std::abs(static_cast<double>(icx::testing::entropy_long({0.9, 0.1})) - 0.325083) < 1e-6);
}

TEST_CASE("mean entropy rejects non-distributions") {
  CHECK_THROWS_AS(mean_entropy(Tensor({1, 2}, {0.5, 0.6})), ContractError);
  CHECK_THROWS_AS(mean_entropy(Tensor({1, 2}, {1.5, -0.5})), ContractError);
  CHECK_NOTHROW(mean_entropy(Tensor({1, 2}, {0.5 + 5e-7, 0.5})));
}

TEST_CASE("exit config validation") {
  ExitConfig c;
  c.tau = -0.1;
  CHECK_THROWS_AS(c.validate(6), ConfigError);
  c = {};
  c.min_layer = 0;
  CHECK_THROWS_AS(c.validate(6), ConfigError);
  c.min_layer = 7;
  CHECK_THROWS_AS(c.validate(6), ConfigError);
}

TEST_CASE("tau 0 runs every layer and equals the full pipeline") {
  const Fixture f;
  for (std::uint64_t i = 0; i < 10; ++i) {
    const SyntheticTask t = icx::testing::toy_task(i, 7, 4, 3, 2 + i % 3);
    const ExitReport r = predict_early_exit(t, f.backbone, f.bank, ExitConfig{});
    CHECK(r.exit_layer == f.config.n_layers);
    CHECK(r.entropy_trace.size() == f.config.n_layers);
    CHECK(r.decode_count == f.config.n_layers);
    CHECK(bits_equal(r.probs, f.reference(t, f.config.n_layers)));
    CHECK(r.elapsed_s >= 0.0);
    for (double h : r.entropy_trace) {
      CHECK(h >= 0.0);
      CHECK(h <= std::log(static_cast<double>(t.n_classes)) + 1e-12);
    }
  }
}

TEST_CASE("infinite tau exits at min_layer") {
  const Fixture f;
  const SyntheticTask t = icx::testing::toy_task(3, 7, 4, 3, 3);
  for (std::size_t m = 1; m <= f.config.n_layers; ++m) {
    ExitConfig c;
    c.tau = std::numeric_limits<double>::infinity();
    c.min_layer = m;
    const ExitReport r = predict_early_exit(t, f.backbone, f.bank, c);
    CHECK(r.exit_layer == m);
    CHECK(r.decode_count == 1);
    CHECK(r.entropy_trace.size() == 1);
    CHECK(bits_equal(r.probs, f.reference(t, m)));
  }
  ExitConfig c;
  c.tau = std::log(4.0) + 1e-9;
  CHECK(predict_early_exit(t, f.backbone, f.bank, c).exit_layer == 1);
}

TEST_CASE("trace replay: thresholds between trace values pick the first crossing") {
  const Fixture f;
  for (std::uint64_t i = 0; i < 20; ++i) {
    const SyntheticTask t = icx::testing::toy_task(100 + i, 8, 5, 3, 2 + i % 3);
    const ExitReport full = predict_early_exit(t, f.backbone, f.bank, ExitConfig{});
    const auto& trace = full.entropy_trace;
    std::vector<double> taus{0.0, std::numeric_limits<double>::infinity()};
    for (double h : trace) {
      taus.push_back(h);
      taus.push_back(std::nextafter(h, 0.0));
      taus.push_back(std::nextafter(h, 10.0));
      taus.push_back(h + 1e-6);
      taus.push_back(std::max(0.0, h - 1e-6));
    }
    std::sort(taus.begin(), taus.end());
    std::size_t previous = f.config.n_layers;
    for (double tau : taus) {
      std::size_t expected = f.config.n_layers;
      for (std::size_t j = 0; j < trace.size(); ++j)
        if (trace[j] < tau) {
          expected = j + 1;
          break;
        }
      ExitConfig c;
      c.tau = tau;
      const ExitReport r = predict_early_exit(t, f.backbone, f.bank, c);
      CHECK(r.exit_layer == expected);
      CHECK(r.decode_count == r.exit_layer);
      CHECK(bits_equal(r.probs, f.reference(t, expected)));
      for (std::size_t j = 0; j < r.entropy_trace.size(); ++j) CHECK(r.entropy_trace[j] == trace[j]);
      CHECK(r.exit_layer <= previous);  // monotone in tau
      previous = r.exit_layer;
    }
  }
}

TEST_CASE("min_layer skips early decodes") {
  const Fixture f;
  const SyntheticTask t = icx::testing::toy_task(5, 7, 4, 3, 3);
  const ExitReport full = predict_early_exit(t, f.backbone, f.bank, ExitConfig{});
  ExitConfig c;
  c.min_layer = 3;
  const ExitReport r = predict_early_exit(t, f.backbone, f.bank, c);
  CHECK(r.exit_layer == f.config.n_layers);
  CHECK(r.decode_count == r.exit_layer - c.min_layer + 1);
  REQUIRE(r.entropy_trace.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) CHECK(r.entropy_trace[j] == full.entropy_trace[j + 2]);
}

TEST_CASE("normalised entropy divides by ln K") {
  const Fixture f;
  const SyntheticTask t = icx::testing::toy_task(6, 7, 4, 3, 4);
  const ExitReport raw = predict_early_exit(t, f.backbone, f.bank, ExitConfig{});
  ExitConfig c;
  c.normalize_entropy = true;
  const ExitReport norm = predict_early_exit(t, f.backbone, f.bank, c);
  for (std::size_t j = 0; j < raw.entropy_trace.size(); ++j) {
    CHECK(norm.entropy_trace[j] == raw.entropy_trace[j] / std::log(4.0));
    CHECK(norm.entropy_trace[j] <= 1.0 + 1e-12);
  }
}

TEST_CASE("bank depth must match the backbone") {
  const Fixture f;
  const DecoderBank short_bank({f.bank.decoder(1)});
  CHECK_THROWS_AS(predict_early_exit(icx::testing::toy_task(1, 5, 2, 3, 2), f.backbone, short_bank, ExitConfig{}),
                  ContractError);
}

TEST_CASE("analytic FLOP counts") {
  const ModelConfig c;  // desk defaults
  const std::size_t n_train = 89, n_test = 39, k = 3;
  const auto full_n = count_flops(c, n_train, n_test, k, c.n_layers, c.n_layers);
  CHECK(full_n.embedding == embed_flops(c, n_train, n_test));
  CHECK(full_n.encoder == c.n_layers * encoder_layer_flops(c, n_train, n_test));
  CHECK(full_n.decoding == decode_flops(c, n_test, k));
  std::uint64_t previous = 0;
  for (std::size_t e = 1; e <= c.n_layers; ++e) {
    const auto fl = count_flops(c, n_train, n_test, k, e);
    CHECK(fl.total() > previous);
    previous = fl.total();
  }
  const auto half = count_flops(c, n_train, n_test, k, c.n_layers / 2);
  const auto full = count_flops(c, n_train, n_test, k, c.n_layers);
  CHECK(2 * half.encoder == full.encoder);
  CHECK_THROWS_AS(count_flops(c, n_train, n_test, k, 0), ContractError);
  CHECK_THROWS_AS(count_flops(c, n_train, n_test, k, c.n_layers + 1), ContractError);
}

TEST_CASE("measured FLOPs match the analytic count exactly") {
  const Fixture f;
  const SyntheticTask t = icx::testing::toy_task(8, 9, 5, 3, 3);
  const ExitReport full = predict_early_exit(t, f.backbone, f.bank, ExitConfig{});
  for (std::size_t j = 1; j <= f.config.n_layers; ++j) {
    ExitConfig c;
    c.tau = j == f.config.n_layers ? 0.0 : std::nextafter(full.entropy_trace[j - 1], 10.0);
    flops::reset();
    const ExitReport r = predict_early_exit(t, f.backbone, f.bank, c);
    if (r.exit_layer != j) continue;  // an earlier layer crossed first
    CHECK(flops::read() == count_flops(t, f.config, j).total());
  }
}

}  // TEST_SUITE
