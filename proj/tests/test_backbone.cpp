// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "icx/backbone.hpp"
#include "icx/decoder.hpp"
#include "icx/error.hpp"
#include "icx/training.hpp"
#include "support/oracles.hpp"

using namespace icx;
using icx::testing::toy_task;

namespace {

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.numel() * sizeof(double)) == 0;
}

bool rows_bits_equal(const Tensor& a, std::size_t ra, const Tensor& b, std::size_t rb) {
  return a.cols() == b.cols() &&
         std::memcmp(a.data().data() + ra * a.cols(), b.data().data() + rb * b.cols(), a.cols() * sizeof(double)) == 0;
}

ModelConfig small_config() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 3;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_features = 4;
  c.max_classes = 3;
  c.seed = 5;
  return c;
}

BackboneWeights noisy_backbone(const ModelConfig& c) {
  BackboneWeights w = BackboneWeights::init(c);
  icx::testing::perturb(w.parameters(), 17, 0.3);
  return w;
}

SyntheticTask permute_train(const SyntheticTask& t, const std::vector<std::size_t>& perm) {
  SyntheticTask out = t;
  out.x_train = gather_rows(t.x_train, perm);
  for (std::size_t i = 0; i < perm.size(); ++i) out.y_train[i] = t.y_train[perm[i]];
  return out;
}

long double ln_oracle(const std::vector<long double>& x, const std::vector<long double>& g,
                      const std::vector<long double>& b, std::vector<long double>& out) {
  const std::size_t d = x.size();
  long double mu = 0.0L;
  for (auto v : x) mu += v;
  mu /= d;
  long double var = 0.0L;
  for (auto v : x) var += (v - mu) * (v - mu);
  var /= d;
  out.resize(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = (x[i] - mu) / std::sqrt(var + 1e-5L) * g[i] + b[i];
  return mu;
}

}  // namespace

TEST_SUITE("backbone") {

TEST_CASE("model config validation") {
  ModelConfig c;
  CHECK_NOTHROW(c.validate());
  c.n_heads = 5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.n_layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_classes = 1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ModelConfig{}.decoder_width() == 128);
}

TEST_CASE("initialisation is seeded and finite") {
  const ModelConfig c = small_config();
  const BackboneWeights a = BackboneWeights::init(c), b = BackboneWeights::init(c);
  const auto na = a.named_parameters(), nb = b.named_parameters();
  REQUIRE(na.size() == nb.size());
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(na[i].first == nb[i].first);
    CHECK(bits_equal(na[i].second, nb[i].second));
    for (double v : na[i].second.data()) CHECK(std::isfinite(v));
  }
  CHECK(a.layers[0].query_b[0] == 0.0);
  CHECK(a.layers[0].ln1_gain[0] == 1.0);
}

TEST_CASE("embed rejects tasks beyond capacity") {
  const ModelConfig c = small_config();
  const BackboneWeights w = BackboneWeights::init(c);
  CHECK_THROWS_AS(embed(toy_task(1, 6, 2, 5, 2), w), CapacityError);
  CHECK_THROWS_AS(embed(toy_task(1, 6, 2, 2, 4), w), CapacityError);
  try {
    (void)embed(toy_task(1, 6, 2, 9, 2), w);
  } catch (const CapacityError& e) {
    CHECK(std::string(e.what()).find("at most 4") != std::string::npos);
  }
}

TEST_CASE("embed does not read test labels") {
  const BackboneWeights w = noisy_backbone(small_config());
  SyntheticTask t = toy_task(2, 7, 3, 3, 3);
  const LayerActivations a = embed(t, w);
  for (auto& y : t.y_test) y = (y + 1) % 3;
  CHECK(bits_equal(a.tokens, embed(t, w).tokens));
  CHECK(bits_equal(forward_until(t, w, 3).tokens, [&] {
    SyntheticTask u = t;
    for (auto& y : u.y_test) y = 0;
    return forward_until(u, w, 3).tokens;
  }()));
}

TEST_CASE("embed permutes with train rows") {
  const BackboneWeights w = noisy_backbone(small_config());
  const SyntheticTask t = toy_task(3, 6, 2, 4, 3);
  const std::vector<std::size_t> perm{4, 2, 0, 5, 1, 3};
  const LayerActivations a = embed(t, w), b = embed(permute_train(t, perm), w);
  for (std::size_t i = 0; i < 6; ++i) CHECK(rows_bits_equal(b.tokens, i, a.tokens, perm[i]));
  for (std::size_t i = 6; i < 8; ++i) CHECK(rows_bits_equal(b.tokens, i, a.tokens, i));
}

TEST_CASE("zero weights give label embedding rows") {
  const ModelConfig c = small_config();
  BackboneWeights w = BackboneWeights::init(c);
  for (auto& v : w.feature_w.mutable_data()) v = 0.0;
  const SyntheticTask t = toy_task(4, 5, 2, 3, 3);
  const LayerActivations a = embed(t, w);
  for (std::size_t i = 0; i < 7; ++i) {
    const std::size_t label = i < 5 ? t.y_train[i] : c.max_classes;
    CHECK(rows_bits_equal(a.tokens, i, w.label_embedding, label));
  }
}

TEST_CASE("encode_layer checks its layer index") {
  const BackboneWeights w = noisy_backbone(small_config());
  const LayerActivations a = embed(toy_task(5, 4, 2, 2, 2), w);
  CHECK_THROWS_AS(encode_layer(a, 1, w), ContractError);
  CHECK_THROWS_AS(encode_layer(a, 3, w), ContractError);
  CHECK_THROWS_AS(forward_until(toy_task(5, 4, 2, 2, 2), w, 4), ContractError);
}

TEST_CASE("query rows never influence each other") {
  const BackboneWeights w = noisy_backbone(small_config());
  const SyntheticTask t = toy_task(6, 8, 4, 3, 3);
  SyntheticTask more = t;
  Pcg32 rng = Pcg32::keyed(1, 2);
  const Tensor extra = icx::testing::random_matrix(rng, 1, 3, false);
  std::vector<double> rows(t.x_test.data().begin(), t.x_test.data().end());
  rows.insert(rows.end(), extra.data().begin(), extra.data().end());
  more.x_test = Tensor({5, 3}, rows);
  more.y_test.push_back(1);
  for (std::size_t k = 1; k <= 3; ++k) {
    const Tensor a = forward_until(t, w, k).tokens, b = forward_until(more, w, k).tokens;
    for (std::size_t r = 0; r < 12; ++r) CHECK(rows_bits_equal(a, r, b, r));
  }
}

TEST_CASE("train-row permutation leaves every query token bit-identical") {
  const BackboneWeights w = noisy_backbone(small_config());
  const SyntheticTask t = toy_task(7, 10, 3, 4, 3);
  Pcg32 rng = Pcg32::keyed(3, 3);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<std::size_t> perm(10);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(perm));
    const SyntheticTask p = permute_train(t, perm);
    for (std::size_t k = 0; k <= 3; ++k) {
      const Tensor a = forward_until(t, w, k).tokens, b = forward_until(p, w, k).tokens;
      for (std::size_t i = 0; i < 10; ++i) CHECK(rows_bits_equal(b, i, a, perm[i]));
      for (std::size_t i = 10; i < 13; ++i) CHECK(rows_bits_equal(b, i, a, i));
    }
  }
}

TEST_CASE("forward_until is a bit-exact prefix") {
  const BackboneWeights w = noisy_backbone(small_config());
  const SyntheticTask t = toy_task(8, 9, 4, 4, 3);
  CHECK(bits_equal(forward_until(t, w, 0).tokens, embed(t, w).tokens));
  LayerActivations acts = embed(t, w);
  for (std::size_t k = 1; k <= 3; ++k) {
    acts = encode_layer(acts, k - 1, w);
    const LayerActivations direct = forward_until(t, w, k);
    CHECK(direct.layer_index == k);
    CHECK(bits_equal(acts.tokens, direct.tokens));
  }
}

TEST_CASE("measured FLOPs scale with depth at desk defaults") {
  const ModelConfig c;  // desk defaults
  const BackboneWeights w = BackboneWeights::init(c);
  const SyntheticTask t = sample_task(PriorConfig{}, 3);
  flops::reset();
  (void)forward_until(t, w, c.n_layers);
  const double full = static_cast<double>(flops::read());
  for (std::size_t k = 1; k <= c.n_layers; ++k) {
    flops::reset();
    (void)forward_until(t, w, k);
    const double ratio = static_cast<double>(flops::read()) / full;
    const double want = static_cast<double>(k) / static_cast<double>(c.n_layers);
    CHECK(std::abs(ratio - want) / want < 0.05);
  }
  flops::reset();
  (void)forward_until(t, w, c.n_layers);
  CHECK(flops::read() == embed_flops(c, t.n_train(), t.n_test()) +
                             c.n_layers * encoder_layer_flops(c, t.n_train(), t.n_test()));
}

TEST_CASE("one layer on two tokens matches a hand evaluation") {
  // d_model = 2, one head, one context token and one query token.
  ModelConfig c;
  c.d_model = 2;
  c.n_layers = 1;
  c.n_heads = 1;
  c.d_ff = 2;
  c.max_features = 1;
  c.max_classes = 2;
  BackboneWeights w = BackboneWeights::init(c);
  auto set = [](Tensor& t, std::vector<double> v) {
    REQUIRE(v.size() == t.numel());
    std::copy(v.begin(), v.end(), t.mutable_data().begin());
  };
  auto& L = w.layers[0];
  set(L.ln1_gain, {1.5, 0.5});
  set(L.ln1_bias, {0.1, -0.2});
  set(L.query_w, {0.3, -0.7, 0.9, 0.2});
  set(L.query_b, {0.05, 0.0});
  set(L.key_w, {-0.4, 0.6, 0.1, 0.8});
  set(L.key_b, {0.0, 0.1});
  set(L.value_w, {0.5, 0.25, -0.75, 1.0});
  set(L.value_b, {0.2, -0.1});
  set(L.out_w, {1.0, -0.5, 0.3, 0.7});
  set(L.out_b, {0.01, 0.02});
  set(L.ln2_gain, {0.8, 1.2});
  set(L.ln2_bias, {0.0, 0.3});
  set(L.ff1_w, {0.6, -0.2, 0.4, 0.9});
  set(L.ff1_b, {0.1, -0.1});
  set(L.ff2_w, {-0.3, 0.5, 0.7, 0.2});
  set(L.ff2_b, {0.0, 0.05});
  const std::vector<std::vector<long double>> x = {{0.4L, -1.1L}, {1.3L, 0.2L}};
  const LayerActivations in{Tensor({2, 2}, {0.4, -1.1, 1.3, 0.2}), 0, 1, 1};
  const Tensor got = encode_layer(in, 0, w).tokens;

  auto vec = [](const Tensor& t) { return std::vector<long double>(t.data().begin(), t.data().end()); };
  auto affine = [](const std::vector<long double>& v, const std::vector<long double>& m,
                   const std::vector<long double>& b) {
    return std::vector<long double>{v[0] * m[0] + v[1] * m[2] + b[0], v[0] * m[1] + v[1] * m[3] + b[1]};
  };
  std::vector<std::vector<long double>> q(2), k(2), v(2);
  for (int r = 0; r < 2; ++r) {
    std::vector<long double> h;
    ln_oracle(x[r], vec(L.ln1_gain), vec(L.ln1_bias), h);
    q[r] = affine(h, vec(L.query_w), vec(L.query_b));
    k[r] = affine(h, vec(L.key_w), vec(L.key_b));
    v[r] = affine(h, vec(L.value_w), vec(L.value_b));
  }
  const long double scale = 1.0L / std::sqrt(2.0L);
  std::vector<std::vector<long double>> att(2);
  att[0] = v[0];  // the context token only sees itself
  const long double s0 = (q[1][0] * k[0][0] + q[1][1] * k[0][1]) * scale;
  const long double s1 = (q[1][0] * k[1][0] + q[1][1] * k[1][1]) * scale;
  const long double p0 = 1.0L / (1.0L + std::exp(s1 - s0)), p1 = 1.0L - p0;
  att[1] = {p0 * v[0][0] + p1 * v[1][0], p0 * v[0][1] + p1 * v[1][1]};
  for (int r = 0; r < 2; ++r) {
    const auto o = affine(att[r], vec(L.out_w), vec(L.out_b));
    const std::vector<long double> x2{x[r][0] + o[0], x[r][1] + o[1]};
    std::vector<long double> h2;
    ln_oracle(x2, vec(L.ln2_gain), vec(L.ln2_bias), h2);
    auto f1 = affine(h2, vec(L.ff1_w), vec(L.ff1_b));
    for (auto& e : f1) e = icx::testing::gelu_long(e);
    const auto f2 = affine(f1, vec(L.ff2_w), vec(L.ff2_b));
    for (int j = 0; j < 2; ++j) CHECK(std::abs(static_cast<long double>(got.at(r, j)) - (x2[j] + f2[j])) < 1e-9L);
  }
}

TEST_CASE("backbone training: lr 0 leaves weights at init; runs are deterministic") {
  const ModelConfig c = icx::testing::toy_model_config();
  PriorConfig p;
  p.n_samples_per_task = 24;
  p.max_features = 3;
  p.max_classes = 3;
  const TrainedBackbone frozen = train_backbone(c, p, {1, 2, 0.0});
  const auto init = BackboneWeights::init(c).named_parameters(), after = frozen.backbone.named_parameters();
  for (std::size_t i = 0; i < init.size(); ++i) CHECK(bits_equal(init[i].second, after[i].second));

  const TrainedBackbone a = train_backbone(c, p, {5, 2, 1e-2}), b = train_backbone(c, p, {5, 2, 1e-2});
  const auto na = a.backbone.named_parameters(), nb = b.backbone.named_parameters();
  bool changed = false;
  for (std::size_t i = 0; i < na.size(); ++i) {
    CHECK(bits_equal(na[i].second, nb[i].second));
    changed = changed || !bits_equal(na[i].second, init[i].second);
  }
  CHECK(changed);
  CHECK(a.losses == b.losses);
  CHECK_THROWS_AS(train_backbone(c, p, {0, 2, 1e-3}), ConfigError);
}

TEST_CASE("backbone training reports divergence with the step") {
  const ModelConfig c = icx::testing::toy_model_config();
  PriorConfig p;
  p.n_samples_per_task = 24;
  p.max_features = 3;
  p.max_classes = 3;
  try {
    (void)train_backbone(c, p, {50, 1, 1e300});
    FAIL("expected divergence");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
  }
}

}  // TEST_SUITE
