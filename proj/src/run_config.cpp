// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/run_config.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "icx/error.hpp"

namespace icx {

namespace {

const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> table = {
      {"prior.n_samples_per_task", "128"},
      {"prior.max_features", "8"},
      {"prior.max_classes", "4"},
      {"prior.train_fraction", "0.7"},
      {"prior.mlp_depth_min", "1"},
      {"prior.mlp_depth_max", "3"},
      {"prior.mlp_width_min", "4"},
      {"prior.mlp_width_max", "16"},
      {"prior.noise_std", "0.1"},
      {"prior.seed", "0"},
      {"model.d_model", "64"},
      {"model.n_layers", "6"},
      {"model.n_heads", "4"},
      {"model.d_ff", "256"},
      {"model.max_features", "auto"},
      {"model.max_classes", "auto"},
      {"model.decoder_hidden", "auto"},
      {"model.seed", "0"},
      {"train.backbone_steps", "2000"},
      {"train.backbone_batch_size", "8"},
      {"train.backbone_lr", "0.001"},
      {"train.decoder_epochs", "5"},
      {"train.decoder_steps_per_epoch", "200"},
      {"train.decoder_batch_size", "8"},
      {"train.decoder_lr", "0.001"},
      {"train.heldout_tasks", "100"},
      {"exit.tau", "0"},
      {"exit.min_layer", "1"},
      {"exit.normalize_entropy", "false"},
      {"eval.folds", "10"},
      {"eval.seed", "0"},
      {"eval.max_context", "512"},
      {"eval.taus", "0,0.1,0.2,0.3,0.4,0.5"},
      {"infer.test_fraction", "0.2"},
      {"infer.seed", "0"},
      {"paths.checkpoint", "model.icx"},
      {"paths.manifest", ""},
      {"paths.out_dir", "out"},
  };
  return table;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(defaults()) {}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, v] : defaults()) keys.push_back(k);
  return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().contains(key)) throw ConfigError("unknown configuration key '" + key + "'");
  values_[key] = trim(value);
}

std::string RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown configuration key '" + key + "'");
  return it->second;
}

bool RunConfig::has(const std::string& key) const { return values_.contains(key); }

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  load_text(ss.str(), path);
}

void RunConfig::set_seed(std::uint64_t seed) {
  const std::string s = std::to_string(seed);
  for (const char* key : {"prior.seed", "model.seed", "eval.seed", "infer.seed"}) values_[key] = s;
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
  return os.str();
}

std::uint64_t RunConfig::u64(const std::string& key) const {
  const std::string v = get(key);
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

double RunConfig::f64(const std::string& key) const {
  const std::string v = get(key);
  if (v == "inf") return std::numeric_limits<double>::infinity();
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool RunConfig::flag(const std::string& key) const {
  const std::string v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + v + "'");
}

PriorConfig RunConfig::prior() const {
  PriorConfig p;
  p.n_samples_per_task = u64("prior.n_samples_per_task");
  p.max_features = u64("prior.max_features");
  p.max_classes = u64("prior.max_classes");
  p.train_fraction = f64("prior.train_fraction");
  p.mlp_depth_range = {u64("prior.mlp_depth_min"), u64("prior.mlp_depth_max")};
  p.mlp_width_range = {u64("prior.mlp_width_min"), u64("prior.mlp_width_max")};
  p.noise_std = f64("prior.noise_std");
  p.seed = u64("prior.seed");
  p.validate();
  return p;
}

ModelConfig RunConfig::model() const {
  const PriorConfig p = prior();
  ModelConfig m;
  m.d_model = u64("model.d_model");
  m.n_layers = u64("model.n_layers");
  m.n_heads = u64("model.n_heads");
  m.d_ff = u64("model.d_ff");
  m.max_features = get("model.max_features") == "auto" ? p.max_features : u64("model.max_features");
  m.max_classes = get("model.max_classes") == "auto" ? p.max_classes : u64("model.max_classes");
  m.decoder_hidden = get("model.decoder_hidden") == "auto" ? 0 : u64("model.decoder_hidden");
  m.seed = u64("model.seed");
  m.validate();
  return m;
}

BackboneTrainConfig RunConfig::backbone_training() const {
  BackboneTrainConfig t;
  t.steps = u64("train.backbone_steps");
  t.batch_size = u64("train.backbone_batch_size");
  t.lr = f64("train.backbone_lr");
  if (t.steps == 0 || t.batch_size == 0 || t.lr < 0.0) throw ConfigError("train.backbone_*: invalid values");
  return t;
}

DecoderTrainConfig RunConfig::decoder_training() const {
  DecoderTrainConfig t;
  t.epochs = u64("train.decoder_epochs");
  t.steps_per_epoch = u64("train.decoder_steps_per_epoch");
  t.batch_size = u64("train.decoder_batch_size");
  t.lr = f64("train.decoder_lr");
  if (t.total_steps() == 0 || t.batch_size == 0 || t.lr < 0.0) throw ConfigError("train.decoder_*: invalid values");
  return t;
}

ExitConfig RunConfig::exit() const {
  ExitConfig e;
  e.tau = f64("exit.tau");
  e.min_layer = u64("exit.min_layer");
  e.normalize_entropy = flag("exit.normalize_entropy");
  e.validate(model().n_layers);
  return e;
}

EvalOptions RunConfig::eval() const {
  EvalOptions o;
  o.folds = u64("eval.folds");
  o.seed = u64("eval.seed");
  o.max_context = u64("eval.max_context");
  const ExitConfig e = exit();
  o.min_layer = e.min_layer;
  o.normalize_entropy = e.normalize_entropy;
  if (o.folds < 2) throw ConfigError("eval.folds must be >= 2");
  if (o.max_context < 1) throw ConfigError("eval.max_context must be >= 1");
  return o;
}

std::vector<double> RunConfig::taus() const {
  std::vector<double> out;
  std::istringstream in(get("eval.taus"));
  std::string cell;
  while (std::getline(in, cell, ',')) {
    cell = trim(cell);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc() || ptr != cell.data() + cell.size() || v < 0.0) {
      throw ConfigError("eval.taus: bad threshold '" + cell + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError("eval.taus is empty");
  return out;
}

InferOptions RunConfig::infer() const {
  InferOptions o;
  o.test_fraction = f64("infer.test_fraction");
  o.seed = u64("infer.seed");
  if (!(o.test_fraction > 0.0 && o.test_fraction < 1.0)) throw ConfigError("infer.test_fraction must lie in (0, 1)");
  return o;
}

std::size_t RunConfig::heldout_tasks() const {
  const std::uint64_t n = u64("train.heldout_tasks");
  if (n == 0) throw ConfigError("train.heldout_tasks must be >= 1");
  return n;
}

void RunConfig::validate() const {
  prior();
  model();
  backbone_training();
  decoder_training();
  exit();
  eval();
  taus();
  infer();
  heldout_tasks();
}

}  // namespace icx
