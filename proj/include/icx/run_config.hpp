// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Flat `section.key = value` configuration shared by every pipeline stage.
//
// Grammar, one entry per line:
//
//   line    := blank | comment | entry
//   comment := '#' anything
//   entry   := key '=' value       (surrounding whitespace is ignored)
//   key     := section '.' name    (must be one of the known keys)
//
// Later entries override earlier ones. Unknown keys and malformed values are
// configuration errors.

#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "icx/backbone.hpp"
#include "icx/early_exit.hpp"
#include "icx/harness.hpp"
#include "icx/prior.hpp"
#include "icx/training.hpp"

namespace icx {

struct InferOptions {
  double test_fraction = 0.2;
  std::uint64_t seed = 0;
};

class RunConfig {
 public:
  RunConfig();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  bool has(const std::string& key) const;
  void load_text(const std::string& text, const std::string& origin = "<text>");
  void load_file(const std::string& path);
  /// Applies one seed to every seeded stage.
  void set_seed(std::uint64_t seed);

  /// Every key in sorted order, `key = value` per line.
  std::string to_text() const;
  static std::vector<std::string> known_keys();

  PriorConfig prior() const;
  /// max_features / max_classes default to the prior's values.
  ModelConfig model() const;
  BackboneTrainConfig backbone_training() const;
  DecoderTrainConfig decoder_training() const;
  ExitConfig exit() const;
  EvalOptions eval() const;
  std::vector<double> taus() const;
  InferOptions infer() const;
  std::size_t heldout_tasks() const;

  /// Parses every typed view; throws ConfigError on the first problem.
  void validate() const;

 private:
  std::uint64_t u64(const std::string& key) const;
  double f64(const std::string& key) const;
  bool flag(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace icx
