// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// End-to-end stages behind the command-line subcommands.

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "icx/checkpoint.hpp"
#include "icx/dataset.hpp"
#include "icx/early_exit.hpp"
#include "icx/harness.hpp"
#include "icx/run_config.hpp"
#include "icx/training.hpp"

namespace icx {

/// Name of the resolved-config copy written into every output directory.
inline constexpr const char* kRunConfigFile = "run_config.txt";

void write_text_file(const std::string& path, const std::string& text);
void write_run_config(const RunConfig& config, const std::string& out_dir);

struct PriorSampleResult {
  std::vector<std::string> files;
  std::vector<std::size_t> class_histogram;    // index = K
  std::vector<std::size_t> feature_histogram;  // index = feature count
  std::string summary;
};

/// Writes task_{i}.csv for i in [0, count) plus the resolved config.
PriorSampleResult run_prior_sample(const RunConfig& config, std::size_t count, const std::string& out_dir);

struct TrainResult {
  Model model;
  HeldOutReport held_out;
  std::string summary;  // per-layer held-out table
};

/// Backbone training followed by decoder-bank training.
TrainResult run_train(const RunConfig& config, const ProgressFn& backbone_progress = {},
                      const ProgressFn& decoder_progress = {});
std::string render_layer_table(const HeldOutReport& report);

struct InferResult {
  ExitReport report;
  SyntheticTask task;
  std::string text;
};

/// Seeded single train/test split, then one early-exit prediction. With
/// `trace_only` the full pass is run and only the entropy trace is printed.
InferResult run_infer(const Model& model, const TabularDataset& ds, const RunConfig& config,
                      double tau, bool trace_only = false);

struct SweepResult {
  std::vector<SweepReport> reports;
  std::vector<std::string> failures;  // "<dataset>: <message>"
  std::string text;
  std::vector<std::string> files;
};

/// Sweeps every manifest dataset; failures are isolated per dataset.
SweepResult run_sweep(const Model& model, const std::string& manifest_path, const RunConfig& config,
                      const std::vector<double>& taus, const std::string& out_dir);

}  // namespace icx
