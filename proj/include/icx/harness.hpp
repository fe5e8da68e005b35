// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Cross-validated threshold sweeps and their reports.

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icx/checkpoint.hpp"
#include "icx/dataset.hpp"
#include "icx/early_exit.hpp"

namespace icx {

struct EvalOptions {
  std::size_t folds = 10;
  std::uint64_t seed = 0;
  std::size_t min_layer = 1;
  bool normalize_entropy = false;
  /// Context rows beyond this are subsampled (seeded) per fold.
  std::size_t max_context = 512;
};

/// One (fold, tau) inference run.
struct FoldRun {
  std::size_t fold = 0;
  double tau = 0.0;
  std::size_t exit_layer = 0;
  double auc = 0.0;  // NaN when the fold's test labels hold a single class
  double accuracy = 0.0;
  double elapsed_s = 0.0;
  Tensor probs;
};

struct SweepRow {
  double tau = 0.0;
  double mean_auc = 0.0;
  double std_auc = 0.0;
  double mean_accuracy = 0.0;
  double mean_exit_layer = 0.0;
  double mean_elapsed_s = 0.0;
  double runtime_delta_s = 0.0;  // negative = faster than tau = 0
};

struct SweepReport {
  std::string dataset;
  std::vector<SweepRow> rows;  // ascending tau, rows[0].tau == 0
  std::size_t folds = 0;       // folds that were evaluated
  std::uint64_t seed = 0;
  std::vector<std::string> skipped;  // one message per skipped fold
  std::vector<FoldRun> runs;
};

/// taus are sorted, de-duplicated and extended with the 0 baseline.
/// Folds that exceed model capacity are recorded in `skipped`.
SweepReport evaluate_dataset(const TabularDataset& ds, const Model& model,
                             std::vector<double> taus, const EvalOptions& options);

enum class ReportFormat { Text, Csv };

inline constexpr const char* kSweepCsvHeader =
    "tau,mean_auc,std_auc,mean_accuracy,mean_exit_layer,mean_elapsed_s,runtime_delta_s";

/// Per-dataset `<name>.sweep.csv` body.
std::string sweep_csv(const SweepReport& report);
std::vector<SweepRow> parse_sweep_csv(const std::string& text);

/// Mean of each column over reports, for taus every report contains.
std::vector<SweepRow> aggregate_rows(const std::vector<SweepReport>& reports);

/// Runtime speedup (elapsed(0) / elapsed(tau)) and relative AUC decrease in
/// percent against the tau = 0 row.
struct Tradeoff {
  double tau = 0.0;
  double speedup = 0.0;
  double auc_decrease_pct = 0.0;
};
std::vector<Tradeoff> tradeoffs(const std::vector<SweepRow>& rows);

/// Per-dataset tables, an aggregate table and a tradeoff table. The CSV form
/// is one table with a leading `table,dataset` pair of columns.
std::string render_report(const std::vector<SweepReport>& reports, ReportFormat format);

}  // namespace icx
