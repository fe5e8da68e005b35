// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "icx/prior.hpp"
#include "icx/tensor.hpp"

namespace icx {

struct TabularDataset {
  std::string name;
  Tensor features;  // [n x f], raw (not standardized)
  std::vector<std::size_t> labels;
  std::size_t n_classes = 0;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;  // first-appearance order
  std::size_t dropped_rows = 0;          // rows skipped for missing cells

  std::size_t size() const { return labels.size(); }
  std::size_t n_features() const { return features.cols(); }
};

/// Headered CSV. Numeric feature columns are used as-is; any column holding a
/// non-numeric value is integer-coded by first appearance. Labels are coded
/// by first appearance. Rows with an empty, "NA", "?" or "nan" cell are
/// dropped and counted. Throws IngestionError with line context.
TabularDataset load_csv(const std::string& path, const std::string& label_column);
TabularDataset parse_csv(const std::string& text, const std::string& label_column,
                         const std::string& name = "dataset");

/// Features f0..f{f-1} then a `label` column; train rows precede test rows.
/// Values are written with 17 significant digits.
std::string task_to_csv(const SyntheticTask& task);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Seeded shuffle cut into k contiguous test blocks of size floor(n/k) or
/// ceil(n/k). Throws ConfigError when k < 2 or n < k.
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

/// A task over the given rows, z-scored with statistics of the train rows.
SyntheticTask make_task(const TabularDataset& ds, const std::vector<std::size_t>& train_rows,
                        const std::vector<std::size_t>& test_rows);

/// Manifest rows: name,path,label_column (headered CSV).
struct ManifestEntry {
  std::string name;
  std::string path;
  std::string label_column;
};
std::vector<ManifestEntry> load_manifest(const std::string& path);

/// Minimal RFC 4180 splitting of one line (quotes, doubled quotes).
std::vector<std::string> split_csv_line(const std::string& line);

}  // namespace icx
