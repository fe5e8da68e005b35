// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "icx/error.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& cell) {
  return cell.empty() || cell == "NA" || cell == "?" || cell == "nan" || cell == "NaN";
}

bool parse_number(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = first + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cell += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        cell += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      cells.push_back(trim(std::move(cell)));
      cell.clear();
    } else {
      cell += ch;
    }
  }
  cells.push_back(trim(std::move(cell)));
  return cells;
}

TabularDataset parse_csv(const std::string& text, const std::string& label_column,
                         const std::string& name) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw IngestionError(name + ": empty file, no header");
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw IngestionError(name + ": label column '" + label_column + "' not in header (line " +
                         std::to_string(line_no) + ")");
  }
  const std::size_t label_idx = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t n_cols = header.size();

  std::vector<std::vector<std::string>> rows;
  std::size_t dropped = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != n_cols) {
      throw IngestionError(name + ": line " + std::to_string(line_no) + " has " +
                           std::to_string(cells.size()) + " cells, header has " + std::to_string(n_cols));
    }
    if (std::any_of(cells.begin(), cells.end(), is_missing)) {
      ++dropped;
      continue;
    }
    rows.push_back(std::move(cells));
  }
  if (rows.size() < 2) throw IngestionError(name + ": needs at least 2 complete rows, found " + std::to_string(rows.size()));

  TabularDataset ds;
  ds.name = name;
  ds.dropped_rows = dropped;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < n_cols; ++c) {
    if (c == label_idx) continue;
    feature_cols.push_back(c);
    ds.feature_names.push_back(header[c]);
  }
  const std::size_t n = rows.size(), f = feature_cols.size();
  std::vector<double> values(n * f);
  for (std::size_t j = 0; j < f; ++j) {
    const std::size_t c = feature_cols[j];
    bool numeric = true;
    for (std::size_t i = 0; i < n && numeric; ++i) numeric = parse_number(rows[i][c], values[i * f + j]);
    if (!numeric) {
      std::map<std::string, std::size_t> codes;
      for (std::size_t i = 0; i < n; ++i) {
        auto [it, inserted] = codes.emplace(rows[i][c], codes.size());
        values[i * f + j] = static_cast<double>(it->second);
      }
    }
  }
  std::map<std::string, std::size_t> label_codes;
  for (const auto& row : rows) {
    auto [it, inserted] = label_codes.emplace(row[label_idx], label_codes.size());
    if (inserted) ds.class_names.push_back(row[label_idx]);
    ds.labels.push_back(it->second);
  }
  ds.n_classes = label_codes.size();
  if (ds.n_classes < 2) throw IngestionError(name + ": label column '" + label_column + "' has a single class");
  ds.features = Tensor({n, f}, std::move(values));
  return ds;
}

TabularDataset load_csv(const std::string& path, const std::string& label_column) {
  return parse_csv(read_file(path), label_column, std::filesystem::path(path).stem().string());
}

std::string task_to_csv(const SyntheticTask& task) {
  std::ostringstream os;
  const std::size_t f = task.n_features();
  for (std::size_t j = 0; j < f; ++j) os << 'f' << j << ',';
  os << "label\n";
  char buf[32];
  auto emit = [&](const Tensor& x, const std::vector<std::size_t>& y) {
    for (std::size_t i = 0; i < y.size(); ++i) {
      for (std::size_t j = 0; j < f; ++j) {
        auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x.at(i, j), std::chars_format::general, 17);
        os.write(buf, ptr - buf);
        os << ',';
      }
      os << y[i] << '\n';
    }
  };
  emit(task.x_train, task.y_train);
  emit(task.x_test, task.y_test);
  return os.str();
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ConfigError("kfold: k must be >= 2");
  if (n < k) throw ConfigError("kfold: " + std::to_string(n) + " rows cannot fill " + std::to_string(k) + " folds");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Pcg32 rng = Pcg32::keyed(seed, 0xf01d5);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<Fold> folds(k);
  std::size_t begin = 0;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t size = n / k + (i < n % k ? 1 : 0);
    auto& fold = folds[i];
    fold.test.assign(perm.begin() + static_cast<std::ptrdiff_t>(begin),
                     perm.begin() + static_cast<std::ptrdiff_t>(begin + size));
    fold.train.reserve(n - size);
    fold.train.insert(fold.train.end(), perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(begin));
    fold.train.insert(fold.train.end(), perm.begin() + static_cast<std::ptrdiff_t>(begin + size), perm.end());
    begin += size;
  }
  return folds;
}

SyntheticTask make_task(const TabularDataset& ds, const std::vector<std::size_t>& train_rows,
                        const std::vector<std::size_t>& test_rows) {
  const std::size_t f = ds.n_features();
  const auto x = ds.features.data();
  std::vector<double> mu(f, 0.0), inv(f, 1.0);
  for (std::size_t j = 0; j < f; ++j) {
    for (auto r : train_rows) mu[j] += x[r * f + j];
    mu[j] /= static_cast<double>(train_rows.size());
    double var = 0.0;
    for (auto r : train_rows) var += (x[r * f + j] - mu[j]) * (x[r * f + j] - mu[j]);
    const double sd = std::sqrt(var / static_cast<double>(train_rows.size()));
    if (sd > 1e-12) inv[j] = 1.0 / sd;
  }
  auto gather = [&](const std::vector<std::size_t>& rows, std::vector<std::size_t>& labels) {
    std::vector<double> out(rows.size() * f);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      for (std::size_t j = 0; j < f; ++j) out[i * f + j] = (x[rows[i] * f + j] - mu[j]) * inv[j];
      labels.push_back(ds.labels[rows[i]]);
    }
    return Tensor({rows.size(), f}, std::move(out));
  };
  SyntheticTask task;
  task.n_classes = ds.n_classes;
  task.x_train = gather(train_rows, task.y_train);
  task.x_test = gather(test_rows, task.y_test);
  return task;
}

std::vector<ManifestEntry> load_manifest(const std::string& path) {
  const std::string text = read_file(path);
  std::istringstream in(text);
  std::string line;
  std::vector<std::string> header;
  std::vector<ManifestEntry> entries;
  const auto base = std::filesystem::path(path).parent_path();
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (header.empty()) {
      header = cells;
      for (const char* col : {"name", "path", "label_column"}) {
        if (std::find(header.begin(), header.end(), col) == header.end()) {
          throw IngestionError("manifest " + path + ": missing column '" + col + "'");
        }
      }
      continue;
    }
    if (cells.size() != header.size()) {
      throw IngestionError("manifest " + path + ": line " + std::to_string(line_no) + " has wrong cell count");
    }
    auto col = [&](const char* key) {
      return cells[static_cast<std::size_t>(std::find(header.begin(), header.end(), key) - header.begin())];
    };
    std::filesystem::path p = col("path");
    if (p.is_relative()) p = base / p;
    entries.push_back({col("name"), p.string(), col("label_column")});
  }
  if (entries.empty()) throw IngestionError("manifest " + path + " lists no datasets");
  return entries;
}

}  // namespace icx
