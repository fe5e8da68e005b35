// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>

#include "icx/error.hpp"
#include "icx/metrics.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace {

std::string fmt17(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, ptr);
}

std::vector<std::size_t> subsample(const std::vector<std::size_t>& rows, std::size_t cap,
                                   std::uint64_t seed, std::size_t fold) {
  if (rows.size() <= cap) return rows;
  std::vector<std::size_t> picked(rows);
  Pcg32 rng = Pcg32::keyed(seed, 0xc0417e87 + fold);
  rng.shuffle(std::span<std::size_t>(picked));
  picked.resize(cap);
  std::sort(picked.begin(), picked.end());
  return picked;
}

struct Stats {
  double mean = 0.0, std = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  if (v.empty()) {
    s.mean = s.std = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  for (double x : v) s.mean += x;
  s.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    for (double x : v) s.std += (x - s.mean) * (x - s.mean);
    s.std = std::sqrt(s.std / static_cast<double>(v.size() - 1));
  }
  return s;
}

}  // namespace

SweepReport evaluate_dataset(const TabularDataset& ds, const Model& model, std::vector<double> taus,
                             const EvalOptions& options) {
  if (taus.empty()) throw ConfigError("sweep: no thresholds given");
  taus.push_back(0.0);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  if (taus.front() < 0.0) throw ConfigError("sweep: thresholds must be >= 0");

  const ModelConfig& cfg = model.config();
  ExitConfig exit_cfg;
  exit_cfg.min_layer = options.min_layer;
  exit_cfg.normalize_entropy = options.normalize_entropy;
  exit_cfg.validate(cfg.n_layers);

  SweepReport report;
  report.dataset = ds.name;
  report.seed = options.seed;
  const auto folds = kfold_split(ds.size(), options.folds, options.seed);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto context = subsample(folds[f].train, options.max_context, options.seed, f);
    const SyntheticTask task = make_task(ds, context, folds[f].test);
    try {
      check_capacity(task, cfg);
    } catch (const Error& e) {
      report.skipped.push_back("fold " + std::to_string(f) + ": " + e.what());
      continue;
    }
    ++report.folds;
    for (double tau : taus) {
      exit_cfg.tau = tau;
      ExitReport r = predict_early_exit(task, model.backbone, model.bank, exit_cfg);
      FoldRun run;
      run.fold = f;
      run.tau = tau;
      run.exit_layer = r.exit_layer;
      run.auc = roc_auc_from_probs(r.probs, task.y_test);
      run.accuracy = accuracy_from_probs(r.probs, task.y_test);
      run.elapsed_s = r.elapsed_s;
      run.probs = std::move(r.probs);
      report.runs.push_back(std::move(run));
    }
  }

  for (double tau : taus) {
    std::vector<double> auc, acc, layer, elapsed;
    for (const auto& run : report.runs) {
      if (run.tau != tau) continue;
      if (!std::isnan(run.auc)) auc.push_back(run.auc);
      acc.push_back(run.accuracy);
      layer.push_back(static_cast<double>(run.exit_layer));
      elapsed.push_back(run.elapsed_s);
    }
    SweepRow row;
    row.tau = tau;
    const Stats a = stats(auc);
    row.mean_auc = a.mean;
    row.std_auc = a.std;
    row.mean_accuracy = stats(acc).mean;
    row.mean_exit_layer = stats(layer).mean;
    row.mean_elapsed_s = stats(elapsed).mean;
    report.rows.push_back(row);
  }
  for (auto& row : report.rows) row.runtime_delta_s = row.mean_elapsed_s - report.rows.front().mean_elapsed_s;
  return report;
}

std::string sweep_csv(const SweepReport& report) {
  std::ostringstream os;
  os << kSweepCsvHeader << '\n';
  for (const auto& r : report.rows) {
    os << fmt17(r.tau) << ',' << fmt17(r.mean_auc) << ',' << fmt17(r.std_auc) << ','
       << fmt17(r.mean_accuracy) << ',' << fmt17(r.mean_exit_layer) << ','
       << fmt17(r.mean_elapsed_s) << ',' << fmt17(r.runtime_delta_s) << '\n';
  }
  return os.str();
}

std::vector<SweepRow> parse_sweep_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kSweepCsvHeader) {
    throw IngestionError("sweep csv: unexpected header '" + line + "'");
  }
  std::vector<SweepRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 7) throw IngestionError("sweep csv: row with " + std::to_string(cells.size()) + " cells");
    double v[7];
    for (int i = 0; i < 7; ++i) {
      const auto& c = cells[static_cast<std::size_t>(i)];
      if (c == "nan" || c == "-nan") {
        v[i] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v[i]);
      if (ec != std::errc()) throw IngestionError("sweep csv: bad number '" + c + "'");
    }
    rows.push_back({v[0], v[1], v[2], v[3], v[4], v[5], v[6]});
  }
  return rows;
}

std::vector<SweepRow> aggregate_rows(const std::vector<SweepReport>& reports) {
  std::vector<SweepRow> out;
  if (reports.empty()) return out;
  for (const auto& candidate : reports.front().rows) {
    std::vector<const SweepRow*> matches;
    for (const auto& rep : reports) {
      for (const auto& r : rep.rows)
        if (r.tau == candidate.tau) matches.push_back(&r);
    }
    if (matches.size() != reports.size()) continue;
    SweepRow agg;
    agg.tau = candidate.tau;
    const double n = static_cast<double>(matches.size());
    for (const SweepRow* r : matches) {
      agg.mean_auc += r->mean_auc / n;
      agg.std_auc += r->std_auc / n;
      agg.mean_accuracy += r->mean_accuracy / n;
      agg.mean_exit_layer += r->mean_exit_layer / n;
      agg.mean_elapsed_s += r->mean_elapsed_s / n;
      agg.runtime_delta_s += r->runtime_delta_s / n;
    }
    out.push_back(agg);
  }
  return out;
}

std::vector<Tradeoff> tradeoffs(const std::vector<SweepRow>& rows) {
  std::vector<Tradeoff> out;
  const auto base = std::find_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.tau == 0.0; });
  if (base == rows.end()) return out;
  for (const auto& r : rows) {
    out.push_back({r.tau, base->mean_elapsed_s / r.mean_elapsed_s,
                   100.0 * (base->mean_auc - r.mean_auc) / base->mean_auc});
  }
  return out;
}

std::string render_report(const std::vector<SweepReport>& reports, ReportFormat format) {
  const auto aggregate = aggregate_rows(reports);
  std::ostringstream os;
  if (format == ReportFormat::Csv) {
    os << "table,dataset," << kSweepCsvHeader << ",speedup,auc_decrease_pct\n";
    auto emit = [&](const char* table, const std::string& name, const std::vector<SweepRow>& rows) {
      const auto t = tradeoffs(rows);
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        os << table << ',' << name << ',' << fmt17(r.tau) << ',' << fmt17(r.mean_auc) << ','
           << fmt17(r.std_auc) << ',' << fmt17(r.mean_accuracy) << ',' << fmt17(r.mean_exit_layer) << ','
           << fmt17(r.mean_elapsed_s) << ',' << fmt17(r.runtime_delta_s) << ','
           << fmt17(t.empty() ? 0.0 : t[i].speedup) << ',' << fmt17(t.empty() ? 0.0 : t[i].auc_decrease_pct)
           << '\n';
      }
    };
    for (const auto& rep : reports) emit("dataset", rep.dataset, rep.rows);
    emit("aggregate", "all", aggregate);
    return os.str();
  }

  auto table = [&](const std::string& title, const std::vector<SweepRow>& rows) {
    os << title << '\n';
    os << std::left << std::setw(8) << "tau" << std::right << std::setw(18) << "ROC AUC"
       << std::setw(10) << "accuracy" << std::setw(16) << "runtime d (s)" << std::setw(12)
       << "exit layer" << '\n';
    for (const auto& r : rows) {
      std::ostringstream auc;
      auc << std::fixed << std::setprecision(3) << r.mean_auc << " +- " << r.std_auc;
      os << std::left << std::setw(8) << std::fixed << std::setprecision(2) << r.tau << std::right
         << std::setw(18) << auc.str() << std::setw(10) << std::setprecision(3) << r.mean_accuracy
         << std::setw(16) << std::setprecision(6) << r.runtime_delta_s << std::setw(12)
         << std::setprecision(2) << r.mean_exit_layer << '\n';
    }
    os << '\n';
  };
  for (const auto& rep : reports) {
    table("dataset " + rep.dataset + " (" + std::to_string(rep.folds) + " folds, seed " +
              std::to_string(rep.seed) + ")",
          rep.rows);
    for (const auto& s : rep.skipped) os << "  skipped " << s << '\n';
  }
  table("aggregate over " + std::to_string(reports.size()) + " dataset(s)", aggregate);
  os << "runtime / ROC AUC tradeoff (aggregate)\n";
  os << std::left << std::setw(8) << "tau" << std::right << std::setw(12) << "speedup" << std::setw(20)
     << "AUC decrease (%)" << '\n';
  for (const auto& t : tradeoffs(aggregate)) {
    os << std::left << std::setw(8) << std::fixed << std::setprecision(2) << t.tau << std::right
       << std::setw(11) << std::setprecision(3) << t.speedup << 'x' << std::setw(20)
       << std::setprecision(3) << t.auc_decrease_pct << '\n';
  }
  return os.str();
}

}  // namespace icx
