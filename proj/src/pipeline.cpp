// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icx/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "icx/error.hpp"
#include "icx/rng.hpp"

namespace icx {

namespace fs = std::filesystem;

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path);
}

namespace {

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

void write_run_config(const RunConfig& config, const std::string& out_dir) {
  ensure_dir(out_dir);
  write_text_file((fs::path(out_dir) / kRunConfigFile).string(), config.to_text());
}

PriorSampleResult run_prior_sample(const RunConfig& config, std::size_t count, const std::string& out_dir) {
  if (count == 0) throw ConfigError("prior-sample: count must be >= 1");
  const PriorConfig prior = config.prior();
  ensure_dir(out_dir);
  write_run_config(config, out_dir);
  PriorSampleResult res;
  res.class_histogram.assign(prior.max_classes + 1, 0);
  res.feature_histogram.assign(prior.max_features + 1, 0);
  std::size_t i = 0;
  for (const SyntheticTask& task : task_stream(prior, 0, count)) {
    const std::string path = (fs::path(out_dir) / ("task_" + std::to_string(i) + ".csv")).string();
    write_text_file(path, task_to_csv(task));
    res.files.push_back(path);
    ++res.class_histogram[task.n_classes];
    ++res.feature_histogram[task.n_features()];
    ++i;
  }
  std::ostringstream os;
  os << "wrote " << count << " task(s) to " << out_dir << '\n' << "classes K:";
  for (std::size_t k = 2; k < res.class_histogram.size(); ++k) os << ' ' << k << '=' << res.class_histogram[k];
  os << "\nfeatures f:";
  for (std::size_t f = 1; f < res.feature_histogram.size(); ++f) os << ' ' << f << '=' << res.feature_histogram[f];
  os << '\n';
  res.summary = os.str();
  return res;
}

std::string render_layer_table(const HeldOutReport& report) {
  std::ostringstream os;
  os << "held-out prior tasks: " << report.n_tasks << ", majority-class accuracy "
     << std::fixed << std::setprecision(4) << report.majority_accuracy << '\n';
  os << std::setw(6) << "layer" << std::setw(12) << "accuracy" << std::setw(10) << "AUC"
     << std::setw(16) << "final-dec acc" << std::setw(16) << "final-dec AUC" << '\n';
  for (const auto& q : report.layers) {
    os << std::setw(6) << q.layer << std::setw(12) << q.accuracy << std::setw(10) << q.auc
       << std::setw(16) << q.final_decoder_accuracy << std::setw(16) << q.final_decoder_auc << '\n';
  }
  return os.str();
}

TrainResult run_train(const RunConfig& config, const ProgressFn& backbone_progress,
                      const ProgressFn& decoder_progress) {
  config.validate();
  const PriorConfig prior = config.prior();
  const ModelConfig model_cfg = config.model();
  TrainedBackbone backbone = train_backbone(model_cfg, prior, config.backbone_training(), backbone_progress);
  TrainedBank bank = train_bank(backbone, prior, config.decoder_training(), decoder_progress);
  TrainResult res{Model{std::move(backbone.backbone), std::move(bank.bank)}, {}, {}};
  res.held_out = evaluate_held_out(res.model.backbone, res.model.bank, prior, config.heldout_tasks());
  res.summary = render_layer_table(res.held_out);
  return res;
}

InferResult run_infer(const Model& model, const TabularDataset& ds, const RunConfig& config, double tau,
                      bool trace_only) {
  const InferOptions opts = config.infer();
  const EvalOptions eval = config.eval();
  ExitConfig exit_cfg = config.exit();
  exit_cfg.tau = trace_only ? 0.0 : tau;
  exit_cfg.validate(model.config().n_layers);

  const std::size_t n = ds.size();
  auto n_test = static_cast<std::size_t>(std::llround(opts.test_fraction * static_cast<double>(n)));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Pcg32 rng = Pcg32::keyed(opts.seed, 0x1f3e7);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  if (train.size() > eval.max_context) train.resize(eval.max_context);

  InferResult res;
  res.task = make_task(ds, train, test);
  try {
    check_capacity(res.task, model.config());
  } catch (const CapacityError& e) {
    throw CapacityError(std::string(e.what()) +
                        "; drop or merge columns/classes, or retrain with larger model.max_features / "
                        "model.max_classes");
  }
  res.report = predict_early_exit(res.task, model.backbone, model.bank, exit_cfg);

  std::ostringstream os;
  os << std::setprecision(6) << std::fixed;
  os << "entropy trace (nats" << (exit_cfg.normalize_entropy ? ", normalized" : "") << "):";
  for (double h : res.report.entropy_trace) os << ' ' << h;
  os << '\n';
  if (!trace_only) {
    os << "dataset " << ds.name << ": " << train.size() << " context rows, " << test.size() << " query rows, "
       << ds.n_classes << " classes\n";
    os << "tau " << tau << ", exit layer " << res.report.exit_layer << " of " << model.config().n_layers
       << ", decodes " << res.report.decode_count << ", elapsed " << std::scientific
       << res.report.elapsed_s << " s\n"
       << std::fixed;
    const std::size_t k = res.report.probs.cols();
    os << "row,label,prediction";
    for (std::size_t c = 0; c < k; ++c) os << ",p_" << ds.class_names[c];
    os << '\n';
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto row = res.report.probs.data().subspan(i * k, k);
      const auto pred = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      os << test[i] << ',' << ds.class_names[ds.labels[test[i]]] << ',' << ds.class_names[pred];
      for (double p : row) os << ',' << p;
      os << '\n';
    }
  }
  res.text = os.str();
  return res;
}

SweepResult run_sweep(const Model& model, const std::string& manifest_path, const RunConfig& config,
                      const std::vector<double>& taus, const std::string& out_dir) {
  const EvalOptions opts = config.eval();
  const auto entries = load_manifest(manifest_path);
  ensure_dir(out_dir);
  write_run_config(config, out_dir);
  SweepResult res;
  // Serial on purpose: elapsed times feed the runtime columns.
  for (const auto& entry : entries) {
    try {
      TabularDataset ds = load_csv(entry.path, entry.label_column);
      ds.name = entry.name;
      SweepReport rep = evaluate_dataset(ds, model, taus, opts);
      if (rep.folds == 0) {
        std::string why = rep.skipped.empty() ? "no folds evaluated" : rep.skipped.front();
        throw CapacityError("every fold skipped (" + why + ")");
      }
      const std::string path = (fs::path(out_dir) / (entry.name + ".sweep.csv")).string();
      write_text_file(path, sweep_csv(rep));
      res.files.push_back(path);
      res.reports.push_back(std::move(rep));
    } catch (const Error& e) {
      res.failures.push_back(entry.name + ": " + e.what());
    }
  }
  std::ostringstream os;
  if (!res.reports.empty()) {
    os << render_report(res.reports, ReportFormat::Text);
    const std::string path = (fs::path(out_dir) / "report.csv").string();
    write_text_file(path, render_report(res.reports, ReportFormat::Csv));
    res.files.push_back(path);
  }
  if (!res.failures.empty()) {
    os << "failed datasets:\n";
    for (const auto& f : res.failures) os << "  " << f << '\n';
  }
  res.text = os.str();
  return res;
}

}  // namespace icx
