// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// icx: prior sampling, training, early-exit inference and threshold sweeps.
// Talks to the library only through the C interface.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icxexit.h"

namespace {

int exit_code(icx_status s) {
  switch (s) {
    case ICX_OK: return 0;
    case ICX_ERR_CONFIG:
    case ICX_ERR_INVALID_ARGUMENT: return 2;
    case ICX_ERR_INGESTION:
    case ICX_ERR_DIMENSION:
    case ICX_ERR_CAPACITY:
    case ICX_ERR_IO: return 3;
    case ICX_ERR_PARTIAL: return 5;
    default: return 4;
  }
}

int fail(icx_status s, const std::string& context) {
  std::fprintf(stderr, "icx: %s: %s\n", context.c_str(), icx_last_error());
  return exit_code(s);
}

struct Owned {
  char* s = nullptr;
  ~Owned() { icx_string_free(s); }
};

struct ConfigHandle {
  icx_config* c = nullptr;
  ~ConfigHandle() { icx_config_destroy(c); }
};

struct ModelHandle {
  icx_model* m = nullptr;
  ~ModelHandle() { icx_model_destroy(m); }
};

struct DatasetHandle {
  icx_dataset* d = nullptr;
  ~DatasetHandle() { icx_dataset_destroy(d); }
};

struct ReportHandle {
  icx_exit_report* r = nullptr;
  ~ReportHandle() { icx_exit_report_destroy(r); }
};

std::string config_value(const icx_config* c, const char* key) {
  Owned v;
  if (icx_config_get(c, key, &v.s) != ICX_OK) return {};
  return v.s;
}

void print_progress(int stage, size_t step, double loss, void*) {
  std::fprintf(stderr, "[%s] step %zu loss %.5f\n", stage == 0 ? "backbone" : "decoders", step, loss);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Entropy-gated early exit for in-context tabular classifiers"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  app.add_option("--config", config_path, "Configuration file (key = value lines)");
  app.add_option("--seed", seed, "Seed applied to prior, model, eval and infer");
  app.add_option("--set", overrides, "Override a configuration key (key=value); repeatable");

  auto* prior_cmd = app.add_subcommand("prior-sample", "Write synthetic prior tasks as CSV files");
  std::size_t count = 1;
  std::string prior_out = "prior_tasks";
  prior_cmd->add_option("--count", count, "Number of tasks")->check(CLI::PositiveNumber);
  prior_cmd->add_option("--out", prior_out, "Output directory");

  auto* train_cmd = app.add_subcommand("train", "Train the backbone and the decoder bank");
  std::string train_out;
  bool quiet = false;
  train_cmd->add_option("--out", train_out, "Checkpoint path (default: paths.checkpoint)");
  train_cmd->add_flag("--quiet", quiet, "Suppress progress lines");

  auto* infer_cmd = app.add_subcommand("infer", "Early-exit prediction on one dataset");
  std::string infer_ckpt, dataset_path, label_column;
  std::vector<double> infer_taus;
  bool trace_only = false;
  infer_cmd->add_option("--checkpoint", infer_ckpt, "Checkpoint path (default: paths.checkpoint)");
  infer_cmd->add_option("--dataset", dataset_path, "Headered CSV")->required();
  infer_cmd->add_option("--label-column", label_column, "Label column name")->required();
  infer_cmd->add_option("--tau", infer_taus, "Entropy threshold in nats (default: exit.tau)");
  infer_cmd->add_flag("--trace-only", trace_only, "Run every layer and print only the entropy trace");

  auto* sweep_cmd = app.add_subcommand("sweep", "Cross-validated threshold sweep over a manifest");
  std::string sweep_ckpt, manifest, sweep_out;
  std::vector<double> sweep_taus;
  std::optional<std::size_t> folds;
  bool serial_timing = false;
  sweep_cmd->add_option("--checkpoint", sweep_ckpt, "Checkpoint path (default: paths.checkpoint)");
  sweep_cmd->add_option("--manifest", manifest, "Manifest CSV: name,path,label_column");
  sweep_cmd->add_option("--tau", sweep_taus, "Threshold; repeatable (default: eval.taus)");
  sweep_cmd->add_option("--folds", folds, "Cross-validation folds (default: eval.folds)");
  sweep_cmd->add_option("--out", sweep_out, "Output directory (default: paths.out_dir)");
  sweep_cmd->add_flag("--serial-timing", serial_timing, "Serial execution for timing (always the case)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  // Resolve the configuration completely before any stage runs.
  ConfigHandle cfg;
  if (icx_status s = icx_config_create(&cfg.c); s != ICX_OK) return fail(s, "config");
  if (!config_path.empty()) {
    if (icx_status s = icx_config_load_file(cfg.c, config_path.c_str()); s != ICX_OK) return fail(s, "config");
  }
  if (seed) {
    if (icx_status s = icx_config_set_seed(cfg.c, *seed); s != ICX_OK) return fail(s, "config");
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "icx: --set expects key=value, got '%s'\n", kv.c_str());
      return 2;
    }
    const std::string key = kv.substr(0, eq), value = kv.substr(eq + 1);
    if (icx_status s = icx_config_set(cfg.c, key.c_str(), value.c_str()); s != ICX_OK) return fail(s, "config");
  }
  if (folds) {
    const std::string v = std::to_string(*folds);
    if (icx_status s = icx_config_set(cfg.c, "eval.folds", v.c_str()); s != ICX_OK) return fail(s, "config");
  }
  if (infer_cmd->parsed() && infer_taus.size() == 1) {
    const std::string v = std::to_string(infer_taus.front());
    if (icx_status s = icx_config_set(cfg.c, "exit.tau", v.c_str()); s != ICX_OK) return fail(s, "config");
  }
  if (icx_status s = icx_config_validate(cfg.c); s != ICX_OK) return fail(s, "config");
  if (infer_cmd->parsed() && infer_taus.size() > 1) {
    std::fprintf(stderr, "icx: infer accepts a single --tau\n");
    return 2;
  }

  if (prior_cmd->parsed()) {
    Owned summary;
    if (icx_status s = icx_prior_sample(cfg.c, count, prior_out.c_str(), &summary.s); s != ICX_OK) {
      return fail(s, "prior-sample");
    }
    std::fputs(summary.s, stdout);
    return 0;
  }

  if (train_cmd->parsed()) {
    const std::string out = train_out.empty() ? config_value(cfg.c, "paths.checkpoint") : train_out;
    ModelHandle model;
    Owned summary;
    if (icx_status s = icx_model_train(cfg.c, quiet ? nullptr : print_progress, nullptr, &model.m, &summary.s);
        s != ICX_OK) {
      return fail(s, "train");
    }
    const auto dir = std::filesystem::absolute(out).parent_path().string();
    if (icx_status s = icx_config_write(cfg.c, dir.c_str()); s != ICX_OK) return fail(s, "train");
    if (icx_status s = icx_model_save(model.m, out.c_str()); s != ICX_OK) return fail(s, "train");
    std::fputs(summary.s, stdout);
    std::printf("checkpoint written to %s\n", out.c_str());
    return 0;
  }

  const auto load_model = [&](const std::string& flag, ModelHandle& model) -> icx_status {
    const std::string path = flag.empty() ? config_value(cfg.c, "paths.checkpoint") : flag;
    return icx_model_load(path.c_str(), &model.m);
  };

  if (infer_cmd->parsed()) {
    ModelHandle model;
    if (icx_status s = load_model(infer_ckpt, model); s != ICX_OK) return fail(s, "infer");
    DatasetHandle ds;
    if (icx_status s = icx_dataset_load_csv(dataset_path.c_str(), label_column.c_str(), &ds.d); s != ICX_OK) {
      return fail(s, "infer");
    }
    const double tau = std::stod(config_value(cfg.c, "exit.tau"));
    ReportHandle rep;
    if (icx_status s = icx_infer(model.m, ds.d, cfg.c, tau, trace_only ? 1 : 0, &rep.r); s != ICX_OK) {
      return fail(s, "infer");
    }
    std::fputs(icx_exit_report_text(rep.r), stdout);
    return 0;
  }

  if (sweep_cmd->parsed()) {
    (void)serial_timing;  // the sweep is always serial
    const std::string man = manifest.empty() ? config_value(cfg.c, "paths.manifest") : manifest;
    if (man.empty()) {
      std::fprintf(stderr, "icx: sweep needs --manifest or paths.manifest\n");
      return 2;
    }
    const std::string out = sweep_out.empty() ? config_value(cfg.c, "paths.out_dir") : sweep_out;
    ModelHandle model;
    if (icx_status s = load_model(sweep_ckpt, model); s != ICX_OK) return fail(s, "sweep");
    Owned report;
    const icx_status s =
        icx_sweep(model.m, man.c_str(), cfg.c, sweep_taus.data(), sweep_taus.size(), out.c_str(), &report.s);
    if (report.s) std::fputs(report.s, stdout);
    if (s != ICX_OK) return fail(s, "sweep");
    return 0;
  }
  return 2;
}
