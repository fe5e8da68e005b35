// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

#include "icxexit.h"

#include <cstring>
#include <new>
#include <string>

#include "icx/error.hpp"
#include "icx/pipeline.hpp"

struct icx_config {
  icx::RunConfig config;
};

struct icx_model {
  icx::Model model;
};

struct icx_dataset {
  icx::TabularDataset dataset;
};

struct icx_exit_report {
  icx::InferResult result;
};

namespace {

thread_local std::string g_last_error;

icx_status to_status(icx::ErrorKind kind) {
  switch (kind) {
    case icx::ErrorKind::Config: return ICX_ERR_CONFIG;
    case icx::ErrorKind::Ingestion: return ICX_ERR_INGESTION;
    case icx::ErrorKind::Numeric: return ICX_ERR_NUMERIC;
    case icx::ErrorKind::Dimension: return ICX_ERR_DIMENSION;
    case icx::ErrorKind::Contract: return ICX_ERR_CONTRACT;
    case icx::ErrorKind::Capacity: return ICX_ERR_CAPACITY;
    case icx::ErrorKind::Io: return ICX_ERR_IO;
  }
  return ICX_ERR_INTERNAL;
}

template <class Fn>
icx_status guarded(Fn&& fn) {
  g_last_error.clear();
  try {
    return fn();
  } catch (const icx::Error& e) {
    g_last_error = e.what();
    return to_status(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return ICX_ERR_INTERNAL;
}

icx_status invalid(const char* what) {
  g_last_error = what;
  return ICX_ERR_INVALID_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put_string(char** out, const std::string& s) {
  if (out) *out = dup_string(s);
}

}  // namespace

extern "C" {

const char* icx_last_error(void) { return g_last_error.c_str(); }
const char* icx_version(void) { return "1.0.0"; }
void icx_string_free(char* s) { delete[] s; }

icx_status icx_config_create(icx_config** out) {
  if (!out) return invalid("icx_config_create: null output");
  return guarded([&] {
    *out = new icx_config();
    return ICX_OK;
  });
}

void icx_config_destroy(icx_config* config) { delete config; }

icx_status icx_config_load_file(icx_config* config, const char* path) {
  if (!config || !path) return invalid("icx_config_load_file: null argument");
  return guarded([&] {
    config->config.load_file(path);
    return ICX_OK;
  });
}

icx_status icx_config_set(icx_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("icx_config_set: null argument");
  return guarded([&] {
    config->config.set(key, value);
    return ICX_OK;
  });
}

icx_status icx_config_set_seed(icx_config* config, uint64_t seed) {
  if (!config) return invalid("icx_config_set_seed: null config");
  return guarded([&] {
    config->config.set_seed(seed);
    return ICX_OK;
  });
}

icx_status icx_config_get(const icx_config* config, const char* key, char** out) {
  if (!config || !key || !out) return invalid("icx_config_get: null argument");
  return guarded([&] {
    put_string(out, config->config.get(key));
    return ICX_OK;
  });
}

icx_status icx_config_validate(const icx_config* config) {
  if (!config) return invalid("icx_config_validate: null config");
  return guarded([&] {
    config->config.validate();
    return ICX_OK;
  });
}

icx_status icx_config_render(const icx_config* config, char** out) {
  if (!config || !out) return invalid("icx_config_render: null argument");
  return guarded([&] {
    put_string(out, config->config.to_text());
    return ICX_OK;
  });
}

icx_status icx_config_write(const icx_config* config, const char* out_dir) {
  if (!config || !out_dir) return invalid("icx_config_write: null argument");
  return guarded([&] {
    icx::write_run_config(config->config, out_dir);
    return ICX_OK;
  });
}

icx_status icx_prior_sample(const icx_config* config, size_t count, const char* out_dir, char** summary) {
  if (!config || !out_dir) return invalid("icx_prior_sample: null argument");
  return guarded([&] {
    const auto res = icx::run_prior_sample(config->config, count, out_dir);
    put_string(summary, res.summary);
    return ICX_OK;
  });
}

icx_status icx_model_train(const icx_config* config, icx_progress_fn progress, void* user, icx_model** out,
                           char** summary) {
  if (!config || !out) return invalid("icx_model_train: null argument");
  return guarded([&] {
    icx::ProgressFn backbone_cb, decoder_cb;
    if (progress) {
      backbone_cb = [=](std::size_t step, double loss) { progress(0, step, loss, user); };
      decoder_cb = [=](std::size_t step, double loss) { progress(1, step, loss, user); };
    }
    auto res = icx::run_train(config->config, backbone_cb, decoder_cb);
    put_string(summary, res.summary);
    *out = new icx_model{std::move(res.model)};
    return ICX_OK;
  });
}

icx_status icx_model_load(const char* path, icx_model** out) {
  if (!path || !out) return invalid("icx_model_load: null argument");
  return guarded([&] {
    *out = new icx_model{icx::load_model(path)};
    return ICX_OK;
  });
}

icx_status icx_model_save(const icx_model* model, const char* path) {
  if (!model || !path) return invalid("icx_model_save: null argument");
  return guarded([&] {
    icx::save_model(model->model, path);
    return ICX_OK;
  });
}

void icx_model_destroy(icx_model* model) { delete model; }
size_t icx_model_n_layers(const icx_model* model) { return model ? model->model.config().n_layers : 0; }
size_t icx_model_max_features(const icx_model* model) { return model ? model->model.config().max_features : 0; }
size_t icx_model_max_classes(const icx_model* model) { return model ? model->model.config().max_classes : 0; }

icx_status icx_dataset_load_csv(const char* path, const char* label_column, icx_dataset** out) {
  if (!path || !label_column || !out) return invalid("icx_dataset_load_csv: null argument");
  return guarded([&] {
    *out = new icx_dataset{icx::load_csv(path, label_column)};
    return ICX_OK;
  });
}

void icx_dataset_destroy(icx_dataset* dataset) { delete dataset; }
size_t icx_dataset_rows(const icx_dataset* d) { return d ? d->dataset.size() : 0; }
size_t icx_dataset_features(const icx_dataset* d) { return d ? d->dataset.n_features() : 0; }
size_t icx_dataset_classes(const icx_dataset* d) { return d ? d->dataset.n_classes : 0; }
size_t icx_dataset_dropped_rows(const icx_dataset* d) { return d ? d->dataset.dropped_rows : 0; }

icx_status icx_infer(const icx_model* model, const icx_dataset* dataset, const icx_config* config, double tau,
                     int trace_only, icx_exit_report** out) {
  if (!model || !dataset || !config || !out) return invalid("icx_infer: null argument");
  return guarded([&] {
    *out = new icx_exit_report{icx::run_infer(model->model, dataset->dataset, config->config, tau, trace_only != 0)};
    return ICX_OK;
  });
}

void icx_exit_report_destroy(icx_exit_report* r) { delete r; }
size_t icx_exit_report_exit_layer(const icx_exit_report* r) { return r ? r->result.report.exit_layer : 0; }
size_t icx_exit_report_decode_count(const icx_exit_report* r) { return r ? r->result.report.decode_count : 0; }
double icx_exit_report_elapsed(const icx_exit_report* r) { return r ? r->result.report.elapsed_s : 0.0; }
size_t icx_exit_report_n_test(const icx_exit_report* r) { return r ? r->result.report.probs.rows() : 0; }
size_t icx_exit_report_n_classes(const icx_exit_report* r) { return r ? r->result.report.probs.cols() : 0; }
const double* icx_exit_report_probs(const icx_exit_report* r) {
  return r ? r->result.report.probs.data().data() : nullptr;
}
size_t icx_exit_report_trace_length(const icx_exit_report* r) {
  return r ? r->result.report.entropy_trace.size() : 0;
}
const double* icx_exit_report_trace(const icx_exit_report* r) {
  return r ? r->result.report.entropy_trace.data() : nullptr;
}
const char* icx_exit_report_text(const icx_exit_report* r) { return r ? r->result.text.c_str() : ""; }

icx_status icx_sweep(const icx_model* model, const char* manifest, const icx_config* config, const double* taus,
                     size_t n_taus, const char* out_dir, char** report) {
  if (!model || !manifest || !config || !out_dir) return invalid("icx_sweep: null argument");
  if (n_taus > 0 && !taus) return invalid("icx_sweep: null thresholds");
  return guarded([&] {
    std::vector<double> t = n_taus ? std::vector<double>(taus, taus + n_taus) : config->config.taus();
    auto res = icx::run_sweep(model->model, manifest, config->config, t, out_dir);
    put_string(report, res.text);
    if (!res.failures.empty()) {
      g_last_error = res.failures.front();
      return res.reports.empty() ? ICX_ERR_INGESTION : ICX_ERR_PARTIAL;
    }
    return ICX_OK;
  });
}

}  // extern "C"
