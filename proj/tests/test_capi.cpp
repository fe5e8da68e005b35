// SPDX-FileCopyrightText: (c) 2026 The icxexit Authors
//
// SPDX-License-Identifier: Apache-2.0

// Exercises the shared library purely through its C header.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "icxexit.h"

namespace fs = std::filesystem;

namespace {

struct Owned {
  char* s = nullptr;
  ~Owned() { icx_string_free(s); }
  std::string str() const { return s ? s : ""; }
};

icx_config* tiny_config() {
  icx_config* c = nullptr;
  REQUIRE(icx_config_create(&c) == ICX_OK);
  const char* kv[][2] = {
      {"prior.n_samples_per_task", "24"}, {"prior.max_features", "3"},   {"prior.max_classes", "3"},
      {"model.d_model", "8"},             {"model.n_layers", "3"},       {"model.n_heads", "2"},
      {"model.d_ff", "16"},               {"train.backbone_steps", "4"}, {"train.backbone_batch_size", "2"},
      {"train.decoder_epochs", "1"},      {"train.decoder_steps_per_epoch", "3"},
      {"train.decoder_batch_size", "2"},  {"train.heldout_tasks", "4"},  {"eval.folds", "3"},
  };
  for (const auto& p : kv) REQUIRE(icx_config_set(c, p[0], p[1]) == ICX_OK);
  return c;
}

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("icx_capi_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

struct Progress {
  std::size_t backbone = 0, decoder = 0;
};

void on_progress(int stage, size_t, double loss, void* user) {
  auto* p = static_cast<Progress*>(user);
  CHECK(std::isfinite(loss));
  (stage == 0 ? p->backbone : p->decoder)++;
}

}  // namespace

TEST_CASE("argument validation and error reporting") {
  CHECK(std::string(icx_version()).size() > 0);
  CHECK(icx_config_create(nullptr) == ICX_ERR_INVALID_ARGUMENT);
  CHECK(std::string(icx_last_error()).find("null") != std::string::npos);

  icx_config* c = nullptr;
  REQUIRE(icx_config_create(&c) == ICX_OK);
  CHECK(icx_config_set(c, "prior.bogus", "1") == ICX_ERR_CONFIG);
  CHECK(std::string(icx_last_error()).find("prior.bogus") != std::string::npos);
  CHECK(icx_config_set(c, "model.d_model", "x") == ICX_OK);
  CHECK(icx_config_validate(c) == ICX_ERR_CONFIG);
  CHECK(icx_config_set(c, "model.d_model", "64") == ICX_OK);
  CHECK(icx_config_validate(c) == ICX_OK);
  CHECK(icx_config_load_file(c, "/nonexistent/x.cfg") != ICX_OK);
  CHECK(icx_config_set_seed(c, 7) == ICX_OK);
  Owned seed;
  REQUIRE(icx_config_get(c, "prior.seed", &seed.s) == ICX_OK);
  CHECK(seed.str() == "7");
  Owned text;
  REQUIRE(icx_config_render(c, &text.s) == ICX_OK);
  CHECK(text.str().find("model.d_model = 64") != std::string::npos);

  icx_model* m = nullptr;
  CHECK(icx_model_load("/nonexistent/model.icx", &m) == ICX_ERR_IO);
  CHECK(m == nullptr);
  icx_dataset* d = nullptr;
  CHECK(icx_dataset_load_csv("/nonexistent/data.csv", "y", &d) == ICX_ERR_INGESTION);
  CHECK(icx_infer(nullptr, nullptr, c, 0.0, 0, nullptr) == ICX_ERR_INVALID_ARGUMENT);
  icx_config_destroy(c);
}

TEST_CASE("train, save, load, sample, infer and sweep") {
  const fs::path dir = scratch("pipeline");
  icx_config* c = tiny_config();

  Progress progress;
  icx_model* model = nullptr;
  Owned summary;
  REQUIRE(icx_model_train(c, on_progress, &progress, &model, &summary.s) == ICX_OK);
  CHECK(progress.backbone == 4);
  CHECK(progress.decoder == 3);  // one report per shared bank step
  CHECK(icx_model_n_layers(model) == 3);
  CHECK(icx_model_max_features(model) == 3);
  CHECK(icx_model_max_classes(model) == 3);
  CHECK(summary.str().find("layer") != std::string::npos);

  const std::string ckpt = (dir / "model.icx").string();
  REQUIRE(icx_model_save(model, ckpt.c_str()) == ICX_OK);
  icx_model* loaded = nullptr;
  REQUIRE(icx_model_load(ckpt.c_str(), &loaded) == ICX_OK);
  const std::string ckpt2 = (dir / "again.icx").string();
  REQUIRE(icx_model_save(loaded, ckpt2.c_str()) == ICX_OK);
  CHECK(read(ckpt) == read(ckpt2));

  Owned prior_summary;
  REQUIRE(icx_prior_sample(c, 2, (dir / "prior").string().c_str(), &prior_summary.s) == ICX_OK);
  CHECK(fs::exists(dir / "prior" / "task_0.csv"));
  CHECK(fs::exists(dir / "prior" / "task_1.csv"));
  CHECK(!fs::exists(dir / "prior" / "task_2.csv"));
  CHECK(fs::exists(dir / "prior" / "run_config.txt"));

  icx_dataset* ds = nullptr;
  REQUIRE(icx_dataset_load_csv((dir / "prior" / "task_0.csv").string().c_str(), "label", &ds) == ICX_OK);
  CHECK(icx_dataset_rows(ds) == 24);
  CHECK(icx_dataset_dropped_rows(ds) == 0);
  CHECK(icx_dataset_features(ds) <= 3);

  icx_exit_report* full = nullptr;
  REQUIRE(icx_infer(loaded, ds, c, 0.0, 0, &full) == ICX_OK);
  CHECK(icx_exit_report_exit_layer(full) == 3);
  CHECK(icx_exit_report_decode_count(full) == 3);
  CHECK(icx_exit_report_trace_length(full) == 3);
  CHECK(icx_exit_report_elapsed(full) >= 0.0);
  const size_t n = icx_exit_report_n_test(full), k = icx_exit_report_n_classes(full);
  REQUIRE(n > 0);
  for (size_t r = 0; r < n; ++r) {
    double s = 0.0;
    for (size_t j = 0; j < k; ++j) s += icx_exit_report_probs(full)[r * k + j];
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
  CHECK(std::string(icx_exit_report_text(full)).find("exit layer") != std::string::npos);

  icx_exit_report* early = nullptr;
  REQUIRE(icx_infer(loaded, ds, c, 10.0, 0, &early) == ICX_OK);
  CHECK(icx_exit_report_exit_layer(early) == 1);

  icx_exit_report* trace = nullptr;
  REQUIRE(icx_infer(loaded, ds, c, 10.0, 1, &trace) == ICX_OK);
  CHECK(icx_exit_report_trace_length(trace) == 3);
  for (size_t j = 0; j < 3; ++j) CHECK(icx_exit_report_trace(trace)[j] == icx_exit_report_trace(full)[j]);
  CHECK(icx_exit_report_trace(early)[0] == icx_exit_report_trace(full)[0]);

  {
    std::ofstream man(dir / "manifest.csv");
    man << "name,path,label_column\ngood,prior/task_0.csv,label\nbad,prior/missing.csv,label\n";
  }
  const double taus[] = {0.1, 0.5};
  Owned report;
  CHECK(icx_sweep(loaded, (dir / "manifest.csv").string().c_str(), c, taus, 2, (dir / "sweep").string().c_str(),
                  &report.s) == ICX_ERR_PARTIAL);
  CHECK(fs::exists(dir / "sweep" / "good.sweep.csv"));
  CHECK(report.str().find("bad") != std::string::npos);
  {
    std::ofstream man(dir / "none.csv");
    man << "name,path,label_column\nbad,prior/missing.csv,label\n";
  }
  CHECK(icx_sweep(loaded, (dir / "none.csv").string().c_str(), c, taus, 2, (dir / "sweep2").string().c_str(),
                  nullptr) == ICX_ERR_INGESTION);

  icx_exit_report_destroy(full);
  icx_exit_report_destroy(early);
  icx_exit_report_destroy(trace);
  icx_dataset_destroy(ds);
  icx_model_destroy(model);
  icx_model_destroy(loaded);
  icx_config_destroy(c);
  fs::remove_all(dir);
}

TEST_CASE("capacity errors surface as status codes") {
  const fs::path dir = scratch("capacity");
  icx_config* c = tiny_config();
  icx_model* model = nullptr;
  REQUIRE(icx_model_train(c, nullptr, nullptr, &model, nullptr) == ICX_OK);
  {
    std::ofstream csv(dir / "wide.csv");
    csv << "a,b,c,d,e,y\n";
    for (int i = 0; i < 20; ++i) csv << i << ',' << i * 2 << ',' << i % 3 << ',' << i % 5 << ',' << i % 7 << ','
                                     << (i % 2 ? "p" : "q") << '\n';
  }
  icx_dataset* ds = nullptr;
  REQUIRE(icx_dataset_load_csv((dir / "wide.csv").string().c_str(), "y", &ds) == ICX_OK);
  icx_exit_report* r = nullptr;
  CHECK(icx_infer(model, ds, c, 0.0, 0, &r) == ICX_ERR_CAPACITY);
  CHECK(std::string(icx_last_error()).find("feature") != std::string::npos);
  icx_dataset_destroy(ds);
  icx_model_destroy(model);
  icx_config_destroy(c);
  fs::remove_all(dir);
}
