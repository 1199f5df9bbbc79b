// SPDX-License-Identifier: Apache-2.0
#include "ddverif.h"

#include <cstdlib>
#include <cstring>
#include <functional>
#include <string>

#include "core/experiment.hpp"

namespace {

thread_local std::string g_last_error;

int guard(const std::function<void()>& body) {
  try {
    body();
    return DDV_OK;
  } catch (const ddv::ConfigError& e) {
    g_last_error = e.what();
    return DDV_ERR_CONFIG;
  } catch (const ddv::NonConvergence& e) {
    g_last_error = e.what();
    return DDV_ERR_NO_CONVERGENCE;
  } catch (const ddv::AdmissibilityError& e) {
    g_last_error = e.what();
    return DDV_ERR_ADMISSIBILITY;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return DDV_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown failure";
    return DDV_ERR_INTERNAL;
  }
}

}  // namespace

struct ddv_experiment {
  ddv::ExperimentConfig config;
  std::string table_path;
};

extern "C" {

int ddv_experiment_create(const char* json_text, ddv_experiment** out) {
  if (!json_text || !out) {
    g_last_error = "null argument";
    return DDV_ERR_CONFIG;
  }
  *out = nullptr;
  return guard([&] {
    auto* handle = new ddv_experiment{ddv::config_from_json_text(json_text), {}};
    *out = handle;
  });
}

int ddv_experiment_create_from_file(const char* path, ddv_experiment** out) {
  if (!path || !out) {
    g_last_error = "null argument";
    return DDV_ERR_CONFIG;
  }
  *out = nullptr;
  return guard([&] {
    auto* handle = new ddv_experiment{ddv::config_from_json_file(path), {}};
    *out = handle;
  });
}

int ddv_experiment_run(ddv_experiment* exp) {
  if (!exp) {
    g_last_error = "null handle";
    return DDV_ERR_CONFIG;
  }
  return guard([&] {
    const ddv::ExperimentResult result = ddv::run_experiment(exp->config);
    exp->table_path = result.table_path;
  });
}

const char* ddv_experiment_table_path(const ddv_experiment* exp) {
  return exp ? exp->table_path.c_str() : "";
}

void ddv_experiment_destroy(ddv_experiment* exp) { delete exp; }

int ddv_compare_reports(const char* table_csv_path, char** out_summary) {
  if (!table_csv_path || !out_summary) {
    g_last_error = "null argument";
    return DDV_ERR_CONFIG;
  }
  *out_summary = nullptr;
  return guard([&] {
    const std::string summary = ddv::compare_reports(table_csv_path);
    *out_summary = static_cast<char*>(std::malloc(summary.size() + 1));
    if (!*out_summary) throw std::bad_alloc();
    std::memcpy(*out_summary, summary.c_str(), summary.size() + 1);
  });
}

void ddv_string_free(char* s) { std::free(s); }

int ddv_mesh_export(int m, double L, const char* out_dir) {
  if (!out_dir) {
    g_last_error = "null argument";
    return DDV_ERR_CONFIG;
  }
  return guard([&] {
    if (m < 1 || !(L > 0.0)) throw ddv::ConfigError("invalid configuration: need m >= 1, L > 0");
    const ddv::Mesh mesh = ddv::build_gamma_mesh(m, L);
    ddv::export_mesh_csv(mesh, nullptr, out_dir);
  });
}

const char* ddv_last_error(void) { return g_last_error.c_str(); }

const char* ddv_version(void) { return "ddverif 1.0.0"; }

}  // extern "C"
