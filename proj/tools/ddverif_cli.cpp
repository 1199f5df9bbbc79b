// SPDX-License-Identifier: Apache-2.0
//
// Thin command-line shell over the ddverif shared library. All numerics live
// behind the C API; this file only shuffles configuration and output.
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ddverif.h"

namespace {

int fail(int code) {
  std::fprintf(stderr, "error: %s\n", ddv_last_error());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Substructured elasticity solvers with parallel error estimation"};
  app.require_subcommand(1);

  // run
  auto* run = app.add_subcommand("run", "Run the study matrix and write reports");
  std::string config_path, out_dir;
  std::vector<int> ms, nsds, map_iters;
  std::vector<std::string> methods;
  double tol = -1.0;
  int every = -1, m_ref = -1;
  run->add_option("--config", config_path, "JSON configuration file");
  run->add_option("--m", ms, "Mesh refinements (elements per unit side)");
  run->add_option("--nsd", nsds, "Subdomain counts");
  run->add_option("--method", methods, "Solvers: bdd, feti, monolithic");
  run->add_option("--tol", tol, "Relative residual tolerance");
  run->add_option("--out", out_dir, "Output directory");
  run->add_option("--estimate-every", every, "Iterations between estimates");
  run->add_option("--m-ref", m_ref, "Reference refinement for the true error (0: off)");
  run->add_option("--map-iteration", map_iters, "Extra element-map dump iterations");

  // compare
  auto* compare = app.add_subcommand("compare", "Summarize a produced table1.csv");
  std::string table_path;
  compare->add_option("table", table_path, "Path to table1.csv")->required();

  // mesh
  auto* mesh = app.add_subcommand("mesh", "Export the test geometry as CSV");
  int mesh_m = 8;
  double mesh_L = 1.0;
  std::string mesh_out = "out";
  mesh->add_option("--m", mesh_m, "Elements per unit side");
  mesh->add_option("--L", mesh_L, "Characteristic length");
  mesh->add_option("--out", mesh_out, "Output directory");

  CLI11_PARSE(app, argc, argv);

  if (run->parsed()) {
    nlohmann::json cfg = nlohmann::json::object();
    if (!config_path.empty()) {
      std::ifstream f(config_path);
      if (!f) {
        std::fprintf(stderr, "error: cannot read %s\n", config_path.c_str());
        return DDV_ERR_CONFIG;
      }
      try {
        f >> cfg;
      } catch (const nlohmann::json::exception& e) {
        std::fprintf(stderr, "error: %s: %s\n", config_path.c_str(), e.what());
        return DDV_ERR_CONFIG;
      }
    }
    if (!ms.empty()) cfg["m"] = ms;
    if (!nsds.empty()) cfg["nsd"] = nsds;
    if (!methods.empty()) cfg["methods"] = methods;
    if (tol > 0.0) cfg["tol"] = tol;
    if (!out_dir.empty()) cfg["out"] = out_dir;
    if (every > 0) cfg["estimate_every"] = every;
    if (m_ref >= 0) cfg["m_ref"] = m_ref;
    if (!map_iters.empty()) cfg["map_iterations"] = map_iters;

    ddv_experiment* exp = nullptr;
    int rc = ddv_experiment_create(cfg.dump().c_str(), &exp);
    if (rc != DDV_OK) return fail(rc);
    rc = ddv_experiment_run(exp);
    if (rc != DDV_OK) {
      ddv_experiment_destroy(exp);
      return fail(rc);
    }
    std::printf("wrote %s\n", ddv_experiment_table_path(exp));
    ddv_experiment_destroy(exp);
    return 0;
  }

  if (compare->parsed()) {
    char* summary = nullptr;
    const int rc = ddv_compare_reports(table_path.c_str(), &summary);
    if (rc != DDV_OK) return fail(rc);
    std::fputs(summary, stdout);
    ddv_string_free(summary);
    return 0;
  }

  if (mesh->parsed()) {
    const int rc = ddv_mesh_export(mesh_m, mesh_L, mesh_out.c_str());
    if (rc != DDV_OK) return fail(rc);
    std::printf("wrote %s/nodes.csv and %s/elems.csv\n", mesh_out.c_str(), mesh_out.c_str());
    return 0;
  }
  return 0;
}
