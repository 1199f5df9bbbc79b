// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "core/estimator.hpp"

namespace ddv {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::vector<int> m = {2, 4, 8, 16, 32};
  std::vector<int> nsd = {2, 4, 8, 16, 32};
  std::vector<std::string> methods = {"bdd", "feti"};  // also: "monolithic"
  double tol = 1e-6;
  int estimate_every = 1;
  std::string out_dir = "out";
  double E = 2000.0;  // MPa
  double nu = 0.3;
  double traction_x = 1.0, traction_y = 1.0;  // MPa, on the loaded side
  double L = 1.0;                             // mm
  int m_ref = 128;  // reference refinement for the true error; 0 disables
  std::vector<int> map_iterations;  // extra element-map dumps

  void validate() const;  // throws ConfigError listing all problems
};

ExperimentConfig config_from_json_file(const std::string& path);
ExperimentConfig config_from_json_text(const std::string& text);

/// Everything needed to run and estimate one (m, nsd) cell. Heap-allocated
/// because the recovery context refers into the other members.
struct Pipeline {
  Mesh mesh;
  Partition partition;
  HookeTensor hooke;
  LoadSpec loads;
  std::vector<Subdomain> subs;
  AssemblyOperators ops;
  std::unique_ptr<RecoveryContext> ctx;
};

std::unique_ptr<Pipeline> make_pipeline(int m, int nsd, const ExperimentConfig& cfg);

struct CellResult {
  int m = 0, nsd = 0;
  std::string method;
  int iterations = 0;
  double residual = 0.0;
  double e_para = 0.0;
  std::optional<double> e_h;
  double e_seq = 0.0;
};

struct ExperimentResult {
  std::vector<CellResult> cells;
  std::string table_path;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// Summary of a table1-shaped CSV: effectivities, parallel/sequential
/// deviations, and (when convergence files sit next to the table) the
/// stagnation iteration per run.
std::string compare_reports(const std::string& table_csv_path);

}  // namespace ddv
