// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "core/experiment.hpp"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("configuration parses JSON with scalars or lists") {
  const auto cfg = ddv::config_from_json_text(
      R"({"m": 4, "nsd": [2, 4], "method": "feti", "tol": 1e-8, "out": "x", "m_ref": 8})");
  CHECK(cfg.m == std::vector<int>{4});
  CHECK(cfg.nsd == std::vector<int>{2, 4});
  CHECK(cfg.methods == std::vector<std::string>{"feti"});
  CHECK(cfg.tol == 1e-8);
  CHECK(cfg.out_dir == "x");
  CHECK(cfg.m_ref == 8);
}

TEST_CASE("configuration validation lists every problem") {
  try {
    (void)ddv::config_from_json_text(
        R"({"m": [0, 2], "nsd": [], "method": "magic", "tol": -1, "m_ref": 3})");
    FAIL("expected a configuration error");
  } catch (const ddv::ConfigError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("m must be >= 1") != std::string::npos);
    CHECK(msg.find("nsd list is empty") != std::string::npos);
    CHECK(msg.find("unknown method 'magic'") != std::string::npos);
    CHECK(msg.find("tol must be > 0") != std::string::npos);
    CHECK(msg.find("m_ref must be a multiple") != std::string::npos);
  }
  CHECK_THROWS_AS((void)ddv::config_from_json_text("not json"), ddv::ConfigError);
  CHECK_THROWS_AS((void)ddv::config_from_json_file("/nonexistent/cfg.json"), ddv::ConfigError);
}

TEST_CASE("a small study produces the expected artifacts") {
  const fs::path dir = scratch_dir("ddv_experiment_test");
  ddv::ExperimentConfig cfg;
  cfg.m = {2};
  cfg.nsd = {2};
  cfg.methods = {"bdd", "feti"};
  cfg.m_ref = 4;
  cfg.out_dir = dir.string();
  cfg.map_iterations = {1};

  const auto result = ddv::run_experiment(cfg);
  REQUIRE(result.cells.size() == 2);
  for (const auto& cell : result.cells) {
    CHECK(cell.e_para > 0.0);
    CHECK(cell.e_seq > 0.0);
    REQUIRE(cell.e_h.has_value());
    CHECK(*cell.e_h <= cell.e_para);  // guaranteed bound
    CHECK(std::abs(cell.e_para - cell.e_seq) / cell.e_seq < 0.1);
  }

  for (const std::string name :
       {"table1.csv", "convergence_bdd_2_2.csv", "convergence_feti_2_2.csv",
        "history_bdd_2_2.csv", "report_bdd_2_2.json", "element_map_feti_2_2_final.csv",
        "element_map_bdd_2_2_iter1.csv"})
    CHECK(fs::exists(dir / name));

  std::ifstream table(dir / "table1.csv");
  std::string header;
  std::getline(table, header);
  CHECK(header == "m,h,dofs,e_h,e_seq,e_para_bdd_2,e_para_feti_2");
  fs::remove_all(dir);
}

TEST_CASE("infeasible cells stay blank in the summary table") {
  const fs::path dir = scratch_dir("ddv_experiment_blank");
  ddv::ExperimentConfig cfg;
  cfg.m = {2};
  cfg.nsd = {2, 16};
  cfg.methods = {"bdd"};
  cfg.m_ref = 0;
  cfg.out_dir = dir.string();
  const auto result = ddv::run_experiment(cfg);
  CHECK(result.cells.size() == 1);  // nsd=16 needs more elements than m=2 has

  std::ifstream table(result.table_path);
  std::string header, row;
  std::getline(table, header);
  std::getline(table, row);
  CHECK(header == "m,h,dofs,e_h,e_seq,e_para_bdd_2,e_para_bdd_16");
  CHECK(row.back() == ',');  // trailing blank cell
  fs::remove_all(dir);
}

TEST_CASE("report comparison reproduces the reference study summary") {
  // A summary table with the published reference values for this benchmark:
  // effectivities climb from 2.43 to 2.98 and the largest parallel/sequential
  // deviation is 4.7% for the 32-subdomain split of the L/8 mesh.
  const fs::path dir = scratch_dir("ddv_compare_test");
  {
    std::ofstream f(dir / "table1.csv");
    f << "m,h,dofs,e_h,e_seq,e_para_feti_2,e_para_feti_4,e_para_feti_8,"
         "e_para_feti_16,e_para_feti_32\n";
    f << "2,0.5,146,0.2347,0.5712,0.5657,0.5768,0.5546,,\n";
    f << "4,0.25,514,0.1493,0.4035,0.4021,0.4007,0.4007,,\n";
    f << "8,0.125,1922,0.0937,0.2662,0.2648,0.2648,0.2676,0.2690,0.2787\n";
    f << "16,0.0625,7426,0.0597,0.1769,0.1747,0.1747,0.1747,0.1761,0.1789\n";
    f << "32,0.03125,29186,0.0386,0.1151,0.1151,0.1151,0.1165,0.1165,0.1178\n";
  }
  const std::string summary = ddv::compare_reports((dir / "table1.csv").string());

  CHECK(summary.find("m=2 h=0.5 effectivity=2.43") != std::string::npos);
  CHECK(summary.find("m=4 h=0.25 effectivity=2.70") != std::string::npos);
  CHECK(summary.find("m=8 h=0.125 effectivity=2.84") != std::string::npos);
  CHECK(summary.find("m=16 h=0.0625 effectivity=2.96") != std::string::npos);
  CHECK(summary.find("m=32 h=0.03125 effectivity=2.98") != std::string::npos);
  CHECK(summary.find("m=8 h=0.125 effectivity=2.84 max_deviation=4.7% (e_para_feti_32)") !=
        std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("report comparison finds the stagnation iteration") {
  const fs::path dir = scratch_dir("ddv_stagnation_test");
  {
    std::ofstream f(dir / "table1.csv");
    f << "m,h,dofs,e_h,e_seq,e_para_bdd_2\n2,0.5,146,0.2,0.5,0.5\n";
  }
  {
    std::ofstream f(dir / "convergence_bdd_2_2.csv");
    f << "iteration,residual,e_para\n";
    f << "0,1.0,\n1,0.5,0.62\n2,0.1,0.502\n3,0.01,0.5001\n4,1e-7,0.5\n";
  }
  const std::string summary = ddv::compare_reports((dir / "table1.csv").string());
  CHECK(summary.find("stagnation convergence_bdd_2_2.csv: 2") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("comparison of a missing table is a configuration error") {
  CHECK_THROWS_AS((void)ddv::compare_reports("/nonexistent/table1.csv"), ddv::ConfigError);
}
