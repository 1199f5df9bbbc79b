// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "ddverif.h"

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("version string is present") {
  CHECK(std::string(ddv_version()).find("ddverif") != std::string::npos);
}

TEST_CASE("invalid configurations return the configuration error code") {
  ddv_experiment* exp = reinterpret_cast<ddv_experiment*>(0x1);
  CHECK(ddv_experiment_create("not json", &exp) == DDV_ERR_CONFIG);
  CHECK(exp == nullptr);
  CHECK(std::string(ddv_last_error()).find("JSON") != std::string::npos);

  CHECK(ddv_experiment_create(R"({"m": [-3]})", &exp) == DDV_ERR_CONFIG);
  CHECK(ddv_experiment_create_from_file("/nonexistent.json", &exp) == DDV_ERR_CONFIG);
  CHECK(ddv_experiment_create(nullptr, &exp) == DDV_ERR_CONFIG);
  CHECK(ddv_experiment_run(nullptr) == DDV_ERR_CONFIG);
}

TEST_CASE("a full run through the C interface succeeds") {
  const fs::path dir = scratch_dir("ddv_capi_run");
  const std::string cfg = std::string(R"({"m": 2, "nsd": 2, "method": ["bdd"], "m_ref": 0,)") +
                          R"( "out": ")" + dir.string() + R"("})";
  ddv_experiment* exp = nullptr;
  REQUIRE(ddv_experiment_create(cfg.c_str(), &exp) == DDV_OK);
  REQUIRE(exp != nullptr);
  CHECK(std::string(ddv_experiment_table_path(exp)).empty());  // not run yet

  REQUIRE(ddv_experiment_run(exp) == DDV_OK);
  const std::string table = ddv_experiment_table_path(exp);
  CHECK(fs::exists(table));

  char* summary = nullptr;
  REQUIRE(ddv_compare_reports(table.c_str(), &summary) == DDV_OK);
  REQUIRE(summary != nullptr);
  CHECK(std::string(summary).find("max_deviation=") != std::string::npos);
  ddv_string_free(summary);

  ddv_experiment_destroy(exp);
  fs::remove_all(dir);
}

TEST_CASE("comparing a missing table reports a configuration error") {
  char* summary = nullptr;
  CHECK(ddv_compare_reports("/nonexistent/table1.csv", &summary) == DDV_ERR_CONFIG);
  CHECK(summary == nullptr);
  CHECK(ddv_compare_reports(nullptr, &summary) == DDV_ERR_CONFIG);
}

TEST_CASE("mesh export writes node and element tables") {
  const fs::path dir = scratch_dir("ddv_capi_mesh");
  REQUIRE(ddv_mesh_export(2, 1.0, dir.string().c_str()) == DDV_OK);
  CHECK(fs::exists(dir / "nodes.csv"));
  CHECK(fs::exists(dir / "elems.csv"));

  std::ifstream nodes(dir / "nodes.csv");
  int rows = -1;  // skip header
  for (std::string line; std::getline(nodes, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == 21);  // (2m+1)^2 - m^2 for m=2

  CHECK(ddv_mesh_export(0, 1.0, dir.string().c_str()) == DDV_ERR_CONFIG);
  CHECK(ddv_mesh_export(2, 1.0, nullptr) == DDV_ERR_CONFIG);
  fs::remove_all(dir);
}

TEST_CASE("destroying a null handle is safe") { ddv_experiment_destroy(nullptr); }
