// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "helpers.hpp"

using ddv::Method;

TEST_CASE("global estimate is the root of the summed subdomain squares") {
  CHECK(ddv::ecr_global({}) == 0.0);
  CHECK(ddv::ecr_global({9.0, 16.0}) == doctest::Approx(5.0));
  CHECK(ddv::ecr_global({1.0}) == doctest::Approx(1.0));
}

TEST_CASE("per-element contributions add up to the subdomain totals") {
  const auto cfg = ddvtest::study_config();
  const auto p = ddv::make_pipeline(4, 4, cfg);
  const auto st = ddv::bdd_solve(p->subs, p->ops);
  const auto rep = ddv::estimate_at_iteration(*p->ctx, st);

  REQUIRE(static_cast<int>(rep.per_subdomain.size()) == p->ops.nsd);
  double sum2 = 0.0;
  for (double e : rep.per_subdomain) sum2 += e * e;
  CHECK(std::sqrt(sum2) == doctest::Approx(rep.e_cr_global).epsilon(1e-12));

  double elem2 = 0.0;
  for (const auto& [t, c2] : rep.per_element) elem2 += c2;
  CHECK(std::sqrt(elem2) == doctest::Approx(rep.e_cr_global).epsilon(1e-10));
  CHECK(static_cast<int>(rep.per_element.size()) == p->mesh.num_triangles());
}

TEST_CASE("estimates are method- and partition-insensitive at convergence") {
  const auto cfg = ddvtest::study_config();
  double seq = 0.0;
  {
    const auto p = ddv::make_pipeline(4, 1, cfg);
    seq = ddv::estimate_at_iteration(*p->ctx, ddv::bdd_solve(p->subs, p->ops)).e_cr_global;
    CHECK(seq > 0.0);
  }
  for (int nsd : {2, 4}) {
    for (Method method : {Method::BDD, Method::FETI}) {
      CAPTURE(nsd);
      CAPTURE(ddv::method_name(method));
      const auto p = ddv::make_pipeline(4, nsd, cfg);
      const auto st = ddv::interface_solve(method, p->subs, p->ops);
      const double para = ddv::estimate_at_iteration(*p->ctx, st).e_cr_global;
      CHECK(std::abs(para - seq) / seq < 0.05);
    }
  }
}

TEST_CASE("prolongation is exact for nested refinements") {
  const auto hooke = ddv::hooke_plane_stress(2000.0, 0.3);
  ddv::LoadSpec loads;
  loads.traction = Eigen::Vector2d(1.0, 1.0);
  const ddv::Mesh coarse = ddv::build_gamma_mesh(2, 1.0);
  const ddv::Mesh fine = ddv::build_gamma_mesh(6, 1.0);

  const Eigen::VectorXd u = ddv::solve_monolithic(ddv::assemble_system(coarse, hooke, loads));
  const Eigen::VectorXd uf = ddv::prolongate(coarse, fine, u);

  // Values at coincident nodes match, and the strain energy is preserved.
  for (int n = 0; n < coarse.num_nodes(); ++n) {
    int hit = -1;
    for (int k = 0; k < fine.num_nodes(); ++k)
      if ((fine.nodes[k] - coarse.nodes[n]).norm() < 1e-12) {
        hit = k;
        break;
      }
    REQUIRE(hit >= 0);
    CHECK(uf.segment<2>(2 * hit).isApprox(u.segment<2>(2 * n), 1e-11));
  }
  CHECK(ddv::strain_energy_sq(fine, uf, hooke) ==
        doctest::Approx(ddv::strain_energy_sq(coarse, u, hooke)).epsilon(1e-10));
}

TEST_CASE("true error vanishes against a same-resolution reference") {
  const auto hooke = ddv::hooke_plane_stress(2000.0, 0.3);
  ddv::LoadSpec loads;
  loads.traction = Eigen::Vector2d(1.0, 1.0);
  const ddv::Reference ref = ddv::build_reference(4, 1.0, hooke, loads);
  CHECK(ddv::true_error(ref.mesh, ref.u, ref, hooke) < 1e-10);

  // A coarser solve has a strictly positive error against the finer reference.
  const ddv::Mesh coarse = ddv::build_gamma_mesh(2, 1.0);
  const Eigen::VectorXd u = ddv::solve_monolithic(ddv::assemble_system(coarse, hooke, loads));
  CHECK(ddv::true_error(coarse, u, ref, hooke) > 1e-3);
}

TEST_CASE("estimation exchanges nothing beyond solver-reduced data") {
  const auto cfg = ddvtest::study_config();
  const auto p = ddv::make_pipeline(4, 4, cfg);
  const auto st = ddv::feti_solve(p->subs, p->ops);

  ddv::ReductionCounter::reset();
  const auto rep = ddv::estimate_at_iteration(*p->ctx, st);
  CHECK(ddv::ReductionCounter::count() == 0);
  CHECK(rep.e_cr_global > 0.0);
}

TEST_CASE("report export round-trips through JSON and CSV") {
  namespace fs = std::filesystem;
  const auto cfg = ddvtest::study_config();
  const auto p = ddv::make_pipeline(2, 2, cfg);
  const auto rep = ddv::estimate_at_iteration(*p->ctx, ddv::bdd_solve(p->subs, p->ops));

  const fs::path dir = fs::temp_directory_path() / "ddv_estimator_test";
  fs::create_directories(dir);
  const std::string jpath = (dir / "report.json").string();
  const std::string cpath = (dir / "map.csv").string();
  ddv::export_report_json(rep, jpath);
  ddv::export_element_map_csv(p->mesh, rep, cpath);

  nlohmann::json j;
  std::ifstream(jpath) >> j;
  CHECK(j["e_cr_global"].get<double>() == doctest::Approx(rep.e_cr_global));
  CHECK(j["method"].get<std::string>() == "bdd");

  std::ifstream csv(cpath);
  std::string header;
  std::getline(csv, header);
  CHECK(header == "elem_id,centroid_x,centroid_y,contribution");
  int rows = 0;
  for (std::string line; std::getline(csv, line);)
    if (!line.empty()) ++rows;
  CHECK(rows == p->mesh.num_triangles());
  fs::remove_all(dir);
}
