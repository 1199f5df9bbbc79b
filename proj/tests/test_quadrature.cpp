// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "core/quadrature.hpp"

namespace {

// Exact moment of x^a y^b over the reference triangle: a! b! / (a+b+2)!.
double tri_moment(int a, int b) {
  double num = 1.0;
  for (int k = 2; k <= a; ++k) num *= k;
  for (int k = 2; k <= b; ++k) num *= k;
  double den = 1.0;
  for (int k = 2; k <= a + b + 2; ++k) den *= k;
  return num / den;
}

}  // namespace

TEST_CASE("triangle rules integrate monomials exactly up to their degree") {
  for (int degree = 1; degree <= 12; ++degree) {
    const auto& rule = ddv::triangle_rule(degree);
    CHECK(rule.weights.sum() == doctest::Approx(0.5).epsilon(1e-13));
    for (int a = 0; a <= degree; ++a)
      for (int b = 0; a + b <= degree; ++b) {
        double val = 0.0;
        for (int q = 0; q < rule.size(); ++q)
          val += rule.weights[q] * std::pow(rule.points(0, q), a) *
                 std::pow(rule.points(1, q), b);
        CHECK(val == doctest::Approx(tri_moment(a, b)).epsilon(1e-12));
      }
  }
}

TEST_CASE("triangle rule points lie inside the reference triangle") {
  const auto& rule = ddv::triangle_rule(8);
  for (int q = 0; q < rule.size(); ++q) {
    CHECK(rule.points(0, q) >= 0.0);
    CHECK(rule.points(1, q) >= 0.0);
    CHECK(rule.points(0, q) + rule.points(1, q) <= 1.0 + 1e-14);
    CHECK(rule.weights[q] > 0.0);
  }
}

TEST_CASE("line rules integrate monomials exactly up to their degree") {
  for (int degree = 1; degree <= 12; ++degree) {
    const auto& rule = ddv::line_rule(degree);
    CHECK(rule.weights.sum() == doctest::Approx(1.0).epsilon(1e-13));
    for (int a = 0; a <= degree; ++a) {
      double val = 0.0;
      for (int q = 0; q < rule.size(); ++q)
        val += rule.weights[q] * std::pow(rule.points[q], a);
      CHECK(val == doctest::Approx(1.0 / (a + 1)).epsilon(1e-13));
    }
  }
}

TEST_CASE("rules are cached") {
  CHECK(&ddv::triangle_rule(8) == &ddv::triangle_rule(8));
  CHECK(&ddv::line_rule(10) == &ddv::line_rule(10));
}
