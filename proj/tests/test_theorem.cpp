#include <cmath>

#include "doctest.h"

#include "actscan/theorem.hpp"

using namespace actscan;

namespace {

DiscreteDataset three_point_regular() {
  DiscreteDataset ds;
  ds.points = {{0.1}, {0.5}, {0.9}};
  ds.conditions = {"cond-a", "cond-b"};
  ds.priors = {{0.6, 0.2, 0.2}, {0.5, 0.3, 0.2}};
  ds.alpha_regular = true;
  ds.alpha = 0.2;
  return ds;
}

}  // namespace

TEST_CASE("vanishing noise: shared nearest point sends both sides to zero") {
  auto ds = three_point_regular();
  auto report = verify_theorem1(ds, {1e-3}, {{0, 1}}, {1e-2}, 42);
  CHECK(report.rows.size() == 3);
  for (const auto& row : report.rows) {
    CHECK(row.satisfied);
    CHECK(row.lhs < 1e-6);
    CHECK(row.bound < 1e-3);
  }
}

TEST_CASE("identical conditions give lhs exactly zero") {
  auto ds = three_point_regular();
  auto report = verify_theorem1(ds, log_spaced(0.05, 10.0, 8), {{0, 0}}, {1e-2}, 42);
  for (const auto& row : report.rows) {
    CHECK(row.lhs == 0.0);
    CHECK(row.satisfied);
  }
}

TEST_CASE("alpha = 0.5 forces uniform priors; every grid point satisfied") {
  DiscreteDataset ds;
  ds.points = {{0.25}, {0.75}};
  ds.conditions = {"cond-a", "cond-b"};
  ds.priors = {{0.5, 0.5}, {0.5, 0.5}};
  ds.alpha_regular = true;
  ds.alpha = 0.5;
  auto report = verify_theorem1(ds, log_spaced(0.1, 10.0, 20), {{0, 1}}, {1e-2}, 42);
  CHECK(report.all_satisfied);
  for (const auto& row : report.rows) CHECK(row.satisfied);
}

TEST_CASE("regularity is a hard precondition") {
  auto ds = three_point_regular();
  ds.alpha_regular = false;
  CHECK_THROWS_AS(verify_theorem1(ds, {1.0}, {{0, 1}}, {1e-2}, 42),
                  RegularityViolationError);

  auto bad = three_point_regular();
  bad.alpha = 0.25;  // prior entry 0.2 now violates the declared bound
  CHECK_THROWS_AS(verify_theorem1(bad, {1.0}, {{0, 1}}, {1e-2}, 42),
                  RegularityViolationError);
}

TEST_CASE("critical sigma exists and shrinks with epsilon") {
  auto ds = three_point_regular();
  auto sigmas = log_spaced(0.02, 20.0, 20);
  auto report = verify_theorem1(ds, sigmas, {{0, 1}}, {1e-2, 1e-4}, 42);
  REQUIRE(report.criticals.size() == 2);
  CHECK(report.criticals[0].epsilon == 1e-2);
  CHECK(report.criticals[1].epsilon == 1e-4);
  CHECK(report.criticals[0].exists);
  CHECK(report.criticals[1].exists);
  CHECK(report.criticals[1].critical_sigma <= report.criticals[0].critical_sigma);
  // rows carry the first epsilon's critical sigma
  for (const auto& row : report.rows) {
    CHECK(row.critical_sigma == report.criticals[0].critical_sigma);
  }
}

TEST_CASE("prediction difference is monotone below the separation scale") {
  auto ds = three_point_regular();
  // minimum support separation is 0.4; probe well below it
  auto sigmas = log_spaced(0.005, 0.15, 10);
  auto report = verify_theorem1(ds, sigmas, {{0, 1}}, {1e-2}, 42);
  // per sigma, max lhs over sample points must not increase as sigma drops
  std::vector<double> lhs_max(sigmas.size(), 0.0);
  for (const auto& row : report.rows) {
    for (size_t i = 0; i < sigmas.size(); ++i) {
      if (row.sigma == doctest::Approx(sigmas[i]).epsilon(1e-12)) {
        lhs_max[i] = std::max(lhs_max[i], row.lhs);
      }
    }
  }
  for (size_t i = 0; i + 1 < lhs_max.size(); ++i) {
    CHECK(lhs_max[i] <= lhs_max[i + 1] + 1e-12);
  }
}

TEST_CASE("builtin audit grid covers the required shapes and alphas") {
  auto grid = builtin_theorem_grid();
  CHECK(grid.size() >= 3);
  bool a05 = false, a20 = false, a50 = false;
  int min_dim = 99, max_dim = 0, min_pts = 99, max_pts = 0;
  for (const auto& c : grid) {
    c.ds.validate();
    CHECK(c.ds.alpha_regular);
    if (c.ds.alpha == 0.05) a05 = true;
    if (c.ds.alpha == 0.20) a20 = true;
    if (c.ds.alpha == 0.50) a50 = true;
    min_dim = std::min(min_dim, c.ds.dim());
    max_dim = std::max(max_dim, c.ds.dim());
    min_pts = std::min(min_pts, c.ds.point_count());
    max_pts = std::max(max_pts, c.ds.point_count());
  }
  CHECK(a05);
  CHECK(a20);
  CHECK(a50);
  CHECK(min_dim == 1);
  CHECK(max_dim == 4);
  CHECK(min_pts == 2);
  CHECK(max_pts == 8);
}
