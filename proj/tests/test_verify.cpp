#include <doctest.h>

#include <cmath>

#include "cbridge/analytic.hpp"
#include "cbridge/verify.hpp"

using namespace cbridge;

TEST_CASE("convexity verdicts follow the sign of the characteristic") {
  const BridgeSpec spec{0, 20, 0.0, 1.0};
  const auto pois = convexity_check(IntensityModel::poisson(2.0), spec);
  CHECK(pois.claim == Shape::Linear);
  CHECK(pois.passed);
  CHECK(std::max(std::abs(pois.min_second_diff), std::abs(pois.max_second_diff)) <= 1e-8);

  const auto conv = convexity_check(IntensityModel::space_linear(3.0, 1.0), spec);
  CHECK(conv.claim == Shape::Convex);
  CHECK(conv.passed);
  CHECK(conv.min_second_diff > 0.0);

  const auto conc = convexity_check(IntensityModel::time_exponential(1.0, -5.0), spec);
  CHECK(conc.claim == Shape::Concave);
  CHECK(conc.passed);
  CHECK(conc.max_second_diff < 0.0);

  // Characteristic changing sign: the theorem says nothing.
  const auto mixed = convexity_check(IntensityModel::product(1.0, -2.0, 3.0), {0, 6, 0.0, 1.0});
  CHECK(mixed.bounds.inf < 0.0);
  CHECK(mixed.bounds.sup > 0.0);
  CHECK(mixed.claim == Shape::NoClaim);
  CHECK(mixed.passed);

  const auto json = conv.to_json();
  CHECK(json["check"] == "convexity");
  CHECK(json["verdict"] == "pass");
}

TEST_CASE("dominance is sharp on constant-characteristic families") {
  for (double lambda : {-5.0, -3.0, 0.0, 3.0, 5.0}) {
    const BridgeSpec spec{0, 5, 0.0, 1.0};
    const auto model = IntensityModel::time_exponential(1.0, lambda);
    for (auto dir : {Direction::Lower, Direction::Upper}) {
      const auto r = dominance_check(model, spec, lambda, dir, default_check_times(spec));
      CHECK(r.passed);
      CHECK(r.hypothesis_certified);
      for (const auto& row : r.rows) CHECK(std::abs(row.margin) <= 1e-6);
    }
  }
}

TEST_CASE("dominance on a strict instance and its falsification") {
  const auto model = IntensityModel::product(1.0, 3.0, 0.1);
  const BridgeSpec spec{0, 5, 0.0, 1.0};
  const auto r = dominance_check(model, spec, 3.0, Direction::Lower, default_check_times(spec));
  CHECK(r.passed);
  CHECK(r.worst_margin > 0.0);
  CHECK(r.certification() == "certified");
  CHECK(r.rows.size() == 19 * 5);

  const auto bad = dominance_check(model, spec, 4.0, Direction::Lower, default_check_times(spec));
  CHECK_FALSE(bad.passed);
  CHECK(bad.worst_margin < 0.0);
  CHECK(bad.certification() == "hypothesis fails");
  CHECK(bad.to_json()["verdict"] == "fail");
}

TEST_CASE("upper direction with a decreasing characteristic") {
  // Xi = -2 everywhere, so -1 is an upper bound and tails must be heavier.
  const auto model = IntensityModel::time_exponential(0.5, -2.0);
  const BridgeSpec spec{0, 6, 0.0, 1.0};
  const auto r = dominance_check(model, spec, -1.0, Direction::Upper, default_check_times(spec));
  CHECK(r.passed);
  CHECK(r.worst_margin > 0.0);
  // Same family read as a lower bound is wrong.
  CHECK_FALSE(dominance_check(model, spec, -1.0, Direction::Lower, default_check_times(spec)).passed);
}

TEST_CASE("single-jump dominance agrees with one-dimensional quadrature") {
  const auto model = IntensityModel::product(1.0, 3.0, 0.1);
  const BridgeSpec spec{0, 1, 0.0, 1.0};
  const auto pot = xi_tables(model, spec);
  const auto r = dominance_check(model, spec, 3.0, Direction::Lower, {0.25, 0.5, 0.75});
  CHECK(r.passed);
  for (const auto& row : r.rows) {
    CHECK(std::abs(row.computed - simplex_oracle_marginal(pot, row.t, 1)) <= 1e-6);
    CHECK(row.benchmark == doctest::Approx(pi_lambda(3.0, row.t)));
  }
}

TEST_CASE("laziness ordering") {
  const BridgeSpec spec{0, 5, 0.0, 1.0};
  const auto t1 = marginal_table(IntensityModel::time_exponential(1.0, -1.0), spec);
  const auto t2 = marginal_table(IntensityModel::time_exponential(1.0, 2.0), spec);
  for (double t : {0.2, 0.5, 0.8})
    for (long i = 1; i <= 5; ++i) CHECK(t2.tail_at(t, i) <= t1.tail_at(t, i));
}

TEST_CASE("mean bound") {
  const BridgeSpec spec{0, 20, 0.0, 1.0};
  std::vector<double> grid;
  for (int k = 0; k <= 20; ++k) grid.push_back(k / 20.0);
  const auto prod = mean_bound_check(IntensityModel::product(1.0, 3.0, 0.1), spec, 3.0, grid);
  CHECK(prod.passed);
  CHECK(prod.rows.front().mean == 0.0);
  CHECK(prod.rows.back().mean == 20.0);
  CHECK(prod.rows[10].slack > 0.0);

  const auto tight = mean_bound_check(IntensityModel::space_linear(3.0, 1.0), spec, 3.0, grid);
  CHECK(tight.passed);
  for (const auto& row : tight.rows) CHECK(std::abs(row.slack) <= 1e-6);
  CHECK(tight.rows[10].bound == doctest::Approx(3.6485104761271265).epsilon(1e-12));

  CHECK_FALSE(mean_bound_check(IntensityModel::product(1.0, 3.0, 0.1), spec, 4.0, grid).passed);
}

TEST_CASE("duality formula") {
  const BridgeSpec spec{0, 5, 0.0, 1.0};
  const auto catalog = duality_catalog();
  REQUIRE(catalog.size() == 5);
  for (const auto& pair : catalog) {
    CHECK(pair.u.u(0.0) == doctest::Approx(0.0).scale(1.0));
    CHECK(pair.u.u(1.0) == doctest::Approx(0.0).scale(1.0));
  }
  for (const auto& model : {IntensityModel::poisson(1.0), IntensityModel::product(1.0, 3.0, 0.1)}) {
    const auto paths = sample_bridge(model, spec, solve_h(model, spec), 50000, 17);
    for (const auto& pair : catalog) {
      const auto r = duality_on_paths(model, spec, pair, paths);
      CAPTURE(pair.phi.name);
      CHECK(r.passed);
      CHECK(r.lhs.stderr_ > 0.0);
    }
    const auto c = duality_on_paths(model, spec, {constant_functional(), catalog[0].u}, paths);
    CHECK(c.lhs.mean == 0.0);
    CHECK(c.passed);
  }
}

TEST_CASE("duality on an empty bridge and degenerate estimators") {
  const auto model = IntensityModel::poisson(1.0);
  const auto r = duality_check(model, {3, 3, 0.0, 1.0}, duality_catalog()[0], 100, 1);
  CHECK(r.lhs.mean == 0.0);
  CHECK(r.rhs.mean == 0.0);
  CHECK(r.passed);
  // A broken test function (u(1) != 0) on identical paths: both sides constant
  // but unequal.
  const TestFunction broken{"1", [](double) { return 1.0; }, [](double) { return 0.0; }};
  const TestFunctional linear{"T1", 1, [](State, const std::vector<double>& T) { return T[0]; },
                              [](State, const std::vector<double>&) { return std::vector<double>{1.0}; }};
  const std::vector<PathSample> same(10, PathSample{0, {0.5}});
  try {
    duality_on_paths(model, {0, 1, 0.0, 1.0}, {linear, broken}, same);
    FAIL("expected DegenerateVariance");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DegenerateVariance);
  }
}

TEST_CASE("sup distance") {
  const PathSample p{0, {0.25, 0.5, 0.75}};
  CHECK(sup_distance(p, 3, 0.0) == doctest::Approx(0.25));
  const PathSample exact{0, {1.0 / 6, 0.5, 5.0 / 6}};
  CHECK(sup_distance(exact, 3, 0.0) == doctest::Approx(1.0 / 6));
  CHECK(quantile({3, 1, 2}, 0.5) == 2.0);
  CHECK(quantile({1, 2, 3, 4}, 0.9) == doctest::Approx(3.7));
}

TEST_CASE("law of large numbers") {
  const auto pois = lln_experiment(IntensityModel::poisson(1.0), 0.0, {50, 200, 800}, 200, 11);
  CHECK(pois.sampler == "constant");
  for (const auto& row : pois.rows) CHECK(std::abs(row.median - 0.83 / std::sqrt(row.N)) <= 0.15 * 0.83 / std::sqrt(row.N));
  CHECK(pois.medians_non_increasing);

  const auto thin = lln_experiment(IntensityModel::product(1.0, 1.0, 0.05), 1.0, {5, 40}, 200, 3);
  CHECK(thin.sampler == "thinning");
  CHECK(thin.rows.size() == 2);
  CHECK(thin.rows[1].median < thin.rows[0].median);

  try {
    lln_experiment(IntensityModel::poisson(1.0), 0.0, {1000000}, 100, 1);
    FAIL("expected ResourceCap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ResourceCap);
  }
}
