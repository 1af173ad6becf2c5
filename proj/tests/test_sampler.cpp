#include <doctest.h>

#include <cmath>

#include "cbridge/analytic.hpp"
#include "cbridge/sampler.hpp"

using namespace cbridge;

namespace {

double within_sigmas(double empirical, double p, double count) {
  const double se = std::sqrt(std::max(p * (1 - p), 1e-12) / count);
  return std::abs(empirical - p) / se;
}

double frequency(const std::vector<PathSample>& paths, double t, long i) {
  double hits = 0;
  for (const auto& p : paths) hits += p.state_at(t) - p.x0 >= i ? 1 : 0;
  return hits / static_cast<double>(paths.size());
}

std::vector<double> column(const std::vector<PathSample>& paths, std::size_t j) {
  std::vector<double> out;
  out.reserve(paths.size());
  for (const auto& p : paths) out.push_back(p.jump_times.at(j));
  return out;
}

}  // namespace

TEST_CASE("replica streams are reproducible and distinct") {
  auto a = replica_engine(5, 0);
  auto b = replica_engine(5, 0);
  auto c = replica_engine(5, 1);
  auto d = replica_engine(6, 0);
  const auto va = a();
  CHECK(va == b());
  CHECK(va != c());
  CHECK(va != d());
  for (int k = 0; k < 1000; ++k) {
    const double u = open_uniform(a);
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("path reconstruction") {
  const PathSample p{2, {0.1, 0.4, 0.4000001}};
  CHECK(p.state_at(0.0) == 2);
  CHECK(p.state_at(0.1) == 3);
  CHECK(p.state_at(0.5) == 5);
  CHECK(p.n() == 3);
}

TEST_CASE("xi tables") {
  const BridgeSpec spec{0, 3, 0.0, 1.0};
  const auto constant = xi_tables(IntensityModel::time_exponential(2.0, -1.5), spec);
  const auto pois = xi_tables(IntensityModel::poisson(3.0), spec);
  for (double t : {0.0, 0.123, 0.5, 0.99, 1.0}) {
    for (long j = 1; j <= 3; ++j) {
      CHECK(constant.xi(j, t) == doctest::Approx(-1.5 * t).epsilon(1e-12).scale(1.0));
      CHECK(pois.xi(j, t) == 0.0);
    }
  }
  const auto prod = xi_tables(IntensityModel::product(1.0, 3.0, 0.1), spec);
  for (int k = 0; k <= 40; ++k) {
    const double t = k / 40.0 + (k < 40 ? 0.00003 : 0.0);
    CHECK(std::abs(prod.xi(1, t) - (3 * t + 0.1 * std::expm1(3 * t) / 3)) <= 1e-8);
  }
  CHECK_THROWS_AS(prod.xi(4, 0.5), Error);
  const auto window = xi_tables(IntensityModel::space_linear(2.0, 1.0), {1, 3, 0.2, 0.6});
  CHECK(window.xi(1, 0.2) == 0.0);
  CHECK(window.xi(2, 0.6) == doctest::Approx(0.8));
}

TEST_CASE("unnormalised density") {
  const auto pois = xi_tables(IntensityModel::poisson(0.7), {0, 3, 0.0, 1.0});
  CHECK(density_unnormalized(pois, {0.2, 0.5, 0.9}) == doctest::Approx(1.0));
  const auto lam = xi_tables(IntensityModel::space_linear(2.5, 1.0), {0, 3, 0.0, 1.0});
  CHECK(density_unnormalized(lam, {0.2, 0.5, 0.9}) == doctest::Approx(std::exp(2.5 * 1.6)).epsilon(1e-12));
  const auto one = xi_tables(IntensityModel::time_exponential(1.0, 3.0), {0, 1, 0.0, 1.0});
  CHECK(density_unnormalized(one, {0.5}) == doctest::Approx(4.4816890703380645).epsilon(1e-12));
  try {
    density_unnormalized(lam, {0.5, 0.2, 0.9});
    FAIL("expected NotSorted");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotSorted);
  }
  CHECK_THROWS_AS(density_unnormalized(lam, {0.5, 0.5, 0.9}), Error);
  CHECK_THROWS_AS(density_unnormalized(lam, {0.5, 0.9}), Error);
}

TEST_CASE("simplex quadrature oracle") {
  const auto pois = xi_tables(IntensityModel::poisson(1.0), {0, 2, 0.0, 1.0});
  CHECK(simplex_oracle_marginal(pois, 0.5, 1) == doctest::Approx(0.75).epsilon(1e-10));
  const auto lam = xi_tables(IntensityModel::time_exponential(1.0, 3.0), {0, 3, 0.0, 1.0});
  CHECK(std::abs(simplex_oracle_marginal(lam, 0.5, 2) - 0.08769531102160366) <= 1e-6);
  const auto prod = xi_tables(IntensityModel::product(1.0, 3.0, 0.1), {0, 3, 0.0, 1.0});
  CHECK(simplex_oracle_marginal(prod, 0.5, 1) <= simplex_oracle_marginal(lam, 0.5, 1));
  CHECK(simplex_oracle_marginal(lam, 1.0, 3) == doctest::Approx(1.0));
  CHECK(simplex_oracle_marginal(lam, 0.0, 1) == 0.0);
  const auto big = xi_tables(IntensityModel::poisson(1.0), {0, 5, 0.0, 1.0});
  try {
    simplex_oracle_marginal(big, 0.5, 1);
    FAIL("expected OracleScale");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OracleScale);
  }
  CHECK_THROWS_AS(simplex_oracle_marginal(lam, 0.5, 4), Error);
}

TEST_CASE("constant-characteristic sampler") {
  const BridgeSpec spec{0, 5, 0.0, 1.0};
  const auto empty = sample_constant(3.0, {4, 4, 0.0, 1.0}, 10, 1);
  for (const auto& p : empty) CHECK(p.jump_times.empty());

  const auto uni = sample_constant(0.0, spec, 2000, 9);
  for (const auto& p : uni) {
    CHECK(std::is_sorted(p.jump_times.begin(), p.jump_times.end()));
    CHECK(p.jump_times.front() > 0.0);
    CHECK(p.jump_times.back() < 1.0);
  }

  const auto paths = sample_constant(3.0, spec, 100000, 2024);
  CHECK(within_sigmas(frequency(paths, 0.5, 1), 0.6347109751760405, 1e5) <= 3.0);

  // Order-statistic marginals of the tilted i.i.d. law.
  const auto grid = sample_constant(-2.0, spec, 20000, 77);
  for (double t : {0.2, 0.5, 0.8})
    for (long i = 1; i <= 5; ++i)
      CHECK(within_sigmas(frequency(grid, t, i), binomial_tail({5, pi_lambda(-2.0, t)}, i), 2e4) <= 4.0);

  // Windows rescale the same law.
  const auto win = sample_constant(2.0, {0, 3, 0.25, 0.75}, 20000, 5);
  for (const auto& p : win) CHECK((p.jump_times.front() > 0.25 && p.jump_times.back() < 0.75));
  CHECK(within_sigmas(frequency(win, 0.5, 1), binomial_tail({3, pi_shifted(2.0, 0.25, 0.75, 0.5)}, 1), 2e4) <= 4.0);

  const auto again = sample_constant(3.0, spec, 100, 2024);
  for (std::size_t r = 0; r < again.size(); ++r) CHECK(again[r].jump_times == paths[r].jump_times);
}

TEST_CASE("thinning sampler") {
  SUBCASE("empty bridge") {
    const auto model = IntensityModel::poisson(1.0);
    const BridgeSpec spec{2, 2, 0.0, 1.0};
    const auto paths = sample_bridge(model, spec, solve_h(model, spec), 5, 1);
    for (const auto& p : paths) {
      CHECK(p.x0 == 2);
      CHECK(p.jump_times.empty());
    }
  }
  SUBCASE("Poisson bridges are uniform order statistics") {
    const auto model = IntensityModel::poisson(2.0);
    const BridgeSpec spec{0, 5, 0.0, 1.0};
    ThinningStats stats;
    const auto paths = sample_bridge(model, spec, solve_h(model, spec), 10000, 31, &stats);
    const auto ref = sample_constant(0.0, spec, 10000, 32);
    CHECK(stats.accepted == 50000);
    for (std::size_t j = 0; j < 5; ++j)
      CHECK(ks_statistic(column(paths, j), column(ref, j)) < ks_critical(10000, 10000, 0.01));
  }
  SUBCASE("marginal at t = 0.5 matches the binomial law") {
    const auto model = IntensityModel::space_linear(3.0, 1.0);
    const BridgeSpec spec{0, 5, 0.0, 1.0};
    const auto paths = sample_bridge(model, spec, solve_h(model, spec), 100000, 4);
    const BinomialSpec bin{5, pi_lambda(3.0, 0.5)};
    std::vector<double> counts(6, 0.0);
    for (const auto& p : paths) {
      REQUIRE(p.n() == 5);
      counts[static_cast<std::size_t>(p.state_at(0.5))] += 1;
    }
    for (long k = 0; k <= 5; ++k) CHECK(within_sigmas(counts[static_cast<std::size_t>(k)] / 1e5, bin.pmf(k), 1e5) <= 3.0);
  }
  SUBCASE("deterministic given the seed") {
    const auto model = IntensityModel::product(1.0, 3.0, 0.1);
    const BridgeSpec spec{1, 4, 0.1, 0.9};
    const auto h = solve_h(model, spec);
    const auto a = sample_bridge(model, spec, h, 50, 99);
    const auto b = sample_bridge(model, spec, h, 50, 99);
    for (std::size_t r = 0; r < a.size(); ++r) {
      CHECK(a[r].jump_times == b[r].jump_times);
      CHECK(a[r].jump_times.front() > 0.1);
      CHECK(a[r].jump_times.back() < 0.9);
    }
  }
  SUBCASE("oracle triangle for small n") {
    const auto model = IntensityModel::product(1.0, 3.0, 0.1);
    const BridgeSpec spec{0, 3, 0.0, 1.0};
    const auto pot = xi_tables(model, spec);
    const auto table = marginal_table(model, spec);
    const auto paths = sample_bridge(model, spec, solve_h(model, spec), 40000, 12);
    for (double t : {0.3, 0.6, 0.9}) {
      for (long i = 1; i <= 3; ++i) {
        const double quad = simplex_oracle_marginal(pot, t, i);
        CHECK(std::abs(quad - table.tail_at(t, i)) <= 1e-5);
        CHECK(within_sigmas(frequency(paths, t, i), quad, 4e4) <= 3.5);
      }
    }
  }
  SUBCASE("mismatched h field") {
    const auto model = IntensityModel::poisson(1.0);
    CHECK_THROWS_AS(sample_bridge(model, {0, 3, 0.0, 1.0}, solve_h(model, {0, 2, 0.0, 1.0}), 1, 1), Error);
  }
}

TEST_CASE("rejection sampler") {
  const auto model = IntensityModel::product(1.0, 3.0, 0.1);
  const BridgeSpec spec{0, 3, 0.0, 1.0};
  RejectionStats stats;
  const auto paths = sample_rejection(model, spec, 20000, 8, &stats);
  CHECK(stats.accepted == 20000);
  CHECK(stats.proposal_lambda > 3.0);
  const auto table = marginal_table(model, spec);
  for (long i = 1; i <= 3; ++i) CHECK(within_sigmas(frequency(paths, 0.6, i), table.tail_at(0.6, i), 2e4) <= 3.5);
  try {
    sample_rejection(IntensityModel::poisson(1.0), {0, 21, 0.0, 1.0}, 1, 1);
    FAIL("expected ResourceCap");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::ResourceCap);
  }
}

TEST_CASE("KS helpers") {
  CHECK(ks_statistic({0.1, 0.2, 0.3}, {0.1, 0.2, 0.3}) == 0.0);
  CHECK(ks_statistic({0.1, 0.2}, {0.8, 0.9}) == 1.0);
  CHECK(ks_critical(10000, 10000, 0.01) == doctest::Approx(1.6276 * std::sqrt(2e-4)).epsilon(1e-4));
}
