#include <doctest.h>

#include <cmath>

#include "cbridge/analytic.hpp"
#include "cbridge/engine.hpp"

using namespace cbridge;

namespace {

double max_row_error(const MarginalTable& table, double lambda) {
  double err = 0.0;
  for (std::size_t r = 0; r < table.times().size(); ++r) {
    const auto b = constant_char_marginal(table.spec(), lambda, table.times()[r]);
    for (long k = 0; k <= b.n; ++k)
      err = std::max(err, std::abs(table.probs()(static_cast<Eigen::Index>(r), k) - b.pmf(k)));
  }
  return err;
}

void check_table_invariants(const MarginalTable& table) {
  const auto& p = table.probs();
  const auto last = p.rows() - 1;
  CHECK(p(0, 0) == 1.0);
  CHECK(p(last, p.cols() - 1) == 1.0);
  for (Eigen::Index r = 0; r < p.rows(); ++r) CHECK(std::abs(p.row(r).sum() - 1.0) <= 1e-9);
  for (long i = 1; i < p.cols(); ++i) {
    double prev = 0.0;
    bool monotone = true;
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const double tail = MarginalTable::tail(p.row(r).transpose(), i);
      if (tail < prev - 1e-12) monotone = false;
      prev = tail;
    }
    CHECK(monotone);
  }
}

}  // namespace

TEST_CASE("time grid") {
  const auto g = TimeGrid::for_window(0.0, 1.0, 1e-3);
  CHECK(g.front() == 0.0);
  CHECK(g.back() == 1.0);
  CHECK(g[g.fine_begin()] == doctest::Approx(0.99));
  CHECK(g[g.fine_begin() + 1] - g[g.fine_begin()] == doctest::Approx(1e-5));
  CHECK(g.refined().size() == 2 * g.size() - 1);
  CHECK(g.find_node(0.5).has_value());
  CHECK_FALSE(g.find_node(0.50005).has_value());
  try {
    TimeGrid::for_window(0.2, 0.3, 0.1);
    FAIL("expected BadStep");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::BadStep);
  }
}

TEST_CASE("h closed forms for Poisson") {
  const double alpha = 1.7;
  const auto model = IntensityModel::poisson(alpha);
  const auto h1 = solve_h(model, {0, 1, 0.0, 1.0});
  for (double t : {0.0, 0.25, 0.5, 0.9, 0.995}) {
    const double tau = 1.0 - t;
    CHECK(std::exp(h1.log_h_at(t, 0)) == doctest::Approx(alpha * tau * std::exp(-alpha * tau)).epsilon(1e-9));
    CHECK(std::exp(h1.log_h_at(t, 1)) == doctest::Approx(std::exp(-alpha * tau)).epsilon(1e-9));
  }
  const auto h5 = solve_h(IntensityModel::poisson(1.0), {0, 5, 0.0, 1.0});
  CHECK(std::exp(h5.log_h_at(0.0, 0)) == doctest::Approx(0.0030656620097620196).epsilon(1e-9));
}

TEST_CASE("empty bridge") {
  const auto model = IntensityModel::poisson(2.0);
  const BridgeSpec spec{3, 3, 0.0, 1.0};
  const auto h = solve_h(model, spec);
  CHECK(std::exp(h.log_h_at(0.5, 3)) == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
  CHECK(bridge_intensity(model, h, 0.5, 3) == 0.0);
  const auto table = marginal_table(model, spec);
  for (const auto& pt : mean_curve(table)) CHECK(pt.value == 3.0);
}

TEST_CASE("bridge intensity") {
  const auto model = IntensityModel::poisson(4.0);
  const auto h = solve_h(model, {0, 1, 0.0, 1.0});
  for (double t : {0.0, 0.3, 0.77, 0.995, 0.99995})
    CHECK(bridge_intensity(model, h, t, 0) == doctest::Approx(1.0 / (1.0 - t)).epsilon(1e-7));
  CHECK(bridge_intensity(model, h, 0.4, 1) == 0.0);
  // Log-log slope near the pin.
  const auto m3 = IntensityModel::time_exponential(1.0, 3.0);
  const auto h3 = solve_h(m3, {0, 5, 0.0, 1.0});
  const double a = 0.1, b = 1e-4;
  const double slope = (std::log(bridge_intensity(m3, h3, 1 - b, 4)) - std::log(bridge_intensity(m3, h3, 1 - a, 4))) /
                       (std::log(b) - std::log(a));
  CHECK(slope == doctest::Approx(-1.0).epsilon(0.02));
  CHECK_THROWS_AS(bridge_intensity(model, h, 1.0, 0), Error);
  CHECK_THROWS_AS(bridge_intensity(model, h, 0.5, 2), Error);
}

TEST_CASE("marginal table examples") {
  const auto pois = marginal_table(IntensityModel::poisson(3.3), {0, 2, 0.0, 1.0});
  const auto row = pois.row_at(0.5);
  CHECK(row[0] == doctest::Approx(0.25).epsilon(1e-9));
  CHECK(row[1] == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(row[2] == doctest::Approx(0.25).epsilon(1e-9));

  const auto lin = marginal_table(IntensityModel::space_linear(3.0, 1.0), {0, 5, 0.0, 1.0});
  const auto lrow = lin.row_at(0.5);
  const BinomialSpec bin{5, 0.18242552380635632};
  for (long k = 0; k <= 5; ++k) CHECK(std::abs(lrow[k] - bin.pmf(k)) <= 1e-6);

  const auto prod = marginal_table(IntensityModel::product(1.0, 3.0, 0.1), {0, 5, 0.0, 1.0});
  CHECK(prod.tail_at(0.5, 1) <= 0.6347109751760405);
  check_table_invariants(prod);
}

TEST_CASE("marginal tables match the constant-characteristic closed forms") {
  for (double lambda : {-5.0, -3.0, 0.0, 3.0, 5.0}) {
    for (State y : {1, 5, 20}) {
      CAPTURE(lambda);
      CAPTURE(y);
      const BridgeSpec spec{0, y, 0.0, 1.0};
      const auto te = marginal_table(IntensityModel::time_exponential(1.0, lambda), spec);
      CHECK(max_row_error(te, lambda) <= 1e-6);
      CHECK(te.max_drift() < 1e-6);
      check_table_invariants(te);
      // The space-linear family realises Xi = lambda only for lambda > 0 on
      // an unbounded ladder; for lambda < 0 it needs enough positive states.
      const double alpha = lambda >= 0 ? 1.0 : -lambda * (y + 1) + 1.0;
      const auto sl = marginal_table(IntensityModel::space_linear(lambda, alpha), spec);
      CHECK(max_row_error(sl, lambda) <= 1e-6);
    }
  }
}

TEST_CASE("windowed bridge") {
  const BridgeSpec spec{2, 6, 0.2, 0.7};
  const auto table = marginal_table(IntensityModel::time_exponential(0.5, 2.0), spec);
  CHECK(max_row_error(table, 2.0) <= 1e-6);
  CHECK(table.times().front() == 0.2);
  CHECK(table.times().back() == 0.7);
}

TEST_CASE("two-sided cross-check agrees") {
  for (const auto& model : {IntensityModel::product(1.0, 3.0, 0.1), IntensityModel::time_exponential(1.0, 5.0),
                            IntensityModel::space_linear(-0.5, 12.0)}) {
    const BridgeSpec spec{0, 8, 0.0, 1.0};
    const auto a = marginal_table(model, spec);
    const auto b = two_sided_table(model, spec);
    REQUIRE(a.probs().rows() == b.probs().rows());
    CHECK((a.probs() - b.probs()).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("Poisson time reversal") {
  const auto table = marginal_table(IntensityModel::poisson(0.4), {0, 7, 0.0, 1.0});
  for (double t : {0.1, 0.3, 0.45}) {
    const auto fwd = table.row_at(t);
    const auto bwd = table.row_at(1.0 - t);
    for (Eigen::Index k = 0; k < fwd.size(); ++k) CHECK(std::abs(fwd[k] - bwd[fwd.size() - 1 - k]) <= 1e-9);
  }
}

TEST_CASE("mean curves and second differences") {
  const BridgeSpec spec{0, 20, 0.0, 1.0};
  const auto pois = mean_curve(marginal_table(IntensityModel::poisson(1.0), spec), 100);
  REQUIRE(pois.size() == 101);
  CHECK(pois.front().value == 0.0);
  CHECK(pois.back().value == 20.0);
  for (const auto& pt : pois) CHECK(std::abs(pt.value - 20 * pt.t) <= 1e-6);
  for (const auto& d : second_differences(pois)) CHECK(std::abs(d.value) <= 1e-8);

  const auto conv = mean_curve(marginal_table(IntensityModel::time_exponential(1.0, 3.0), spec), 100);
  for (const auto& pt : conv) CHECK(std::abs(pt.value - 20 * pi_lambda(3.0, pt.t)) <= 1e-6);
  for (const auto& d : second_differences(conv)) {
    const double exact = 20 * 9 * std::exp(3 * d.t) / std::expm1(3.0);
    CHECK(d.value == doctest::Approx(exact).epsilon(1e-3));
  }
  const auto conc = mean_curve(marginal_table(IntensityModel::time_exponential(1.0, -3.0), spec), 100);
  for (const auto& d : second_differences(conc)) CHECK(d.value < 0.0);

  CHECK_THROWS_AS(second_differences({{0, 1}, {1, 2}}), Error);
  CHECK_THROWS_AS(second_differences({{0, 1}, {0.5, 2}, {0.6, 2}}), Error);
}
