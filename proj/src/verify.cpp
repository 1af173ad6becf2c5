#include "cbridge/verify.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cbridge/analytic.hpp"
#include "cbridge/error.hpp"

namespace cbridge {

namespace {

using nlohmann::json;

json spec_json(const BridgeSpec& spec) { return {{"x", spec.x}, {"y", spec.y}, {"s", spec.s}, {"u", spec.u}}; }

json bounds_json(const CharacteristicBounds& b) {
  return {{"inf", b.inf}, {"sup", b.sup}, {"certified", b.certified}};
}

std::string verdict(bool ok) { return ok ? "pass" : "fail"; }

Estimate estimate(const std::vector<double>& v) {
  Estimate e;
  if (v.empty()) return e;
  const double n = static_cast<double>(v.size());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  e.mean = mean;
  e.stderr_ = v.size() > 1 ? std::sqrt(ss / (n - 1) / n) : 0.0;
  return e;
}

}  // namespace

// ------------------------------------------------------------------ convexity

std::string to_string(Shape shape) {
  switch (shape) {
    case Shape::Convex: return "convex";
    case Shape::Concave: return "concave";
    case Shape::Linear: return "convex and concave";
    case Shape::NoClaim: return "no claim";
  }
  return "?";
}

json ConvexityReport::to_json() const {
  json profile = json::array();
  for (const auto& p : second_diff) profile.push_back({p.t, p.value});
  return {{"check", "convexity"},
          {"inputs", {{"spec", spec_json(spec)}, {"characteristic", bounds_json(bounds)}}},
          {"tolerances", {{"second_difference", tol}}},
          {"claim", to_string(claim)},
          {"min_second_difference", min_second_diff},
          {"max_second_difference", max_second_diff},
          {"second_differences", profile},
          {"verdict", verdict(passed)}};
}

ConvexityReport convexity_check(const IntensityModel& model, const BridgeSpec& spec, double h_step, double tol,
                                std::size_t intervals) {
  spec.validate();
  ConvexityReport r;
  r.spec = spec;
  r.tol = tol;
  if (spec.height() > 0) {
    r.bounds = characteristic_bounds(model, spec.s, spec.u, spec.x, spec.y - 1);
  } else {
    r.bounds = {0.0, 0.0, true};
  }
  const bool convex = r.bounds.inf >= 0.0;
  const bool concave = r.bounds.sup <= 0.0;
  r.claim = convex && concave ? Shape::Linear : convex ? Shape::Convex : concave ? Shape::Concave : Shape::NoClaim;
  r.mean = mean_curve(marginal_table(model, spec, h_step), intervals);
  r.second_diff = second_differences(r.mean);
  r.min_second_diff = r.max_second_diff = r.second_diff.front().value;
  for (const auto& p : r.second_diff) {
    r.min_second_diff = std::min(r.min_second_diff, p.value);
    r.max_second_diff = std::max(r.max_second_diff, p.value);
  }
  const bool lower_ok = r.min_second_diff >= -tol;
  const bool upper_ok = r.max_second_diff <= tol;
  switch (r.claim) {
    case Shape::Convex: r.passed = lower_ok; break;
    case Shape::Concave: r.passed = upper_ok; break;
    case Shape::Linear: r.passed = lower_ok && upper_ok; break;
    case Shape::NoClaim: r.passed = true; break;
  }
  return r;
}

// ------------------------------------------------------------------ dominance

std::string to_string(Direction d) { return d == Direction::Lower ? "lower" : "upper"; }

Direction direction_from_string(const std::string& s) {
  if (s == "lower") return Direction::Lower;
  if (s == "upper") return Direction::Upper;
  throw Error(ErrorCode::Config, "direction must be 'lower' or 'upper', got '" + s + "'");
}

std::string BoundReport::certification() const {
  if (!hypothesis_holds) return "hypothesis fails";
  return hypothesis_certified ? "certified" : "grid-certified only";
}

json BoundReport::to_json() const {
  json grid = json::array();
  for (const auto& row : rows)
    grid.push_back({{"t", row.t}, {"i", row.i}, {"computed", row.computed}, {"benchmark", row.benchmark},
                    {"margin", row.margin}});
  return {{"check", "dominance"},
          {"inputs",
           {{"spec", spec_json(spec)},
            {"lambda", lambda_used},
            {"direction", to_string(direction)},
            {"characteristic", bounds_json(bounds)}}},
          {"tolerances", {{"margin", tol}}},
          {"hypothesis", certification()},
          {"worst_margin", worst_margin},
          {"grid", grid},
          {"verdict", verdict(passed)}};
}

std::vector<double> default_check_times(const BridgeSpec& spec) {
  std::vector<double> out;
  for (int k = 1; k < 20; ++k) out.push_back(spec.s + spec.length() * k / 20.0);
  return out;
}

BoundReport dominance_check(const IntensityModel& model, const BridgeSpec& spec, double lambda, Direction direction,
                            const std::vector<double>& t_grid, double tol, double h_step) {
  spec.validate();
  BoundReport r;
  r.spec = spec;
  r.lambda_used = lambda;
  r.direction = direction;
  r.tol = tol;
  const long n = static_cast<long>(spec.height());
  if (n == 0) {
    r.bounds = {0.0, 0.0, true};
    r.hypothesis_holds = r.hypothesis_certified = true;
    r.passed = true;
    return r;
  }
  r.bounds = characteristic_bounds(model, spec.s, spec.u, spec.x, spec.y - 1);
  constexpr double slack = 1e-12;
  r.hypothesis_holds = direction == Direction::Lower ? lambda <= r.bounds.inf + slack : lambda >= r.bounds.sup - slack;
  r.hypothesis_certified = r.hypothesis_holds && r.bounds.certified;

  const auto table = marginal_table(model, spec, h_step);
  r.worst_margin = std::numeric_limits<double>::infinity();
  for (double t : t_grid) {
    const auto row = table.row_at(t);
    const auto bench = constant_char_marginal(spec, lambda, t);
    for (long i = 1; i <= n; ++i) {
      const double computed = MarginalTable::tail(row, i);
      const double benchmark = bench.tail(i);
      const double margin = direction == Direction::Lower ? benchmark - computed : computed - benchmark;
      r.rows.push_back({t, i, computed, benchmark, margin});
      r.worst_margin = std::min(r.worst_margin, margin);
    }
  }
  if (r.rows.empty()) r.worst_margin = 0.0;
  r.passed = r.worst_margin >= -tol;
  return r;
}

// ------------------------------------------------------------------ mean bound

json MeanBoundReport::to_json() const {
  json grid = json::array();
  for (const auto& row : rows)
    grid.push_back({{"t", row.t}, {"mean", row.mean}, {"bound", row.bound}, {"slack", row.slack}});
  return {{"check", "mean_bound"},
          {"inputs", {{"spec", spec_json(spec)}, {"lambda", lambda_used}}},
          {"tolerances", {{"slack", tol}}},
          {"worst_margin", worst_slack},
          {"grid", grid},
          {"verdict", verdict(passed)}};
}

MeanBoundReport mean_bound_check(const IntensityModel& model, const BridgeSpec& spec, double lambda,
                                 const std::vector<double>& t_grid, double tol, double h_step) {
  spec.validate();
  MeanBoundReport r;
  r.spec = spec;
  r.lambda_used = lambda;
  r.tol = tol;
  const auto table = marginal_table(model, spec, h_step);
  r.worst_slack = std::numeric_limits<double>::infinity();
  for (double t : t_grid) {
    const double mean = table.mean_at(t);
    const double bound = mean_bound(spec, lambda, t);
    r.rows.push_back({t, mean, bound, bound - mean});
    r.worst_slack = std::min(r.worst_slack, bound - mean);
  }
  if (r.rows.empty()) r.worst_slack = 0.0;
  r.passed = r.worst_slack >= -tol;
  return r;
}

// ------------------------------------------------------------------ duality

std::vector<DualityPair> duality_catalog() {
  using std::numbers::pi;
  const TestFunction parabola{"t(1-t)", [](double t) { return t * (1 - t); }, [](double t) { return 1 - 2 * t; }};
  const TestFunction sine{"sin(pi t)", [](double t) { return std::sin(pi * t); },
                          [](double t) { return pi * std::cos(pi * t); }};
  const TestFunction cubic{"t^2(1-t)", [](double t) { return t * t * (1 - t); },
                           [](double t) { return 2 * t - 3 * t * t; }};
  const TestFunction sine2{"sin(pi t)^2", [](double t) { return std::sin(pi * t) * std::sin(pi * t); },
                           [](double t) { return pi * std::sin(2 * pi * t); }};
  const TestFunction tri{"t(1-t)(2-t)", [](double t) { return t * (1 - t) * (2 - t); },
                         [](double t) { return 2 - 6 * t + 3 * t * t; }};

  std::vector<DualityPair> out;
  out.push_back({{"sin(pi T1)", 1, [](State, const std::vector<double>& T) { return std::sin(pi * T[0]); },
                  [](State, const std::vector<double>& T) { return std::vector<double>{pi * std::cos(pi * T[0])}; }},
                 parabola});
  out.push_back({{"(1+X0) T1 T2", 2, [](State x0, const std::vector<double>& T) { return (1.0 + x0) * T[0] * T[1]; },
                  [](State x0, const std::vector<double>& T) {
                    return std::vector<double>{(1.0 + x0) * T[1], (1.0 + x0) * T[0]};
                  }},
                 sine});
  out.push_back({{"cos(T1 + T3)", 3, [](State, const std::vector<double>& T) { return std::cos(T[0] + T[2]); },
                  [](State, const std::vector<double>& T) {
                    const double d = -std::sin(T[0] + T[2]);
                    return std::vector<double>{d, 0.0, d};
                  }},
                 cubic});
  out.push_back({{"T2^2 - T1", 2, [](State, const std::vector<double>& T) { return T[1] * T[1] - T[0]; },
                  [](State, const std::vector<double>& T) { return std::vector<double>{-1.0, 2 * T[1]}; }},
                 sine2});
  out.push_back({{"exp(-(T1+...+T5))", 5,
                  [](State, const std::vector<double>& T) {
                    double acc = 0;
                    for (double t : T) acc += t;
                    return std::exp(-acc);
                  },
                  [](State, const std::vector<double>& T) {
                    double acc = 0;
                    for (double t : T) acc += t;
                    return std::vector<double>(T.size(), -std::exp(-acc));
                  }},
                 tri});
  return out;
}

TestFunctional constant_functional() {
  return {"1", 0, [](State, const std::vector<double>&) { return 1.0; },
          [](State, const std::vector<double>&) { return std::vector<double>{}; }};
}

json DualityReport::to_json() const {
  return {{"check", "duality"},
          {"inputs", {{"functional", functional}, {"test_function", test_function}, {"count", count}, {"seed", seed}}},
          {"tolerances", {{"z", z_tol}}},
          {"lhs", {{"mean", lhs.mean}, {"stderr", lhs.stderr_}}},
          {"rhs", {{"mean", rhs.mean}, {"stderr", rhs.stderr_}}},
          {"z_scores", {z_score}},
          {"verdict", verdict(passed)}};
}

DualityReport duality_on_paths(const IntensityModel& model, const BridgeSpec& spec, const DualityPair& pair,
                               const std::vector<PathSample>& paths, double z_tol) {
  spec.validate();
  const double len = spec.length();
  const auto u = [&](double t) { return pair.u.u((t - spec.s) / len); };
  const auto du = [&](double t) { return pair.u.du((t - spec.s) / len) / len; };

  std::vector<double> lhs(paths.size());
  std::vector<double> rhs(paths.size());
  std::vector<double> diff(paths.size());
  std::vector<double> T(pair.phi.m);
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto& path = paths[k];
    for (std::size_t j = 0; j < T.size(); ++j) T[j] = j < path.n() ? path.jump_times[j] : spec.u;
    const auto grad = pair.phi.grad(path.x0, T);
    double l = 0.0;
    for (std::size_t j = 0; j < T.size(); ++j) l -= grad[j] * u(T[j]);
    double integral = 0.0;
    for (std::size_t i = 0; i < path.n(); ++i) {
      const double t = path.jump_times[i];
      integral += du(t) + characteristic(model, t, path.x0 + static_cast<State>(i)) * u(t);
    }
    lhs[k] = l;
    rhs[k] = pair.phi.phi(path.x0, T) * integral;
    diff[k] = lhs[k] - rhs[k];
  }

  DualityReport r;
  r.functional = pair.phi.name;
  r.test_function = pair.u.name;
  r.count = paths.size();
  r.z_tol = z_tol;
  r.lhs = estimate(lhs);
  r.rhs = estimate(rhs);
  const Estimate d = estimate(diff);
  if (d.stderr_ > 0.0) {
    r.z_score = d.mean / d.stderr_;
  } else if (paths.size() > 1 && r.lhs.mean != r.rhs.mean) {
    std::ostringstream os;
    os << "both duality estimators are degenerate (" << r.lhs.mean << " vs " << r.rhs.mean << ")";
    throw Error(ErrorCode::DegenerateVariance, os.str());
  }
  r.passed = std::abs(r.z_score) <= z_tol;
  return r;
}

DualityReport duality_check(const IntensityModel& model, const BridgeSpec& spec, const DualityPair& pair,
                            std::size_t count, std::uint64_t seed, double z_tol) {
  spec.validate();
  const auto h = solve_h(model, spec);
  const auto paths = sample_bridge(model, spec, h, count, seed);
  auto r = duality_on_paths(model, spec, pair, paths, z_tol);
  r.seed = seed;
  return r;
}

// ------------------------------------------------------------------ LLN

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorCode::EmptyRange, "quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double sup_distance(const PathSample& path, long N, double lambda) {
  const double n = static_cast<double>(N);
  double d = 0.0;
  for (std::size_t j = 0; j < path.n(); ++j) {
    // X/N steps from j/N to (j+1)/N at t_j while pi is continuous.
    const double p = pi_lambda(lambda, path.jump_times[j]);
    d = std::max({d, std::abs(static_cast<double>(j) / n - p), std::abs(static_cast<double>(j + 1) / n - p)});
  }
  return d;
}

json LLNReport::to_json() const {
  json rs = json::array();
  for (const auto& row : rows) rs.push_back({{"N", row.N}, {"median", row.median}, {"q90", row.q90}});
  return {{"check", "lln"},
          {"inputs", {{"lambda", lambda}, {"replicas", replicas}, {"seed", seed}, {"sampler", sampler}}},
          {"tolerances", json::object()},
          {"rows", rs},
          {"medians_non_increasing", medians_non_increasing},
          {"verdict", verdict(medians_non_increasing)}};
}

LLNReport lln_experiment(const IntensityModel& model, double lambda, const std::vector<long>& N_list,
                         std::size_t replicas, std::uint64_t seed, const LLNOptions& options) {
  double work = 0.0;
  for (long N : N_list) {
    if (N < 1) throw Error(ErrorCode::Config, "LLN needs N >= 1");
    work += static_cast<double>(N) * static_cast<double>(replicas);
  }
  if (work > options.budget) {
    std::ostringstream os;
    os << "LLN experiment needs " << work << " jump draws, budget is " << options.budget;
    throw Error(ErrorCode::ResourceCap, os.str());
  }
  LLNReport r;
  r.lambda = lambda;
  r.replicas = replicas;
  r.seed = seed;
  const auto exact = model.constant_characteristic();
  r.sampler = exact ? "constant" : "thinning";
  for (std::size_t k = 0; k < N_list.size(); ++k) {
    const long N = N_list[k];
    const BridgeSpec spec{0, N, 0.0, 1.0};
    const std::uint64_t sub_seed = replica_engine(seed, 1000003ULL + k)();
    std::vector<PathSample> paths;
    if (exact) {
      paths = sample_constant(*exact, spec, replicas, sub_seed);
    } else {
      const auto h = solve_h(model, spec, options.h_step);
      paths = sample_bridge(model, spec, h, replicas, sub_seed);
    }
    LLNRow row;
    row.N = N;
    for (const auto& p : paths) row.distances.push_back(sup_distance(p, N, lambda));
    row.median = quantile(row.distances, 0.5);
    row.q90 = quantile(row.distances, 0.9);
    r.rows.push_back(std::move(row));
  }
  r.medians_non_increasing = true;
  for (std::size_t k = 1; k < r.rows.size(); ++k)
    if (r.rows[k].median > r.rows[k - 1].median) r.medians_non_increasing = false;
  return r;
}

}  // namespace cbridge
