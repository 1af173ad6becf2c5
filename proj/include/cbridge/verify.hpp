#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

#include "cbridge/bridge_spec.hpp"
#include "cbridge/engine.hpp"
#include "cbridge/intensity.hpp"
#include "cbridge/sampler.hpp"

namespace cbridge {

// ------------------------------------------------------------------ convexity

enum class Shape { Convex, Concave, Linear, NoClaim };
std::string to_string(Shape shape);

struct ConvexityReport {
  BridgeSpec spec;
  CharacteristicBounds bounds;
  Shape claim = Shape::NoClaim;  // what the characteristic's sign predicts
  double tol = 1e-8;
  std::vector<CurvePoint> mean;
  std::vector<CurvePoint> second_diff;
  double min_second_diff = 0.0;
  double max_second_diff = 0.0;
  bool passed = true;  // "no claim" always passes

  nlohmann::json to_json() const;
};

/// Mean curve on `intervals + 1` equally spaced times and the sign test its
/// second differences must satisfy.
ConvexityReport convexity_check(const IntensityModel& model, const BridgeSpec& spec, double h_step = 1e-3,
                                double tol = 1e-8, std::size_t intervals = 100);

// ------------------------------------------------------------------ dominance

/// lower: lambda bounds the characteristic from below, tails must be lighter
/// than the benchmark; upper: the reverse.
enum class Direction { Lower, Upper };
std::string to_string(Direction d);
Direction direction_from_string(const std::string& s);

struct BoundRow {
  double t;
  long i;
  double computed;
  double benchmark;
  double margin;
};

struct BoundReport {
  BridgeSpec spec;
  double lambda_used = 0.0;
  Direction direction = Direction::Lower;
  double tol = 1e-9;
  CharacteristicBounds bounds;
  /// lambda really is an inf (resp. sup) of the characteristic on the ladder.
  bool hypothesis_holds = false;
  /// ... and that statement comes from a closed form, not a grid scan.
  bool hypothesis_certified = false;
  std::vector<BoundRow> rows;
  double worst_margin = 0.0;
  bool passed = false;

  std::string certification() const;
  nlohmann::json to_json() const;
};

/// Interior times k/20 of the window, k = 1..19.
std::vector<double> default_check_times(const BridgeSpec& spec);

BoundReport dominance_check(const IntensityModel& model, const BridgeSpec& spec, double lambda, Direction direction,
                            const std::vector<double>& t_grid, double tol = 1e-9, double h_step = 1e-3);

// ------------------------------------------------------------------ mean bound

struct MeanBoundRow {
  double t;
  double mean;
  double bound;
  double slack;  // bound - mean
};

struct MeanBoundReport {
  BridgeSpec spec;
  double lambda_used = 0.0;
  double tol = 1e-9;
  std::vector<MeanBoundRow> rows;
  double worst_slack = 0.0;
  bool passed = false;

  nlohmann::json to_json() const;
};

MeanBoundReport mean_bound_check(const IntensityModel& model, const BridgeSpec& spec, double lambda,
                                 const std::vector<double>& t_grid, double tol = 1e-9, double h_step = 1e-3);

// ------------------------------------------------------------------ duality

/// u with u(s) = u(u) = 0 on the window, and its derivative.
struct TestFunction {
  std::string name;
  std::function<double(double)> u;
  std::function<double(double)> du;
};

/// phi(x0; T_1..T_m) with its gradient in the jump times. Jump times beyond
/// the path's last jump are read as the window end.
struct TestFunctional {
  std::string name;
  std::size_t m = 1;
  std::function<double(State, const std::vector<double>&)> phi;
  std::function<std::vector<double>(State, const std::vector<double>&)> grad;
};

struct DualityPair {
  TestFunctional phi;
  TestFunction u;
};

/// Five fixed pairs on the unit window, plus the constant functional.
std::vector<DualityPair> duality_catalog();
TestFunctional constant_functional();

struct Estimate {
  double mean = 0.0;
  double stderr_ = 0.0;
};

struct DualityReport {
  std::string functional;
  std::string test_function;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  Estimate lhs;
  Estimate rhs;
  /// (lhs - rhs) / stderr of the per-path difference: both sides are read
  /// off the same paths.
  double z_score = 0.0;
  double z_tol = 4.0;
  bool passed = false;

  nlohmann::json to_json() const;
};

/// Both sides of the integration-by-parts duality on a given set of paths.
DualityReport duality_on_paths(const IntensityModel& model, const BridgeSpec& spec, const DualityPair& pair,
                               const std::vector<PathSample>& paths, double z_tol = 4.0);

/// Samples `count` bridges with the thinning sampler and evaluates the duality.
DualityReport duality_check(const IntensityModel& model, const BridgeSpec& spec, const DualityPair& pair,
                            std::size_t count, std::uint64_t seed, double z_tol = 4.0);

// ------------------------------------------------------------------ LLN

struct LLNRow {
  long N = 0;
  std::vector<double> distances;
  double median = 0.0;
  double q90 = 0.0;
};

struct LLNReport {
  double lambda = 0.0;
  std::size_t replicas = 0;
  std::uint64_t seed = 0;
  std::string sampler;  // "constant" or "thinning"
  std::vector<LLNRow> rows;
  bool medians_non_increasing = false;

  nlohmann::json to_json() const;
};

/// sup_t |X_t/N - pi_lambda(t)| for a path of the bridge 0 -> N on [0,1],
/// evaluated on the jump skeleton.
double sup_distance(const PathSample& path, long N, double lambda);

struct LLNOptions {
  /// Upper bound on N * replicas summed over the N list.
  double budget = 5e6;
  double h_step = 1e-3;
};

/// Samples `replicas` bridges 0 -> N for each N. Models with a constant
/// characteristic are sampled exactly, others by thinning.
LLNReport lln_experiment(const IntensityModel& model, double lambda, const std::vector<long>& N_list,
                         std::size_t replicas, std::uint64_t seed, const LLNOptions& options = {});

/// Sample quantile with linear interpolation (type 7).
double quantile(std::vector<double> values, double q);

}  // namespace cbridge
