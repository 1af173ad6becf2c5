#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace cbridge {

using State = std::int64_t;

// Rate families. Each satisfies positivity, C^1 regularity in time and bounded
// space increments on its supported state range.

/// l(t,z) = alpha
struct Poisson {
  double alpha = 1.0;
};

/// l(t,z) = lambda * z + alpha
struct SpaceLinear {
  double lambda = 0.0;
  double alpha = 1.0;
};

/// l(t,z) = alpha * exp(lambda * t)
struct TimeExponential {
  double alpha = 1.0;
  double lambda = 0.0;
};

/// l(t,z) = alpha * exp(lambda * t) * (1 + beta * z)
struct Product {
  double alpha = 1.0;
  double lambda = 0.0;
  double beta = 0.0;
};

/// Rates on a time grid for states z_min .. z_min + cols - 1.
///
/// Between nodes log l is interpolated by cubic Hermite polynomials that use the
/// node slopes rates_dt / rates, so eval stays positive and eval_dt is the exact
/// derivative of eval.
struct Tabulated {
  std::vector<double> t_grid;
  State z_min = 0;
  Eigen::MatrixXd rates;     // rows: time nodes, cols: states
  Eigen::MatrixXd rates_dt;  // same shape
  bool derivative_numeric = false;
};

using Family = std::variant<Poisson, SpaceLinear, TimeExponential, Product, Tabulated>;

class IntensityModel {
 public:
  explicit IntensityModel(Family family, State state_floor = 0);

  static IntensityModel poisson(double alpha);
  static IntensityModel space_linear(double lambda, double alpha);
  static IntensityModel time_exponential(double alpha, double lambda);
  static IntensityModel product(double alpha, double lambda, double beta);
  /// Missing rates_dt are filled by centered differences on t_grid and the
  /// model is flagged `derivative_numeric`.
  static IntensityModel tabulated(std::vector<double> t_grid, State z_min, Eigen::MatrixXd rates,
                                  std::optional<Eigen::MatrixXd> rates_dt = std::nullopt,
                                  State state_floor = 0);

  const Family& family() const noexcept { return family_; }
  State state_floor() const noexcept { return state_floor_; }
  /// Largest state with a strictly positive rate, when the family has one.
  std::optional<State> state_ceiling() const noexcept { return state_ceiling_; }
  std::string family_name() const;

  /// Constant value of the reciprocal characteristic, for the three families
  /// where it does not depend on (t, z).
  std::optional<double> constant_characteristic() const noexcept;

 private:
  Family family_;
  State state_floor_ = 0;
  std::optional<State> state_ceiling_;
};

double eval(const IntensityModel& model, double t, State z);
double eval_dt(const IntensityModel& model, double t, State z);
double log_eval(const IntensityModel& model, double t, State z);

/// d/dt log l(t,z) + l(t,z+1) - l(t,z), closed form where the family has one.
double characteristic(const IntensityModel& model, double t, State z);

/// Same quantity assembled from eval and eval_dt only.
double characteristic_generic(const IntensityModel& model, double t, State z);

struct CharacteristicBounds {
  double inf = 0.0;
  double sup = 0.0;
  /// True when the bounds come from the family's closed form rather than a grid scan.
  bool certified = false;
};

/// Range of the characteristic over [s,u] x {z_lo..z_hi}. Tabulated models are
/// scanned on a grid of spacing `time_step` plus every table node in the window,
/// so the result is a grid bound only.
CharacteristicBounds characteristic_bounds(const IntensityModel& model, double s, double u,
                                           State z_lo, State z_hi, double time_step = 1e-3);

/// Memoised view of the characteristic. Safe to share between threads.
class CharacteristicField {
 public:
  explicit CharacteristicField(IntensityModel model) : model_(std::move(model)) {}

  const IntensityModel& source() const noexcept { return model_; }
  double value(double t, State z) const;
  std::size_t cache_size() const;

 private:
  IntensityModel model_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<double, State>, double> cache_;
};

IntensityModel model_from_json(const nlohmann::json& descriptor);
nlohmann::json model_to_json(const IntensityModel& model);

}  // namespace cbridge
