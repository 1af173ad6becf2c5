#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>

#include "cbridge/bridge_spec.hpp"
#include "cbridge/intensity.hpp"

namespace cbridge {

/// Nodes of a bridge window [s,u]: a uniform coarse part covering the first 99%
/// and a uniform fine part (step 1e-5 by default) on the last 1%, where the
/// bridge intensity blows up like 1/(u - t).
class TimeGrid {
 public:
  static constexpr double kFineStep = 1e-5;
  static constexpr double kFineFraction = 0.01;

  static TimeGrid for_window(double s, double u, double coarse_step, double fine_step = kFineStep);

  /// Same grid with every interval split at its midpoint.
  TimeGrid refined() const;

  const std::vector<double>& nodes() const noexcept { return nodes_; }
  std::size_t size() const noexcept { return nodes_.size(); }
  double operator[](std::size_t i) const noexcept { return nodes_[i]; }
  double front() const noexcept { return nodes_.front(); }
  double back() const noexcept { return nodes_.back(); }
  double coarse_step() const noexcept { return coarse_step_; }
  /// Index of the first node of the fine part.
  std::size_t fine_begin() const noexcept { return fine_begin_; }

  /// Interval index i with nodes[i] <= t < nodes[i+1], clamped to the last interval.
  std::size_t interval(double t) const noexcept;
  /// Index of a node within `tol` of t, if any.
  std::optional<std::size_t> find_node(double t, double tol = 1e-9) const noexcept;

 private:
  std::vector<double> nodes_;
  double coarse_step_ = 0.0;
  std::size_t fine_begin_ = 0;
};

/// log h(t,z) = log P(X_u = y | X_t = z) on a time grid, z in {x..y}.
///
/// Values are integrated in an extended-exponent scalar and stored as logs, so
/// heights of several hundred jumps do not underflow. Exact zeros (the terminal
/// row away from y, and far states right next to the pin) are stored as -inf.
class HField {
 public:
  HField(BridgeSpec spec, TimeGrid grid, Eigen::MatrixXd log_h, Eigen::MatrixXd log_rate);

  const BridgeSpec& spec() const noexcept { return spec_; }
  const TimeGrid& grid() const noexcept { return grid_; }
  /// Rows: grid nodes. Columns: states x..y.
  const Eigen::MatrixXd& log_h() const noexcept { return log_h_; }
  /// log l(t_i, z) on the same layout.
  const Eigen::MatrixXd& log_rate() const noexcept { return log_rate_; }

  /// Cubic Hermite interpolation of log h in the variable log(u - t), slopes
  /// from the ODE; on the last interval before u it is linear in log(u - t),
  /// matching h ~ (u - t)^{y - z}.
  double log_h_at(double t, State z) const;

  /// d/dt log h at node i (NaN where h is an exact zero).
  double log_h_slope(std::size_t i, State z) const;

  /// log of the bridge intensity at node i, state z (-inf for z = y).
  double log_bridge_rate_node(std::size_t i, State z) const;

 private:
  BridgeSpec spec_;
  TimeGrid grid_;
  Eigen::MatrixXd log_h_;
  Eigen::MatrixXd log_rate_;
};

/// Backward Kolmogorov system integrated with classical RK4 from u down to s.
/// Each grid interval is split into enough RK4 sub-steps that
/// max rate * sub-step <= 0.05.
HField solve_h(const IntensityModel& model, const BridgeSpec& spec, double h_step = 1e-3);

/// Same on an explicit grid.
HField solve_h_on_grid(const IntensityModel& model, const BridgeSpec& spec, TimeGrid grid);

/// l(t,z) h(t,z+1) / h(t,z); zero at z = y.
double bridge_intensity(const IntensityModel& model, const HField& h, double t, State z);

/// P(X_t = z) under the bridge, one row per time node.
class MarginalTable {
 public:
  MarginalTable(BridgeSpec spec, std::vector<double> times, Eigen::MatrixXd probs, double max_drift);

  const BridgeSpec& spec() const noexcept { return spec_; }
  const std::vector<double>& times() const noexcept { return times_; }
  /// Rows: times, columns: states x..y.
  const Eigen::MatrixXd& probs() const noexcept { return probs_; }
  /// Largest |1 - row sum| seen before renormalisation.
  double max_drift() const noexcept { return max_drift_; }

  /// Row at time t: the node row when t is a node, else linear interpolation.
  Eigen::VectorXd row_at(double t) const;
  /// P(X_t >= x + i) for the given row.
  static double tail(const Eigen::VectorXd& row, long i);
  double tail_at(double t, long i) const { return tail(row_at(t), i); }
  double mean_at(double t) const;

 private:
  BridgeSpec spec_;
  std::vector<double> times_;
  Eigen::MatrixXd probs_;
  double max_drift_ = 0.0;
};

struct MarginalOptions {
  double h_step = 1e-3;
  /// Target bound on (rate scale) x (RK4 step) for the forward pass.
  double rate_step_product = 0.005;
  double conservation_tol = 1e-6;
};

/// Forward Kolmogorov system of the h-transformed (bridge) intensity, started
/// from a point mass at x. The last row is set to the point mass at y.
MarginalTable marginal_table(const IntensityModel& model, const BridgeSpec& spec,
                             const MarginalOptions& options = {});
MarginalTable marginal_table(const IntensityModel& model, const BridgeSpec& spec, double h_step);

/// Cross-check route: q(t,z) proportional to p_{s,t}(x,z) h(t,z), using the
/// unconditioned forward equation. Uses the same grid as marginal_table.
MarginalTable two_sided_table(const IntensityModel& model, const BridgeSpec& spec,
                              const MarginalOptions& options = {});

/// Number of RK4 sub-steps per h_step used by marginal_table for this problem.
std::size_t forward_substeps(const IntensityModel& model, const BridgeSpec& spec,
                             const MarginalOptions& options);

struct CurvePoint {
  double t;
  double value;
};

/// E[X_t] at every node of the table.
std::vector<CurvePoint> mean_curve(const MarginalTable& table);
/// E[X_t] on `intervals + 1` equally spaced times of the window.
std::vector<CurvePoint> mean_curve(const MarginalTable& table, std::size_t intervals);

/// Central second differences divided by step^2 at interior points of a
/// uniform curve.
std::vector<CurvePoint> second_differences(const std::vector<CurvePoint>& curve);

}  // namespace cbridge
