#include "cbridge/engine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cbridge/analytic.hpp"
#include "cbridge/error.hpp"
#include "cbridge/ext_real.hpp"
#include "cbridge/ladder_ode.hpp"

namespace cbridge {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
// Backward sub-steps keep max rate * dt below this.
constexpr double kBackwardRateStep = 0.05;
// Forward steps near the pin keep max bridge rate * dt below this.
constexpr double kForwardRateStep = 0.02;

Eigen::VectorXd ladder_rates(const IntensityModel& model, const BridgeSpec& spec, double t) {
  const auto n = static_cast<Eigen::Index>(spec.height() + 1);
  Eigen::VectorXd r(n);
  for (Eigen::Index j = 0; j < n; ++j) r[j] = eval(model, t, spec.x + j);
  return r;
}

std::size_t substeps_for(double rate_max, double dt, double target) {
  const double want = std::ceil(rate_max * dt / target - 1e-12);
  return static_cast<std::size_t>(std::max(1.0, want));
}

// Bridge jump rates at row i of an HField.
Eigen::VectorXd bridge_rates_at_node(const HField& h, std::size_t i) {
  const auto cols = h.log_h().cols();
  Eigen::VectorXd k = Eigen::VectorXd::Zero(cols);
  const auto row = static_cast<Eigen::Index>(i);
  for (Eigen::Index j = 0; j + 1 < cols; ++j) {
    const double lo = h.log_h()(row, j);
    const double hi = h.log_h()(row, j + 1);
    if (lo == kNegInf || hi == kNegInf) continue;
    k[j] = std::exp(h.log_rate()(row, j) + hi - lo);
  }
  return k;
}

// Bridge jump rates at an arbitrary time, through the interpolated h.
Eigen::VectorXd bridge_rates_at_time(const IntensityModel& model, const HField& h, double t) {
  const auto& spec = h.spec();
  const auto cols = h.log_h().cols();
  Eigen::VectorXd k = Eigen::VectorXd::Zero(cols);
  double lo = h.log_h_at(t, spec.x);
  for (Eigen::Index j = 0; j + 1 < cols; ++j) {
    const double hi = h.log_h_at(t, spec.x + j + 1);
    if (lo != kNegInf && hi != kNegInf) k[j] = std::exp(log_eval(model, t, spec.x + j) + hi - lo);
    lo = hi;
  }
  return k;
}

void check_pinned_rows(const BridgeSpec& spec, double drift, double tol) {
  if (drift > tol) {
    std::ostringstream os;
    os << "row-sum drift " << drift << " exceeds " << tol << " for bridge " << spec.x << "->"
       << spec.y << " (step too coarse near the pin)";
    throw Error(ErrorCode::ConservationLoss, os.str());
  }
}

}  // namespace

TimeGrid TimeGrid::for_window(double s, double u, double coarse_step, double fine_step) {
  const double len = u - s;
  if (!(len > 0)) throw Error(ErrorCode::BadWindow, "time grid needs s < u");
  if (!(coarse_step > 0) || coarse_step >= len) {
    std::ostringstream os;
    os << "step " << coarse_step << " must be in (0, u - s = " << len << ")";
    throw Error(ErrorCode::BadStep, os.str());
  }
  if (!(fine_step > 0)) throw Error(ErrorCode::BadStep, "fine step must be > 0");
  const double coarse_len = (1.0 - kFineFraction) * len;
  const double fine_len = kFineFraction * len;
  const auto n_coarse =
      static_cast<std::size_t>(std::max(1.0, std::ceil(coarse_len / coarse_step - 1e-9)));
  const auto n_fine = static_cast<std::size_t>(std::max(1.0, std::ceil(fine_len / fine_step - 1e-9)));
  TimeGrid g;
  g.nodes_.reserve(n_coarse + n_fine + 1);
  for (std::size_t k = 0; k < n_coarse; ++k)
    g.nodes_.push_back(s + coarse_len * static_cast<double>(k) / static_cast<double>(n_coarse));
  const double boundary = s + coarse_len;
  for (std::size_t k = 0; k < n_fine; ++k)
    g.nodes_.push_back(boundary + fine_len * static_cast<double>(k) / static_cast<double>(n_fine));
  g.nodes_.push_back(u);
  g.coarse_step_ = coarse_len / static_cast<double>(n_coarse);
  g.fine_begin_ = n_coarse;
  return g;
}

TimeGrid TimeGrid::refined() const {
  TimeGrid g;
  g.nodes_.reserve(2 * nodes_.size() - 1);
  for (std::size_t i = 0; i + 1 < nodes_.size(); ++i) {
    g.nodes_.push_back(nodes_[i]);
    g.nodes_.push_back(0.5 * (nodes_[i] + nodes_[i + 1]));
  }
  g.nodes_.push_back(nodes_.back());
  g.coarse_step_ = 0.5 * coarse_step_;
  g.fine_begin_ = 2 * fine_begin_;
  return g;
}

std::size_t TimeGrid::interval(double t) const noexcept {
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  auto i = static_cast<std::ptrdiff_t>(std::distance(nodes_.begin(), it)) - 1;
  i = std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(nodes_.size()) - 2);
  return static_cast<std::size_t>(i);
}

std::optional<std::size_t> TimeGrid::find_node(double t, double tol) const noexcept {
  const std::size_t i = interval(t);
  if (std::abs(nodes_[i] - t) <= tol) return i;
  if (std::abs(nodes_[i + 1] - t) <= tol) return i + 1;
  return std::nullopt;
}

HField::HField(BridgeSpec spec, TimeGrid grid, Eigen::MatrixXd log_h, Eigen::MatrixXd log_rate)
    : spec_(spec), grid_(std::move(grid)), log_h_(std::move(log_h)), log_rate_(std::move(log_rate)) {}

double HField::log_h_at(double t, State z) const {
  if (z < spec_.x || z > spec_.y) {
    std::ostringstream os;
    os << "state " << z << " outside ladder [" << spec_.x << ", " << spec_.y << "]";
    throw Error(ErrorCode::OutOfDomain, os.str());
  }
  const auto col = static_cast<Eigen::Index>(z - spec_.x);
  const std::size_t i = grid_.interval(t);
  const auto row = static_cast<Eigen::Index>(i);
  const double t0 = grid_[i];
  const double t1 = grid_[i + 1];
  const double v0 = log_h_(row, col);
  if (t <= t0) return v0;
  const bool last = i + 2 == grid_.size();
  if (last && z < spec_.y) {
    if (t >= spec_.u) return kNegInf;
    if (v0 == kNegInf) return kNegInf;
    return v0 + static_cast<double>(spec_.y - z) * std::log((spec_.u - t) / (spec_.u - t0));
  }
  const double v1 = log_h_(row + 1, col);
  if (t >= t1) return v1;
  if (v0 == kNegInf || v1 == kNegInf) return kNegInf;
  // Cubic Hermite in the variable log(u - t), where log h is nearly linear
  // (h ~ (u - t)^{y - z} near the pin); node slopes come from the ODE.
  const double d0 = log_h_slope(i, z);
  const double d1 = log_h_slope(i + 1, z);
  if (!std::isfinite(d0) || !std::isfinite(d1)) return v0 + (t - t0) / (t1 - t0) * (v1 - v0);
  double a = t0, b = t1, x = t, m0 = d0, m1 = d1;
  if (!last) {
    a = std::log(spec_.u - t0);
    b = std::log(spec_.u - t1);
    x = std::log(spec_.u - t);
    m0 = -(spec_.u - t0) * d0;
    m1 = -(spec_.u - t1) * d1;
  }
  const double hstep = b - a;
  const double w = (x - a) / hstep;
  const double w2 = w * w;
  const double w3 = w2 * w;
  return (2 * w3 - 3 * w2 + 1) * v0 + (w3 - 2 * w2 + w) * hstep * m0 + (-2 * w3 + 3 * w2) * v1 +
         (w3 - w2) * hstep * m1;
}

double HField::log_h_slope(std::size_t i, State z) const {
  const auto row = static_cast<Eigen::Index>(i);
  const auto col = static_cast<Eigen::Index>(z - spec_.x);
  const double rate = std::exp(log_rate_(row, col));
  if (z == spec_.y) return rate;
  const double lo = log_h_(row, col);
  if (lo == kNegInf) return std::numeric_limits<double>::quiet_NaN();
  return rate * -std::expm1(log_h_(row, col + 1) - lo);
}

double HField::log_bridge_rate_node(std::size_t i, State z) const {
  if (z == spec_.y) return kNegInf;
  const auto row = static_cast<Eigen::Index>(i);
  const auto col = static_cast<Eigen::Index>(z - spec_.x);
  const double lo = log_h_(row, col);
  if (lo == kNegInf) return std::numeric_limits<double>::quiet_NaN();
  return log_rate_(row, col) + log_h_(row, col + 1) - lo;
}

HField solve_h_on_grid(const IntensityModel& model, const BridgeSpec& spec, TimeGrid grid) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.height() + 1);
  const std::size_t m = grid.size();
  Eigen::MatrixXd log_h(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  Eigen::MatrixXd log_rate(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));

  std::vector<ExtReal> h(n, ExtReal(0.0));
  h[n - 1] = ExtReal(1.0);
  auto store = [&](std::size_t i, const Eigen::VectorXd& rates) {
    const auto row = static_cast<Eigen::Index>(i);
    for (std::size_t j = 0; j < n; ++j) {
      const auto col = static_cast<Eigen::Index>(j);
      log_h(row, col) = h[j].is_zero() || h[j].is_negative() ? kNegInf : h[j].log_abs();
      log_rate(row, col) = std::log(rates[col]);
    }
  };

  Eigen::VectorXd rate_hi = ladder_rates(model, spec, grid[m - 1]);
  store(m - 1, rate_hi);
  for (std::size_t i = m - 1; i-- > 0;) {
    const double t_hi = grid[i + 1];
    const double t_lo = grid[i];
    const Eigen::VectorXd rate_lo = ladder_rates(model, spec, t_lo);
    // h varies on the scale (u - t)/n as well as 1/rate.
    const double pin_rate = static_cast<double>(spec.height()) / (spec.u - t_lo);
    const double rmax = std::max({rate_hi.maxCoeff(), rate_lo.maxCoeff(), pin_rate});
    const std::size_t sub = substeps_for(rmax, t_hi - t_lo, kBackwardRateStep);
    const double dt = (t_hi - t_lo) / static_cast<double>(sub);
    Eigen::VectorXd r_start = rate_hi;
    for (std::size_t k = 0; k < sub; ++k) {
      const double t_start = t_hi - static_cast<double>(k) * dt;
      const double t_end = k + 1 == sub ? t_lo : t_start - dt;
      const Eigen::VectorXd r_mid = ladder_rates(model, spec, 0.5 * (t_start + t_end));
      Eigen::VectorXd r_end = k + 1 == sub ? rate_lo : ladder_rates(model, spec, t_end);
      backward_ladder_step(h, r_start, r_mid, r_end, t_start - t_end);
      r_start = std::move(r_end);
    }
    store(i, rate_lo);
    rate_hi = rate_lo;
  }
  return HField(spec, std::move(grid), std::move(log_h), std::move(log_rate));
}

HField solve_h(const IntensityModel& model, const BridgeSpec& spec, double h_step) {
  spec.validate();
  return solve_h_on_grid(model, spec, TimeGrid::for_window(spec.s, spec.u, h_step));
}

double bridge_intensity(const IntensityModel& model, const HField& h, double t, State z) {
  const auto& spec = h.spec();
  if (!(t >= spec.s - 1e-12 && t < spec.u)) {
    std::ostringstream os;
    os << "bridge intensity queried at t=" << t << " outside [" << spec.s << ", " << spec.u << ")";
    throw Error(ErrorCode::BadWindow, os.str());
  }
  if (z < spec.x || z > spec.y) {
    std::ostringstream os;
    os << "state " << z << " outside ladder [" << spec.x << ", " << spec.y << "]";
    throw Error(ErrorCode::OutOfDomain, os.str());
  }
  if (z == spec.y) return 0.0;
  const double lo = h.log_h_at(t, z);
  if (lo == kNegInf) {
    std::ostringstream os;
    os << "h(" << t << ", " << z << ") is zero in extended range; state unreachable from the grid";
    throw Error(ErrorCode::Underflow, os.str());
  }
  const double hi = h.log_h_at(t, z + 1);
  if (hi == kNegInf) return 0.0;
  return std::exp(log_eval(model, t, z) + hi - lo);
}

MarginalTable::MarginalTable(BridgeSpec spec, std::vector<double> times, Eigen::MatrixXd probs,
                             double max_drift)
    : spec_(spec), times_(std::move(times)), probs_(std::move(probs)), max_drift_(max_drift) {}

Eigen::VectorXd MarginalTable::row_at(double t) const {
  if (!spec_.contains_time(t)) {
    std::ostringstream os;
    os << "time " << t << " outside table window [" << spec_.s << ", " << spec_.u << "]";
    throw Error(ErrorCode::BadWindow, os.str());
  }
  auto it = std::lower_bound(times_.begin(), times_.end(), t);
  auto i = static_cast<std::size_t>(std::distance(times_.begin(), it));
  if (i < times_.size() && std::abs(times_[i] - t) <= 1e-9)
    return probs_.row(static_cast<Eigen::Index>(i)).transpose();
  if (i > 0 && std::abs(times_[i - 1] - t) <= 1e-9)
    return probs_.row(static_cast<Eigen::Index>(i - 1)).transpose();
  if (i == 0) return probs_.row(0).transpose();
  if (i >= times_.size()) return probs_.row(probs_.rows() - 1).transpose();
  const double w = (t - times_[i - 1]) / (times_[i] - times_[i - 1]);
  return ((1.0 - w) * probs_.row(static_cast<Eigen::Index>(i - 1)) +
          w * probs_.row(static_cast<Eigen::Index>(i)))
      .transpose();
}

double MarginalTable::tail(const Eigen::VectorXd& row, long i) {
  if (i < 0 || i >= row.size()) {
    std::ostringstream os;
    os << "tail index " << i << " outside [0, " << row.size() - 1 << "]";
    throw Error(ErrorCode::IndexOut, os.str());
  }
  return row.tail(row.size() - i).sum();
}

double MarginalTable::mean_at(double t) const {
  const Eigen::VectorXd row = row_at(t);
  const Eigen::VectorXd states =
      Eigen::VectorXd::LinSpaced(row.size(), static_cast<double>(spec_.x), static_cast<double>(spec_.y));
  return row.dot(states);
}

std::size_t forward_substeps(const IntensityModel& model, const BridgeSpec& spec,
                             const MarginalOptions& options) {
  spec.validate();
  const State n = spec.height();
  if (n == 0) return 1;
  const double len = spec.length();
  double rate_max = 0.0;
  for (int k = 0; k <= 100; ++k) {
    const double t = spec.s + len * k / 100.0;
    rate_max = std::max(rate_max, ladder_rates(model, spec, t).maxCoeff());
  }
  // Scale of the bridge's own jump rate: n pi'_lambda at its steepest, for the
  // extreme characteristics on the ladder.
  const auto bounds = characteristic_bounds(model, spec.s, spec.u, spec.x, spec.y - 1);
  double slope = 0.0;
  for (double lambda : {bounds.inf, bounds.sup}) {
    for (double tau : {0.0, 1.0}) slope = std::max(slope, pi_lambda_dt(lambda * len, tau));
  }
  const double bridge_rate = static_cast<double>(n) * slope / len;
  return substeps_for(std::max(rate_max, bridge_rate), options.h_step, options.rate_step_product);
}

MarginalTable marginal_table(const IntensityModel& model, const BridgeSpec& spec,
                             const MarginalOptions& options) {
  spec.validate();
  const std::size_t m = forward_substeps(model, spec, options);
  TimeGrid grid = TimeGrid::for_window(spec.s, spec.u, options.h_step / static_cast<double>(m));
  const auto n = static_cast<std::size_t>(spec.height() + 1);
  const std::size_t rows = grid.size();
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                                static_cast<Eigen::Index>(n));
  probs(0, 0) = 1.0;
  probs(static_cast<Eigen::Index>(rows - 1), static_cast<Eigen::Index>(n - 1)) = 1.0;
  double drift = 0.0;
  if (n > 1) {
    const HField h = solve_h_on_grid(model, spec, grid.refined());
    std::vector<double> q(n, 0.0);
    q[0] = 1.0;
    Eigen::VectorXd k_start = bridge_rates_at_node(h, 0);
    for (std::size_t i = 0; i + 2 < rows; ++i) {
      const Eigen::VectorXd k_mid = bridge_rates_at_node(h, 2 * i + 1);
      Eigen::VectorXd k_end = bridge_rates_at_node(h, 2 * i + 2);
      const double dt = grid[i + 1] - grid[i];
      const double kmax = std::max({k_start.maxCoeff(), k_mid.maxCoeff(), k_end.maxCoeff()});
      const std::size_t sub = substeps_for(kmax, dt, kForwardRateStep);
      if (sub == 1) {
        forward_ladder_step(q, k_start, k_mid, k_end, dt);
      } else {
        // Close to the pin the bridge rates grow like 1/(u - t).
        Eigen::VectorXd a = k_start;
        for (std::size_t k = 0; k < sub; ++k) {
          const double ta = grid[i] + dt * static_cast<double>(k) / static_cast<double>(sub);
          const double tb = grid[i] + dt * static_cast<double>(k + 1) / static_cast<double>(sub);
          const Eigen::VectorXd mid = bridge_rates_at_time(model, h, 0.5 * (ta + tb));
          Eigen::VectorXd b = k + 1 == sub ? k_end : bridge_rates_at_time(model, h, tb);
          forward_ladder_step(q, a, mid, b, tb - ta);
          a = std::move(b);
        }
      }
      k_start = std::move(k_end);
      double sum = 0.0;
      double negative = 0.0;
      for (double& v : q) {
        if (v < 0.0) {
          negative += -v;
          v = 0.0;
        }
        sum += v;
      }
      drift = std::max({drift, std::abs(1.0 - sum), negative});
      check_pinned_rows(spec, drift, options.conservation_tol);
      for (std::size_t j = 0; j < n; ++j) {
        q[j] /= sum;
        probs(static_cast<Eigen::Index>(i + 1), static_cast<Eigen::Index>(j)) = q[j];
      }
    }
  } else {
    probs.setOnes();
  }
  return MarginalTable(spec, grid.nodes(), std::move(probs), drift);
}

MarginalTable marginal_table(const IntensityModel& model, const BridgeSpec& spec, double h_step) {
  MarginalOptions options;
  options.h_step = h_step;
  return marginal_table(model, spec, options);
}

MarginalTable two_sided_table(const IntensityModel& model, const BridgeSpec& spec,
                              const MarginalOptions& options) {
  spec.validate();
  const std::size_t m = forward_substeps(model, spec, options);
  TimeGrid grid = TimeGrid::for_window(spec.s, spec.u, options.h_step / static_cast<double>(m));
  const auto n = static_cast<std::size_t>(spec.height() + 1);
  const std::size_t rows = grid.size();
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(rows),
                                                static_cast<Eigen::Index>(n));
  probs(0, 0) = 1.0;
  probs(static_cast<Eigen::Index>(rows - 1), static_cast<Eigen::Index>(n - 1)) = 1.0;
  if (n == 1) {
    probs.setOnes();
    return MarginalTable(spec, grid.nodes(), std::move(probs), 0.0);
  }
  const HField h = solve_h_on_grid(model, spec, grid);
  std::vector<ExtReal> f(n, ExtReal(0.0));
  f[0] = ExtReal(1.0);
  Eigen::VectorXd rate_lo = ladder_rates(model, spec, grid[0]);
  for (std::size_t i = 0; i + 2 < rows; ++i) {
    const double t_lo = grid[i];
    const double t_hi = grid[i + 1];
    const Eigen::VectorXd rate_hi = ladder_rates(model, spec, t_hi);
    const double rmax = std::max(rate_lo.maxCoeff(), rate_hi.maxCoeff());
    const std::size_t sub = substeps_for(rmax, t_hi - t_lo, kBackwardRateStep);
    const double dt = (t_hi - t_lo) / static_cast<double>(sub);
    Eigen::VectorXd r_start = rate_lo;
    for (std::size_t k = 0; k < sub; ++k) {
      const double t_start = t_lo + static_cast<double>(k) * dt;
      const double t_end = k + 1 == sub ? t_hi : t_start + dt;
      const Eigen::VectorXd r_mid = ladder_rates(model, spec, 0.5 * (t_start + t_end));
      Eigen::VectorXd r_end = k + 1 == sub ? rate_hi : ladder_rates(model, spec, t_end);
      forward_ladder_step(f, r_start, r_mid, r_end, t_end - t_start);
      r_start = std::move(r_end);
    }
    rate_lo = rate_hi;

    const auto row = static_cast<Eigen::Index>(i + 1);
    std::vector<ExtReal> joint(n);
    ExtReal total(0.0);
    for (std::size_t j = 0; j < n; ++j) {
      const double lh = h.log_h()(row, static_cast<Eigen::Index>(j));
      joint[j] = f[j].is_negative() ? ExtReal(0.0) : f[j] * ExtReal::from_log(lh);
      total += joint[j];
    }
    for (std::size_t j = 0; j < n; ++j)
      probs(row, static_cast<Eigen::Index>(j)) = (joint[j] / total).to_double();
  }
  return MarginalTable(spec, grid.nodes(), std::move(probs), 0.0);
}

std::vector<CurvePoint> mean_curve(const MarginalTable& table) {
  const auto& spec = table.spec();
  const auto& probs = table.probs();
  const Eigen::VectorXd states = Eigen::VectorXd::LinSpaced(
      probs.cols(), static_cast<double>(spec.x), static_cast<double>(spec.y));
  std::vector<CurvePoint> out;
  out.reserve(table.times().size());
  for (std::size_t i = 0; i < table.times().size(); ++i) {
    out.push_back({table.times()[i], probs.row(static_cast<Eigen::Index>(i)).dot(states)});
  }
  out.front().value = static_cast<double>(spec.x);
  out.back().value = static_cast<double>(spec.y);
  return out;
}

std::vector<CurvePoint> mean_curve(const MarginalTable& table, std::size_t intervals) {
  if (intervals < 1) throw Error(ErrorCode::GridTooCoarse, "mean curve needs at least one interval");
  const auto& spec = table.spec();
  std::vector<CurvePoint> out;
  out.reserve(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k) {
    const double t = k == intervals ? spec.u
                                    : spec.s + spec.length() * static_cast<double>(k) /
                                                   static_cast<double>(intervals);
    out.push_back({t, table.mean_at(t)});
  }
  out.front().value = static_cast<double>(spec.x);
  out.back().value = static_cast<double>(spec.y);
  return out;
}

std::vector<CurvePoint> second_differences(const std::vector<CurvePoint>& curve) {
  if (curve.size() < 3) {
    throw Error(ErrorCode::GridTooCoarse, "second differences need at least 3 points");
  }
  const double step = curve[1].t - curve[0].t;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double d = curve[i].t - curve[i - 1].t;
    if (std::abs(d - step) > 1e-6 * std::abs(step)) {
      throw Error(ErrorCode::BadStep, "second differences need a uniform time grid");
    }
  }
  std::vector<CurvePoint> out;
  out.reserve(curve.size() - 2);
  for (std::size_t i = 1; i + 1 < curve.size(); ++i) {
    out.push_back({curve[i].t,
                   (curve[i + 1].value - 2.0 * curve[i].value + curve[i - 1].value) / (step * step)});
  }
  return out;
}

}  // namespace cbridge
