#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cbridge/bridge_spec.hpp"
#include "cbridge/engine.hpp"
#include "cbridge/intensity.hpp"

namespace cbridge {

/// A counting path on [s,u]: start state and strictly increasing jump times.
struct PathSample {
  State x0 = 0;
  std::vector<double> jump_times;

  std::size_t n() const noexcept { return jump_times.size(); }
  /// x0 + #{j : t_j <= t}.
  State state_at(double t) const;
};

/// Independent generator for replica `replica` of a run seeded with `seed`.
/// Streams depend only on (seed, replica), never on scheduling.
std::mt19937_64 replica_engine(std::uint64_t seed, std::uint64_t replica);

/// Uniform on the open interval (0,1), built from the top 53 bits.
double open_uniform(std::mt19937_64& gen);

/// xi_j(t) = integral of Xi(r, x + j - 1) dr from s to t, j = 1..n, tabulated
/// with the cumulative trapezoid rule.
class XiPotential {
 public:
  XiPotential(BridgeSpec spec, std::vector<double> times, Eigen::MatrixXd xi, Eigen::MatrixXd slope);

  const BridgeSpec& spec() const noexcept { return spec_; }
  long n() const noexcept { return static_cast<long>(spec_.height()); }
  const std::vector<double>& times() const noexcept { return times_; }

  /// xi_j(t) for 1 <= j <= n, cubic Hermite between nodes with Xi as slope.
  double xi(long j, double t) const;
  /// Largest value of xi_j(t) - lambda (t - s) over the table nodes.
  double max_excess(long j, double lambda) const;

 private:
  BridgeSpec spec_;
  std::vector<double> times_;
  Eigen::MatrixXd xi_;     // rows: nodes, cols: j - 1
  Eigen::MatrixXd slope_;  // Xi at the nodes
};

XiPotential xi_tables(const IntensityModel& model, const BridgeSpec& spec, double grid_step = 1e-4);

/// exp(sum_j xi_j(t_j)) for a strictly increasing vector of n times in (s,u).
double density_unnormalized(const XiPotential& pot, const std::vector<double>& t_vec);
/// Same, as a log.
double log_density_unnormalized(const XiPotential& pot, const std::vector<double>& t_vec);

/// P(T_i <= t) under the normalised simplex density, by nested adaptive
/// Gauss-Kronrod quadrature. Only for n <= 4.
double simplex_oracle_marginal(const XiPotential& pot, double t, long i, double tol = 1e-8);

/// Exact sampler for a constant characteristic lambda: n i.i.d. draws with
/// density proportional to exp(lambda t) on the window, sorted.
std::vector<PathSample> sample_constant(double lambda, const BridgeSpec& spec, std::size_t count,
                                        std::uint64_t seed);

struct ThinningStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  std::uint64_t refreshes = 0;
};

/// Thinning sampler for the h-transformed process. Majorants are piecewise
/// constant on blocks of 0.01 time units, halving towards the pin.
class BridgeSampler {
 public:
  static constexpr double kBlock = 0.01;
  static constexpr double kHorizonGap = 1e-9;
  static constexpr double kSafety = 1.05;
  static constexpr int kMaxRefreshes = 100;

  BridgeSampler(IntensityModel model, HField h);

  const BridgeSpec& spec() const noexcept { return h_.spec(); }
  /// Bridge jump rate at (t, z), using the interpolated h.
  double rate(double t, State z) const;
  PathSample draw(std::mt19937_64& gen, ThinningStats& stats) const;
  const std::vector<double>& block_edges() const noexcept { return edges_; }

 private:
  double majorant(std::size_t block, State z) const;

  IntensityModel model_;
  HField h_;
  std::vector<double> edges_;
  Eigen::MatrixXd majorant_;  // rows: blocks, cols: states x..y-1
};

std::vector<PathSample> sample_bridge(const IntensityModel& model, const BridgeSpec& spec, const HField& h,
                                      std::size_t count, std::uint64_t seed, ThinningStats* stats = nullptr);

struct RejectionStats {
  std::uint64_t proposals = 0;
  std::uint64_t accepted = 0;
  double proposal_lambda = 0.0;
};

/// Rejection sampler of the simplex density with a constant-characteristic
/// proposal. Validation device only: refuses n > 20.
std::vector<PathSample> sample_rejection(const IntensityModel& model, const BridgeSpec& spec,
                                         std::size_t count, std::uint64_t seed,
                                         RejectionStats* stats = nullptr);

/// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b);
/// Asymptotic two-sample critical value at level alpha.
double ks_critical(std::size_t n, std::size_t m, double alpha = 0.01);

}  // namespace cbridge
