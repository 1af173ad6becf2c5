#pragma once

#include <cmath>
#include <vector>

#include "cbridge/bridge_spec.hpp"

namespace cbridge {

/// (e^{lambda t} - 1) / (e^lambda - 1), extended continuously to lambda = 0.
///
/// Uses the first-order series t + lambda t (t-1)/2 for |lambda| < 1e-6 and an
/// overflow-free rescaling for large positive lambda.
template <typename Scalar>
Scalar pi_lambda(Scalar lambda, Scalar t) {
  using std::abs;
  using std::exp;
  using std::expm1;
  if (lambda == Scalar(0)) return t;
  if (abs(lambda) < Scalar(1e-6)) return t + lambda * t * (t - Scalar(1)) / Scalar(2);
  if (lambda > Scalar(1)) {
    return exp(lambda * (t - Scalar(1))) * expm1(-lambda * t) / expm1(-lambda);
  }
  return expm1(lambda * t) / expm1(lambda);
}

/// d/dt pi_lambda(t).
template <typename Scalar>
Scalar pi_lambda_dt(Scalar lambda, Scalar t) {
  using std::abs;
  using std::exp;
  using std::expm1;
  if (abs(lambda) < Scalar(1e-6)) return Scalar(1) + lambda * (t - Scalar(0.5));
  if (lambda > Scalar(1)) return lambda * exp(lambda * (t - Scalar(1))) / -expm1(-lambda);
  return lambda * exp(lambda * t) / expm1(lambda);
}

/// pi over the window [s,u]: (e^{lambda(t-s)} - 1) / (e^{lambda(u-s)} - 1).
double pi_shifted(double lambda, double s, double u, double t);

/// Binomial law with n trials and success probability p.
struct BinomialSpec {
  long n = 0;
  double p = 0.0;

  double pmf(long k) const;
  std::vector<double> pmf_vector() const;
  /// P(K >= i) for 0 <= i <= n.
  double tail(long i) const;
  double mean() const noexcept { return static_cast<double>(n) * p; }
};

double binomial_tail(const BinomialSpec& spec, long i);

/// Marginal of X_t - x under the bridge of any process whose characteristic is
/// identically lambda on the ladder.
BinomialSpec constant_char_marginal(const BridgeSpec& spec, double lambda, double t);

/// x + (y - x) pi^{s,u}_lambda(t): upper bound on the bridge mean when lambda
/// bounds the characteristic from below.
double mean_bound(const BridgeSpec& spec, double lambda, double t);

}  // namespace cbridge
