#include "cbridge/analytic.hpp"

#include <algorithm>
#include <sstream>

namespace cbridge {

double pi_shifted(double lambda, double s, double u, double t) {
  if (!(s < u) || !(t >= s && t <= u)) {
    std::ostringstream os;
    os << "pi_shifted needs s < u and t in [s,u], got s=" << s << " u=" << u << " t=" << t;
    throw Error(ErrorCode::BadWindow, os.str());
  }
  const double len = u - s;
  return pi_lambda(lambda * len, (t - s) / len);
}

double BinomialSpec::pmf(long k) const {
  if (k < 0 || k > n) return 0.0;
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double nd = static_cast<double>(n);
  const double kd = static_cast<double>(k);
  const double log_choose = std::lgamma(nd + 1) - std::lgamma(kd + 1) - std::lgamma(nd - kd + 1);
  return std::exp(log_choose + kd * std::log(p) + (nd - kd) * std::log1p(-p));
}

std::vector<double> BinomialSpec::pmf_vector() const {
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  for (long k = 0; k <= n; ++k) out[static_cast<std::size_t>(k)] = pmf(k);
  return out;
}

double BinomialSpec::tail(long i) const {
  if (i < 0 || i > n) {
    std::ostringstream os;
    os << "tail index " << i << " outside [0, " << n << "]";
    throw Error(ErrorCode::IndexOut, os.str());
  }
  if (i == 0) return 1.0;
  // Sum whichever side is the smaller tail, smallest terms first.
  if (static_cast<double>(i) > mean()) {
    double acc = 0.0;
    for (long k = n; k >= i; --k) acc += pmf(k);
    return std::clamp(acc, 0.0, 1.0);
  }
  double acc = 0.0;
  for (long k = 0; k < i; ++k) acc += pmf(k);
  return std::clamp(1.0 - acc, 0.0, 1.0);
}

double binomial_tail(const BinomialSpec& spec, long i) { return spec.tail(i); }

BinomialSpec constant_char_marginal(const BridgeSpec& spec, double lambda, double t) {
  spec.validate();
  if (!spec.contains_time(t)) {
    std::ostringstream os;
    os << "time " << t << " outside bridge window [" << spec.s << ", " << spec.u << "]";
    throw Error(ErrorCode::BadWindow, os.str());
  }
  t = std::clamp(t, spec.s, spec.u);
  return {static_cast<long>(spec.height()), pi_shifted(lambda, spec.s, spec.u, t)};
}

double mean_bound(const BridgeSpec& spec, double lambda, double t) {
  const auto marginal = constant_char_marginal(spec, lambda, t);
  return static_cast<double>(spec.x) + marginal.mean();
}

}  // namespace cbridge
