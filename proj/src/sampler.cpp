#include "cbridge/sampler.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <sstream>

#include "cbridge/analytic.hpp"
#include "cbridge/error.hpp"

namespace cbridge {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double exponential(std::mt19937_64& gen, double rate) { return -std::log(open_uniform(gen)) / rate; }

// Gauss-Kronrod 7-15 on [a,b]; returns the Kronrod estimate and |K15 - G7|.
double gk15(const std::function<double(double)>& f, double a, double b, double& err) {
  static constexpr std::array<double, 8> xk = {0.991455371120812639206854697526329, 0.949107912342758524526189684047851,
                                               0.864864423359769072789712788640926, 0.741531185599394439863864773280788,
                                               0.586087235467691130294144845693013, 0.405845151377397166906606412076961,
                                               0.207784955007898467600689403773245, 0.000000000000000000000000000000000};
  static constexpr std::array<double, 8> wk = {0.022935322010529224963732008058970, 0.063092092629978553290700663189204,
                                               0.104790010322250183839876322541518, 0.140653259715525918745189590510238,
                                               0.169004726639267902826583426598550, 0.190350578064785409913256402421014,
                                               0.204432940075298892414161999234649, 0.209482141084727828012999174891714};
  static constexpr std::array<double, 4> wg = {0.129484966168869693270611432679082, 0.279705391489276667901467771423780,
                                               0.381830050505118944950369775488975, 0.417959183673469387755102040816327};
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  const double fc = f(c);
  double kron = wk[7] * fc;
  double gauss = wg[3] * fc;
  for (int j = 0; j < 7; ++j) {
    const double dx = h * xk[static_cast<std::size_t>(j)];
    const double f1 = f(c - dx);
    const double f2 = f(c + dx);
    kron += wk[static_cast<std::size_t>(j)] * (f1 + f2);
    if (j % 2 == 1) gauss += wg[static_cast<std::size_t>(j / 2)] * (f1 + f2);
  }
  err = std::abs((kron - gauss) * h);
  return kron * h;
}

double adaptive(const std::function<double(double)>& f, double a, double b, double tol, int depth = 0) {
  double err = 0.0;
  const double whole = gk15(f, a, b, err);
  if (err <= tol * std::abs(whole) || err < 1e-300 || depth >= 30) return whole;
  const double mid = 0.5 * (a + b);
  return adaptive(f, a, mid, tol, depth + 1) + adaptive(f, mid, b, tol, depth + 1);
}

// Integral over lower < t_k < ... < t_n of prod exp(xi_j(t_j)), with t_j <= cut
// for j <= last_cut and t_j <= u otherwise.
double nested(const XiPotential& pot, long k, double lower, double cut, long last_cut, double tol) {
  if (k > pot.n()) return 1.0;
  const double upper = k <= last_cut ? cut : pot.spec().u;
  if (lower >= upper) return 0.0;
  const auto f = [&](double r) { return std::exp(pot.xi(k, r)) * nested(pot, k + 1, r, cut, last_cut, tol); };
  return adaptive(f, lower, upper, tol);
}

}  // namespace

State PathSample::state_at(double t) const {
  const auto it = std::upper_bound(jump_times.begin(), jump_times.end(), t);
  return x0 + static_cast<State>(it - jump_times.begin());
}

std::mt19937_64 replica_engine(std::uint64_t seed, std::uint64_t replica) {
  std::uint64_t state = seed;
  const std::uint64_t a = splitmix64(state);
  state = a ^ (replica * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL);
  std::array<std::uint32_t, 8> words{};
  for (std::size_t i = 0; i < words.size(); i += 2) {
    const std::uint64_t v = splitmix64(state);
    words[i] = static_cast<std::uint32_t>(v);
    words[i + 1] = static_cast<std::uint32_t>(v >> 32);
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

double open_uniform(std::mt19937_64& gen) {
  // (k + 0.5) / 2^53 never hits 0 or 1.
  return (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
}

// ---------------------------------------------------------------- XiPotential

XiPotential::XiPotential(BridgeSpec spec, std::vector<double> times, Eigen::MatrixXd xi, Eigen::MatrixXd slope)
    : spec_(spec), times_(std::move(times)), xi_(std::move(xi)), slope_(std::move(slope)) {}

double XiPotential::xi(long j, double t) const {
  if (j < 1 || j > n()) {
    std::ostringstream os;
    os << "jump index " << j << " outside [1, " << n() << "]";
    throw Error(ErrorCode::IndexOut, os.str());
  }
  const auto col = static_cast<Eigen::Index>(j - 1);
  if (t <= times_.front()) return xi_(0, col);
  if (t >= times_.back()) return xi_(static_cast<Eigen::Index>(times_.size() - 1), col);
  const auto it = std::upper_bound(times_.begin(), times_.end(), t);
  const auto i = static_cast<Eigen::Index>(it - times_.begin() - 1);
  const double t0 = times_[static_cast<std::size_t>(i)];
  const double h = times_[static_cast<std::size_t>(i + 1)] - t0;
  const double w = (t - t0) / h;
  const double w2 = w * w;
  const double w3 = w2 * w;
  return (2 * w3 - 3 * w2 + 1) * xi_(i, col) + (w3 - 2 * w2 + w) * h * slope_(i, col) +
         (-2 * w3 + 3 * w2) * xi_(i + 1, col) + (w3 - w2) * h * slope_(i + 1, col);
}

double XiPotential::max_excess(long j, double lambda) const {
  const auto col = static_cast<Eigen::Index>(j - 1);
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < times_.size(); ++i)
    best = std::max(best, xi_(static_cast<Eigen::Index>(i), col) - lambda * (times_[i] - spec_.s));
  return best;
}

XiPotential xi_tables(const IntensityModel& model, const BridgeSpec& spec, double grid_step) {
  spec.validate();
  if (!(grid_step > 0.0) || grid_step >= spec.length()) throw Error(ErrorCode::BadStep, "xi grid step must lie in (0, u - s)");
  const auto steps = static_cast<std::size_t>(std::ceil(spec.length() / grid_step - 1e-9));
  std::vector<double> times(steps + 1);
  for (std::size_t i = 0; i <= steps; ++i) times[i] = spec.s + spec.length() * static_cast<double>(i) / static_cast<double>(steps);
  times.back() = spec.u;
  const auto n = static_cast<Eigen::Index>(spec.height());
  const auto rows = static_cast<Eigen::Index>(times.size());
  Eigen::MatrixXd xi = Eigen::MatrixXd::Zero(rows, n);
  Eigen::MatrixXd slope(rows, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) slope(i, j) = characteristic(model, times[static_cast<std::size_t>(i)], spec.x + j);
    for (Eigen::Index i = 1; i < rows; ++i) {
      const double dt = times[static_cast<std::size_t>(i)] - times[static_cast<std::size_t>(i - 1)];
      xi(i, j) = xi(i - 1, j) + 0.5 * dt * (slope(i - 1, j) + slope(i, j));
    }
  }
  return XiPotential(spec, std::move(times), std::move(xi), std::move(slope));
}

double log_density_unnormalized(const XiPotential& pot, const std::vector<double>& t_vec) {
  if (static_cast<long>(t_vec.size()) != pot.n()) {
    std::ostringstream os;
    os << "expected " << pot.n() << " jump times, got " << t_vec.size();
    throw Error(ErrorCode::IndexOut, os.str());
  }
  double acc = 0.0;
  for (std::size_t j = 0; j < t_vec.size(); ++j) {
    if (j > 0 && !(t_vec[j] > t_vec[j - 1])) throw Error(ErrorCode::NotSorted, "jump times must be strictly increasing");
    if (!(t_vec[j] > pot.spec().s && t_vec[j] < pot.spec().u))
      throw Error(ErrorCode::BadWindow, "jump times must lie inside (s,u)");
    acc += pot.xi(static_cast<long>(j) + 1, t_vec[j]);
  }
  return acc;
}

double density_unnormalized(const XiPotential& pot, const std::vector<double>& t_vec) {
  return std::exp(log_density_unnormalized(pot, t_vec));
}

double simplex_oracle_marginal(const XiPotential& pot, double t, long i, double tol) {
  if (pot.n() > 4) {
    std::ostringstream os;
    os << "simplex quadrature handles n <= 4, got n = " << pot.n();
    throw Error(ErrorCode::OracleScale, os.str());
  }
  if (i < 1 || i > pot.n()) {
    std::ostringstream os;
    os << "jump index " << i << " outside [1, " << pot.n() << "]";
    throw Error(ErrorCode::IndexOut, os.str());
  }
  const auto& spec = pot.spec();
  if (!spec.contains_time(t)) throw Error(ErrorCode::BadWindow, "time outside the bridge window");
  t = std::clamp(t, spec.s, spec.u);
  const double z = nested(pot, 1, spec.s, spec.u, 0, tol);
  const double part = nested(pot, 1, spec.s, t, i, tol);
  return std::clamp(part / z, 0.0, 1.0);
}

// ---------------------------------------------------------------- samplers

std::vector<PathSample> sample_constant(double lambda, const BridgeSpec& spec, std::size_t count, std::uint64_t seed) {
  spec.validate();
  const auto n = static_cast<std::size_t>(spec.height());
  const double len = spec.length();
  const double lam = lambda * len;  // rate on the rescaled window [0,1]
  std::vector<PathSample> out(count);
  for (std::size_t r = 0; r < count; ++r) {
    auto gen = replica_engine(seed, r);
    auto& path = out[r];
    path.x0 = spec.x;
    path.jump_times.resize(n);
    for (auto& t : path.jump_times) {
      const double u = open_uniform(gen);
      double tau;
      if (lam == 0.0) {
        tau = u;
      } else if (lam > 0.0) {
        tau = 1.0 + std::log(u + (1.0 - u) * std::exp(-lam)) / lam;
      } else {
        tau = std::log1p(u * std::expm1(lam)) / lam;
      }
      t = spec.s + len * std::clamp(tau, 0.0, 1.0);
    }
    std::sort(path.jump_times.begin(), path.jump_times.end());
  }
  return out;
}

BridgeSampler::BridgeSampler(IntensityModel model, HField h) : model_(std::move(model)), h_(std::move(h)) {
  const auto& sp = h_.spec();
  const double stop = sp.u - kHorizonGap;
  edges_.push_back(sp.s);
  while (edges_.back() < stop) {
    const double t = edges_.back();
    double next = sp.u - t > 2 * kBlock ? t + kBlock : t + 0.5 * (sp.u - t);
    if (next > stop || stop - next < kHorizonGap) next = stop;
    edges_.push_back(next);
  }
  const auto blocks = static_cast<Eigen::Index>(edges_.size() - 1);
  const auto states = static_cast<Eigen::Index>(sp.height());
  majorant_ = Eigen::MatrixXd::Zero(blocks, states);
  const auto& grid = h_.grid();
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const double lo = edges_[static_cast<std::size_t>(b)];
    const double hi = edges_[static_cast<std::size_t>(b + 1)];
    const auto first = std::lower_bound(grid.nodes().begin(), grid.nodes().end(), lo) - grid.nodes().begin();
    for (Eigen::Index j = 0; j < states; ++j) {
      const State z = sp.x + j;
      double m = std::max(rate(lo, z), rate(hi, z));
      for (auto i = static_cast<std::size_t>(first); i + 1 < grid.size() && grid[i] <= hi; ++i) {
        const double lr = h_.log_bridge_rate_node(i, z);
        if (std::isfinite(lr)) m = std::max(m, std::exp(lr));
      }
      majorant_(b, j) = kSafety * m;
    }
  }
}

double BridgeSampler::rate(double t, State z) const {
  const auto& sp = h_.spec();
  if (z >= sp.y) return 0.0;
  const double lo = h_.log_h_at(t, z);
  const double hi = h_.log_h_at(t, z + 1);
  if (lo == -std::numeric_limits<double>::infinity()) {
    std::ostringstream os;
    os << "h(" << t << ", " << z << ") underflows to zero";
    throw Error(ErrorCode::Underflow, os.str());
  }
  return std::exp(log_eval(model_, t, z) + hi - lo);
}

double BridgeSampler::majorant(std::size_t block, State z) const {
  return majorant_(static_cast<Eigen::Index>(block), static_cast<Eigen::Index>(z - h_.spec().x));
}

PathSample BridgeSampler::draw(std::mt19937_64& gen, ThinningStats& stats) const {
  const auto& sp = h_.spec();
  PathSample path;
  path.x0 = sp.x;
  State z = sp.x;
  double t = sp.s;
  std::size_t block = 0;
  int refreshes = 0;
  while (z < sp.y && block + 1 < edges_.size()) {
    const double end = edges_[block + 1];
    double factor = 1.0;
    double anchor = t;
    while (true) {
      const double m = factor * majorant(block, z);
      t += exponential(gen, m);
      if (t >= end) {
        t = end;
        ++block;
        break;
      }
      ++stats.proposals;
      const double r = rate(t, z);
      if (r > m) {
        // Stale majorant: enlarge it and redo this stretch of the block.
        ++stats.refreshes;
        if (++refreshes > kMaxRefreshes) {
          std::ostringstream os;
          os << "bridge rate " << r << " exceeds majorant " << m << " at t=" << t << " after " << kMaxRefreshes
             << " refreshes";
          throw Error(ErrorCode::MajorantBreach, os.str());
        }
        factor *= 2.0;
        t = anchor;
        continue;
      }
      if (open_uniform(gen) * m <= r) {
        ++stats.accepted;
        path.jump_times.push_back(t);
        ++z;
        anchor = t;
        factor = 1.0;
        if (z == sp.y) break;
      }
    }
  }
  if (z != sp.y) {
    std::ostringstream os;
    os << "path reached " << z << " instead of " << sp.y << " by t=" << t;
    throw Error(ErrorCode::PinMiss, os.str());
  }
  return path;
}

std::vector<PathSample> sample_bridge(const IntensityModel& model, const BridgeSpec& spec, const HField& h,
                                      std::size_t count, std::uint64_t seed, ThinningStats* stats) {
  spec.validate();
  const auto& hs = h.spec();
  if (hs.x != spec.x || hs.y != spec.y || hs.s != spec.s || hs.u != spec.u)
    throw Error(ErrorCode::BadWindow, "h field was solved for a different bridge");
  ThinningStats local;
  std::vector<PathSample> out(count);
  if (spec.height() == 0) {
    for (auto& p : out) p.x0 = spec.x;
  } else {
    const BridgeSampler sampler(model, h);
    for (std::size_t r = 0; r < count; ++r) {
      auto gen = replica_engine(seed, r);
      out[r] = sampler.draw(gen, local);
    }
  }
  if (stats) *stats = local;
  return out;
}

std::vector<PathSample> sample_rejection(const IntensityModel& model, const BridgeSpec& spec, std::size_t count,
                                         std::uint64_t seed, RejectionStats* stats) {
  spec.validate();
  const long n = static_cast<long>(spec.height());
  if (n > 20) {
    std::ostringstream os;
    os << "rejection sampling is limited to n <= 20, got " << n;
    throw Error(ErrorCode::ResourceCap, os.str());
  }
  RejectionStats local;
  std::vector<PathSample> out(count);
  if (n == 0) {
    for (auto& p : out) p.x0 = spec.x;
    if (stats) *stats = local;
    return out;
  }
  const auto bounds = characteristic_bounds(model, spec.s, spec.u, spec.x, spec.y - 1);
  const double lambda = 0.5 * (bounds.inf + bounds.sup);
  local.proposal_lambda = lambda;
  const XiPotential pot = xi_tables(model, spec);
  double ceiling = 0.0;
  for (long j = 1; j <= n; ++j) ceiling += pot.max_excess(j, lambda);
  ceiling += 1e-9;
  constexpr std::uint64_t kMaxProposals = 100000000ULL;
  for (std::size_t r = 0; r < count; ++r) {
    // Proposals for replica r come from their own stream.
    const std::uint64_t sub_seed = replica_engine(seed, r)();
    for (std::uint64_t attempt = 0;; ++attempt) {
      if (++local.proposals > kMaxProposals)
        throw Error(ErrorCode::ResourceCap, "rejection sampler exceeded its proposal budget");
      auto prop = sample_constant(lambda, spec, 1, sub_seed + attempt).front();
      auto gen = replica_engine(~sub_seed, attempt);
      double excess = log_density_unnormalized(pot, prop.jump_times);
      for (double t : prop.jump_times) excess -= lambda * (t - spec.s);
      if (std::log(open_uniform(gen)) <= excess - ceiling) {
        ++local.accepted;
        out[r] = std::move(prop);
        break;
      }
    }
  }
  if (stats) *stats = local;
  return out;
}

double ks_statistic(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw Error(ErrorCode::EmptyRange, "KS statistic needs two non-empty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  return d;
}

double ks_critical(std::size_t n, std::size_t m, double alpha) {
  const double c = std::sqrt(-0.5 * std::log(alpha / 2.0));
  const double nd = static_cast<double>(n);
  const double md = static_cast<double>(m);
  return c * std::sqrt((nd + md) / (nd * md));
}

}  // namespace cbridge
