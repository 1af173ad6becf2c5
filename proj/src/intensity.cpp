#include "cbridge/intensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cbridge/error.hpp"

namespace cbridge {

namespace {

constexpr double kTimeSlack = 1e-12;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

// Largest integer z with slope * z + offset > 0, for slope < 0.
State last_positive_state(double slope, double offset) {
  auto c = static_cast<State>(std::floor(offset / -slope));
  while (slope * static_cast<double>(c) + offset <= 0.0) --c;
  return c;
}

Eigen::MatrixXd centered_time_derivative(const std::vector<double>& t, const Eigen::MatrixXd& f) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd d(f.rows(), f.cols());
  if (n == 2) {
    d.row(0) = (f.row(1) - f.row(0)) / (t[1] - t[0]);
    d.row(1) = d.row(0);
    return d;
  }
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    const double h1 = t[i] - t[i - 1];
    const double h2 = t[i + 1] - t[i];
    d.row(i) = -h2 / (h1 * (h1 + h2)) * f.row(i - 1) + (h2 - h1) / (h1 * h2) * f.row(i) +
               h1 / (h2 * (h1 + h2)) * f.row(i + 1);
  }
  {
    const double h1 = t[1] - t[0];
    const double h2 = t[2] - t[1];
    d.row(0) = -(2 * h1 + h2) / (h1 * (h1 + h2)) * f.row(0) + (h1 + h2) / (h1 * h2) * f.row(1) -
               h1 / (h2 * (h1 + h2)) * f.row(2);
  }
  {
    const double h1 = t[n - 2] - t[n - 3];
    const double h2 = t[n - 1] - t[n - 2];
    d.row(n - 1) = h2 / (h1 * (h1 + h2)) * f.row(n - 3) - (h1 + h2) / (h1 * h2) * f.row(n - 2) +
                   (2 * h2 + h1) / (h2 * (h1 + h2)) * f.row(n - 1);
  }
  return d;
}

struct LogHermite {
  double value;
  double slope;
};

// Cubic Hermite interpolation of log l(., z) on the table.
LogHermite tabulated_log(const Tabulated& tab, double t, State z) {
  const auto& g = tab.t_grid;
  if (t < g.front() - kTimeSlack || t > g.back() + kTimeSlack) {
    std::ostringstream os;
    os << "t=" << t << " outside table hull [" << g.front() << ", " << g.back() << "]";
    throw Error(ErrorCode::TabulationGap, os.str());
  }
  const State col = z - tab.z_min;
  if (col < 0 || col >= tab.rates.cols()) {
    std::ostringstream os;
    os << "state " << z << " outside table states [" << tab.z_min << ", "
       << tab.z_min + tab.rates.cols() - 1 << "]";
    throw Error(ErrorCode::TabulationGap, os.str());
  }
  t = std::clamp(t, g.front(), g.back());
  auto it = std::upper_bound(g.begin(), g.end(), t);
  auto i1 = static_cast<Eigen::Index>(std::distance(g.begin(), it));
  i1 = std::clamp<Eigen::Index>(i1, 1, static_cast<Eigen::Index>(g.size()) - 1);
  const Eigen::Index i0 = i1 - 1;
  const double h = g[i1] - g[i0];
  const double s = (t - g[i0]) / h;
  const double l0 = tab.rates(i0, col);
  const double l1 = tab.rates(i1, col);
  const double g0 = std::log(l0);
  const double g1 = std::log(l1);
  const double d0 = tab.rates_dt(i0, col) / l0;
  const double d1 = tab.rates_dt(i1, col) / l1;
  const double s2 = s * s;
  const double s3 = s2 * s;
  const double value = (2 * s3 - 3 * s2 + 1) * g0 + (s3 - 2 * s2 + s) * h * d0 +
                       (-2 * s3 + 3 * s2) * g1 + (s3 - s2) * h * d1;
  const double slope = ((6 * s2 - 6 * s) * g0 + (-6 * s2 + 6 * s) * g1) / h +
                       (3 * s2 - 4 * s + 1) * d0 + (3 * s2 - 2 * s) * d1;
  return {value, slope};
}

void check_domain(const IntensityModel& model, double t, State z) {
  if (!(t >= -kTimeSlack && t <= 1.0 + kTimeSlack)) {
    std::ostringstream os;
    os << "time " << t << " outside [0,1]";
    throw Error(ErrorCode::OutOfDomain, os.str());
  }
  if (z < model.state_floor()) {
    std::ostringstream os;
    os << "state " << z << " below state_floor " << model.state_floor();
    throw Error(ErrorCode::OutOfDomain, os.str());
  }
  if (std::holds_alternative<Tabulated>(model.family())) return;
  if (auto ceiling = model.state_ceiling(); ceiling && z > *ceiling) {
    std::ostringstream os;
    os << "state " << z << " above the last state with positive rate (" << *ceiling << ")";
    throw Error(ErrorCode::OutOfDomain, os.str());
  }
}

}  // namespace

IntensityModel::IntensityModel(Family family, State state_floor)
    : family_(std::move(family)), state_floor_(state_floor) {
  if (state_floor_ < 0) throw Error(ErrorCode::InvalidModel, "state_floor must be >= 0");
  const double floor = static_cast<double>(state_floor_);
  std::visit(
      Overloaded{
          [](const Poisson& p) {
            if (!(p.alpha > 0)) throw Error(ErrorCode::InvalidModel, "poisson alpha must be > 0");
          },
          [&](const SpaceLinear& p) {
            if (!(p.alpha > 0)) throw Error(ErrorCode::InvalidModel, "space_linear alpha must be > 0");
            if (!(p.lambda * floor + p.alpha > 0))
              throw Error(ErrorCode::InvalidModel, "space_linear rate not positive at state_floor");
            if (p.lambda < 0) state_ceiling_ = last_positive_state(p.lambda, p.alpha);
          },
          [](const TimeExponential& p) {
            if (!(p.alpha > 0))
              throw Error(ErrorCode::InvalidModel, "time_exponential alpha must be > 0");
          },
          [&](const Product& p) {
            if (!(p.alpha > 0)) throw Error(ErrorCode::InvalidModel, "product alpha must be > 0");
            if (!(1.0 + p.beta * floor > 0))
              throw Error(ErrorCode::InvalidModel, "product rate not positive at state_floor");
            if (p.beta < 0) state_ceiling_ = last_positive_state(p.beta, 1.0);
          },
          [&](const Tabulated& p) {
            if (p.t_grid.size() < 2)
              throw Error(ErrorCode::InvalidModel, "tabulated t_grid needs at least 2 nodes");
            if (!std::is_sorted(p.t_grid.begin(), p.t_grid.end()) ||
                std::adjacent_find(p.t_grid.begin(), p.t_grid.end()) != p.t_grid.end())
              throw Error(ErrorCode::InvalidModel, "tabulated t_grid must be strictly increasing");
            if (p.t_grid.front() < 0.0 || p.t_grid.back() > 1.0)
              throw Error(ErrorCode::InvalidModel, "tabulated t_grid must lie in [0,1]");
            if (p.rates.rows() != static_cast<Eigen::Index>(p.t_grid.size()) || p.rates.cols() < 1)
              throw Error(ErrorCode::InvalidModel, "tabulated rates shape does not match t_grid");
            if (p.rates_dt.rows() != p.rates.rows() || p.rates_dt.cols() != p.rates.cols())
              throw Error(ErrorCode::InvalidModel, "tabulated rates_dt shape does not match rates");
            if (!(p.rates.array() > 0.0).all() || !p.rates.allFinite() || !p.rates_dt.allFinite())
              throw Error(ErrorCode::InvalidModel, "tabulated rates must be finite and > 0");
            if (p.z_min < state_floor_)
              throw Error(ErrorCode::InvalidModel, "tabulated z_min below state_floor");
            state_ceiling_ = p.z_min + p.rates.cols() - 1;
          },
      },
      family_);
}

IntensityModel IntensityModel::poisson(double alpha) { return IntensityModel(Poisson{alpha}); }

IntensityModel IntensityModel::space_linear(double lambda, double alpha) {
  return IntensityModel(SpaceLinear{lambda, alpha});
}

IntensityModel IntensityModel::time_exponential(double alpha, double lambda) {
  return IntensityModel(TimeExponential{alpha, lambda});
}

IntensityModel IntensityModel::product(double alpha, double lambda, double beta) {
  return IntensityModel(Product{alpha, lambda, beta});
}

IntensityModel IntensityModel::tabulated(std::vector<double> t_grid, State z_min,
                                         Eigen::MatrixXd rates,
                                         std::optional<Eigen::MatrixXd> rates_dt,
                                         State state_floor) {
  Tabulated tab;
  tab.z_min = z_min;
  if (rates_dt) {
    tab.rates_dt = std::move(*rates_dt);
  } else {
    if (t_grid.size() < 2 || static_cast<Eigen::Index>(t_grid.size()) != rates.rows())
      throw Error(ErrorCode::InvalidModel, "tabulated rates shape does not match t_grid");
    tab.rates_dt = centered_time_derivative(t_grid, rates);
    tab.derivative_numeric = true;
  }
  tab.t_grid = std::move(t_grid);
  tab.rates = std::move(rates);
  return IntensityModel(std::move(tab), state_floor);
}

std::string IntensityModel::family_name() const {
  return std::visit(Overloaded{
                        [](const Poisson&) { return std::string("poisson"); },
                        [](const SpaceLinear&) { return std::string("space_linear"); },
                        [](const TimeExponential&) { return std::string("time_exponential"); },
                        [](const Product&) { return std::string("product"); },
                        [](const Tabulated&) { return std::string("tabulated"); },
                    },
                    family_);
}

std::optional<double> IntensityModel::constant_characteristic() const noexcept {
  if (std::holds_alternative<Poisson>(family_)) return 0.0;
  if (const auto* p = std::get_if<SpaceLinear>(&family_)) return p->lambda;
  if (const auto* p = std::get_if<TimeExponential>(&family_)) return p->lambda;
  if (const auto* p = std::get_if<Product>(&family_); p && p->beta == 0.0) return p->lambda;
  return std::nullopt;
}

double eval(const IntensityModel& model, double t, State z) {
  check_domain(model, t, z);
  const double zd = static_cast<double>(z);
  return std::visit(Overloaded{
                        [](const Poisson& p) { return p.alpha; },
                        [&](const SpaceLinear& p) { return p.lambda * zd + p.alpha; },
                        [&](const TimeExponential& p) { return p.alpha * std::exp(p.lambda * t); },
                        [&](const Product& p) {
                          return p.alpha * std::exp(p.lambda * t) * (1.0 + p.beta * zd);
                        },
                        [&](const Tabulated& p) { return std::exp(tabulated_log(p, t, z).value); },
                    },
                    model.family());
}

double log_eval(const IntensityModel& model, double t, State z) {
  check_domain(model, t, z);
  const double zd = static_cast<double>(z);
  return std::visit(
      Overloaded{
          [](const Poisson& p) { return std::log(p.alpha); },
          [&](const SpaceLinear& p) { return std::log(p.lambda * zd + p.alpha); },
          [&](const TimeExponential& p) { return std::log(p.alpha) + p.lambda * t; },
          [&](const Product& p) {
            return std::log(p.alpha) + p.lambda * t + std::log1p(p.beta * zd);
          },
          [&](const Tabulated& p) { return tabulated_log(p, t, z).value; },
      },
      model.family());
}

double eval_dt(const IntensityModel& model, double t, State z) {
  check_domain(model, t, z);
  const double zd = static_cast<double>(z);
  return std::visit(Overloaded{
                        [](const Poisson&) { return 0.0; },
                        [](const SpaceLinear&) { return 0.0; },
                        [&](const TimeExponential& p) {
                          return p.lambda * p.alpha * std::exp(p.lambda * t);
                        },
                        [&](const Product& p) {
                          return p.lambda * p.alpha * std::exp(p.lambda * t) * (1.0 + p.beta * zd);
                        },
                        [&](const Tabulated& p) {
                          const auto lh = tabulated_log(p, t, z);
                          return std::exp(lh.value) * lh.slope;
                        },
                    },
                    model.family());
}

double characteristic(const IntensityModel& model, double t, State z) {
  check_domain(model, t, z);
  check_domain(model, t, z + 1);
  return std::visit(Overloaded{
                        [](const Poisson&) { return 0.0; },
                        [](const SpaceLinear& p) { return p.lambda; },
                        [](const TimeExponential& p) { return p.lambda; },
                        [&](const Product& p) {
                          return p.lambda + p.alpha * p.beta * std::exp(p.lambda * t);
                        },
                        [&](const Tabulated& p) {
                          const auto lo = tabulated_log(p, t, z);
                          const auto hi = tabulated_log(p, t, z + 1);
                          return lo.slope + std::exp(hi.value) - std::exp(lo.value);
                        },
                    },
                    model.family());
}

double characteristic_generic(const IntensityModel& model, double t, State z) {
  const double l = eval(model, t, z);
  const double l_next = eval(model, t, z + 1);
  if (l == 0.0) return 0.0;
  return eval_dt(model, t, z) / l + l_next - l;
}

CharacteristicBounds characteristic_bounds(const IntensityModel& model, double s, double u,
                                           State z_lo, State z_hi, double time_step) {
  if (z_lo > z_hi) {
    std::ostringstream os;
    os << "state range [" << z_lo << ", " << z_hi << "] is empty";
    throw Error(ErrorCode::EmptyRange, os.str());
  }
  if (!(s < u)) throw Error(ErrorCode::BadWindow, "characteristic_bounds needs s < u");
  if (!(time_step > 0)) throw Error(ErrorCode::BadStep, "time_step must be > 0");
  // Domain validation on the corners.
  characteristic(model, s, z_lo);
  characteristic(model, u, z_hi);

  if (auto c = model.constant_characteristic()) return {*c, *c, true};
  if (const auto* p = std::get_if<Product>(&model.family())) {
    // lambda + alpha*beta*exp(lambda t) is monotone in t and constant in z.
    const double a = characteristic(model, s, z_lo);
    const double b = characteristic(model, u, z_lo);
    (void)p;
    return {std::min(a, b), std::max(a, b), true};
  }

  std::vector<double> times;
  const auto steps = static_cast<std::int64_t>(std::ceil((u - s) / time_step - 1e-9));
  times.reserve(static_cast<std::size_t>(steps) + 1);
  for (std::int64_t k = 0; k <= steps; ++k)
    times.push_back(std::min(u, s + static_cast<double>(k) * time_step));
  if (const auto* tab = std::get_if<Tabulated>(&model.family())) {
    for (double node : tab->t_grid)
      if (node > s && node < u) times.push_back(node);
  }
  CharacteristicBounds out{std::numeric_limits<double>::infinity(),
                           -std::numeric_limits<double>::infinity(), false};
  for (State z = z_lo; z <= z_hi; ++z) {
    for (double t : times) {
      const double v = characteristic(model, t, z);
      out.inf = std::min(out.inf, v);
      out.sup = std::max(out.sup, v);
    }
  }
  return out;
}

double CharacteristicField::value(double t, State z) const {
  const auto key = std::make_pair(t, z);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  const double v = characteristic(model_, t, z);
  std::lock_guard lock(mutex_);
  cache_.emplace(key, v);
  return v;
}

std::size_t CharacteristicField::cache_size() const {
  std::lock_guard lock(mutex_);
  return cache_.size();
}

namespace {

double require_number(const nlohmann::json& params, const char* key) {
  if (!params.contains(key) || !params.at(key).is_number()) {
    throw Error(ErrorCode::Config, std::string("model params missing numeric '") + key + "'");
  }
  return params.at(key).get<double>();
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows, std::size_t expect_rows,
                                 const char* what) {
  if (!rows.is_array() || rows.size() != expect_rows)
    throw Error(ErrorCode::Config, std::string(what) + " must have one row per t_grid node");
  const std::size_t cols = rows.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(expect_rows), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < expect_rows; ++i) {
    if (!rows[i].is_array() || rows[i].size() != cols)
      throw Error(ErrorCode::Config, std::string(what) + " rows must all have the same length");
    for (std::size_t j = 0; j < cols; ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j].get<double>();
  }
  return m;
}

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

IntensityModel model_from_json(const nlohmann::json& descriptor) {
  if (!descriptor.is_object() || !descriptor.contains("family"))
    throw Error(ErrorCode::Config, "model descriptor needs a 'family' field");
  const auto family = descriptor.at("family").get<std::string>();
  const auto params = descriptor.value("params", nlohmann::json::object());
  const State floor = descriptor.value("state_floor", State{0});
  if (family == "poisson") return IntensityModel(Poisson{require_number(params, "alpha")}, floor);
  if (family == "space_linear")
    return IntensityModel(
        SpaceLinear{require_number(params, "lambda"), require_number(params, "alpha")}, floor);
  if (family == "time_exponential")
    return IntensityModel(
        TimeExponential{require_number(params, "alpha"), require_number(params, "lambda")}, floor);
  if (family == "product")
    return IntensityModel(Product{require_number(params, "alpha"), require_number(params, "lambda"),
                                  require_number(params, "beta")},
                          floor);
  if (family == "tabulated") {
    if (!params.contains("t_grid") || !params.contains("rates") || !params.contains("z_min"))
      throw Error(ErrorCode::Config, "tabulated params need t_grid, z_min and rates");
    auto t_grid = params.at("t_grid").get<std::vector<double>>();
    auto rates = matrix_from_json(params.at("rates"), t_grid.size(), "rates");
    std::optional<Eigen::MatrixXd> rates_dt;
    if (params.contains("rates_dt") && !params.at("rates_dt").is_null())
      rates_dt = matrix_from_json(params.at("rates_dt"), t_grid.size(), "rates_dt");
    if (rates_dt && params.value("derivative", std::string("supplied")) == "numeric") {
      // Re-loading an echoed manifest keeps the provenance flag.
      Tabulated tab{std::move(t_grid), params.at("z_min").get<State>(), std::move(rates),
                    std::move(*rates_dt), true};
      return IntensityModel(std::move(tab), floor);
    }
    return IntensityModel::tabulated(std::move(t_grid), params.at("z_min").get<State>(),
                                     std::move(rates), std::move(rates_dt), floor);
  }
  throw Error(ErrorCode::Config, "unknown model family '" + family + "'");
}

nlohmann::json model_to_json(const IntensityModel& model) {
  nlohmann::json params = std::visit(
      Overloaded{
          [](const Poisson& p) { return nlohmann::json{{"alpha", p.alpha}}; },
          [](const SpaceLinear& p) {
            return nlohmann::json{{"lambda", p.lambda}, {"alpha", p.alpha}};
          },
          [](const TimeExponential& p) {
            return nlohmann::json{{"alpha", p.alpha}, {"lambda", p.lambda}};
          },
          [](const Product& p) {
            return nlohmann::json{{"alpha", p.alpha}, {"lambda", p.lambda}, {"beta", p.beta}};
          },
          [](const Tabulated& p) {
            nlohmann::json j{{"t_grid", p.t_grid},
                             {"z_min", p.z_min},
                             {"rates", matrix_to_json(p.rates)},
                             {"rates_dt", matrix_to_json(p.rates_dt)},
                             {"derivative", p.derivative_numeric ? "numeric" : "supplied"}};
            return j;
          },
      },
      model.family());
  return {{"family", model.family_name()}, {"params", params}, {"state_floor", model.state_floor()}};
}

}  // namespace cbridge
