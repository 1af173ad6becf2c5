#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace cbridge {

/// Fully resolved settings of one CLI run. Echoed to manifest.json so a run
/// can be repeated with `--config`.
struct RunConfig {
  std::string command;
  std::optional<nlohmann::json> model;  // descriptor; absent means the built-in family
  long x = 0;
  long y = 20;
  double s = 0.0;
  double u = 1.0;
  std::vector<double> lambdas;
  double step = 1e-3;
  std::size_t grid = 100;
  std::uint64_t seed = 1;
  std::size_t replicas = 0;  // 0: command default
  std::vector<long> N_list{50, 200, 800};
  std::vector<std::string> checks{"convexity", "dominance", "mean-bound"};
  std::string direction = "lower";
  std::string sampler = "auto";
  double tol_margin = 1e-9;
  double tol_second_diff = 1e-8;
  double tol_mean = 1e-9;
  double tol_z = 4.0;
  double lln_budget = 5e6;
  bool gnuplot = false;
  std::string out = ".";

  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& j);
};

enum ExitCode : int { kExitPass = 0, kExitCheckFailed = 1, kExitConfigError = 2 };

/// Entry point shared by the executable and the tests. `args` excludes the
/// program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Executes an already resolved configuration.
int run_config(const RunConfig& config, std::ostream& out);

/// "%.17g".
std::string format_double(double v);

/// Writes through a temporary file in the same directory, then renames.
void write_atomic(const std::string& path, const std::string& content);

}  // namespace cbridge
