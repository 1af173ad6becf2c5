#include "cbridge/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "cbridge/analytic.hpp"
#include "cbridge/engine.hpp"
#include "cbridge/error.hpp"
#include "cbridge/intensity.hpp"
#include "cbridge/sampler.hpp"
#include "cbridge/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace cbridge {

namespace {

const std::vector<std::string> kCommands = {"characteristics", "mean-curve", "marginals", "sample", "verify", "lln"};

struct Resolved {
  IntensityModel model;
  std::optional<double> lambda;
  std::string suffix;  // file name suffix, empty for a single model
};

std::string lambda_tag(double lambda) {
  std::string s = format_double(lambda);
  std::replace(s.begin(), s.end(), '.', 'p');
  return "lambda_" + s;
}

std::vector<double> default_lambdas(const std::string& command) {
  if (command == "mean-curve") return {-5, -3, 0, 3, 5};
  if (command == "sample") return {3};
  return {0};
}

std::size_t default_replicas(const std::string& command) {
  if (command == "sample") return 1000;
  if (command == "lln") return 200;
  return 10000;
}

BridgeSpec spec_of(const RunConfig& c) {
  BridgeSpec spec{c.x, c.y, c.s, c.u};
  spec.validate();
  return spec;
}

// Fills every command-dependent default so the manifest is complete.
RunConfig resolve_defaults(RunConfig c) {
  if (std::find(kCommands.begin(), kCommands.end(), c.command) == kCommands.end())
    throw Error(ErrorCode::Config, "unknown command '" + c.command + "'");
  if (!c.model && c.lambdas.empty()) c.lambdas = default_lambdas(c.command);
  if (c.replicas == 0) c.replicas = default_replicas(c.command);
  if (c.grid < 2) throw Error(ErrorCode::Config, "--grid needs at least 2 intervals");
  const std::vector<std::string> samplers = {"auto", "constant", "thinning", "rejection"};
  if (std::find(samplers.begin(), samplers.end(), c.sampler) == samplers.end())
    throw Error(ErrorCode::Config, "--sampler must be auto, constant, thinning or rejection");
  const std::vector<std::string> known = {"convexity", "dominance", "mean-bound", "duality"};
  for (const auto& check : c.checks)
    if (std::find(known.begin(), known.end(), check) == known.end())
      throw Error(ErrorCode::Config, "unknown check '" + check + "'");
  direction_from_string(c.direction);
  if (c.model) model_from_json(*c.model);
  spec_of(c);
  return c;
}

std::vector<Resolved> resolve_models(const RunConfig& c) {
  std::vector<Resolved> out;
  if (c.model) {
    std::optional<double> lambda;
    if (!c.lambdas.empty()) lambda = c.lambdas.front();
    out.push_back({model_from_json(*c.model), lambda, ""});
    return out;
  }
  // Built-in family with characteristic identically lambda.
  for (double lambda : c.lambdas)
    out.push_back({IntensityModel::time_exponential(1.0, lambda), lambda, c.lambdas.size() > 1 ? lambda_tag(lambda) : ""});
  return out;
}


std::vector<double> uniform_times(const BridgeSpec& spec, std::size_t intervals) {
  std::vector<double> t(intervals + 1);
  for (std::size_t k = 0; k <= intervals; ++k)
    t[k] = spec.s + spec.length() * static_cast<double>(k) / static_cast<double>(intervals);
  t.back() = spec.u;
  return t;
}

std::string file_name(const std::string& stem, const std::string& suffix, const std::string& ext) {
  return suffix.empty() ? stem + ext : stem + "_" + suffix + ext;
}

struct Writer {
  fs::path dir;
  std::ostream& log;
  void operator()(const std::string& name, const std::string& content) const {
    write_atomic((dir / name).string(), content);
    log << "wrote " << (dir / name).string() << "\n";
  }
};

int cmd_characteristics(const RunConfig& c, const Writer& write) {
  const BridgeSpec spec = spec_of(c);
  const auto times = uniform_times(spec, c.grid);
  const State z_hi = std::max<State>(spec.x, spec.y - 1);
  for (const auto& r : resolve_models(c)) {
    std::ostringstream csv;
    csv << "t,z,xi\n";
    for (double t : times)
      for (State z = spec.x; z <= z_hi; ++z)
        csv << format_double(t) << ',' << z << ',' << format_double(characteristic(r.model, t, z)) << '\n';
    write(file_name("characteristics", r.suffix, ".csv"), csv.str());
  }
  return kExitPass;
}

int cmd_mean_curve(const RunConfig& c, const Writer& write) {
  const BridgeSpec spec = spec_of(c);
  std::vector<std::string> files;
  for (const auto& r : resolve_models(c)) {
    const auto table = marginal_table(r.model, spec, c.step);
    const auto curve = mean_curve(table, c.grid);
    const auto d2 = second_differences(curve);
    std::ostringstream csv;
    csv << "t,mean,second_diff,bound\n";
    for (std::size_t k = 0; k < curve.size(); ++k) {
      csv << format_double(curve[k].t) << ',' << format_double(curve[k].value) << ',';
      if (k > 0 && k + 1 < curve.size()) csv << format_double(d2[k - 1].value);
      csv << ',';
      if (r.lambda) csv << format_double(mean_bound(spec, *r.lambda, curve[k].t));
      csv << '\n';
    }
    const auto name = file_name("mean_curve", r.suffix, ".csv");
    write(name, csv.str());
    files.push_back(name);
  }
  if (c.gnuplot) {
    std::ostringstream gp;
    gp << "set datafile separator ','\nset key left top\nset xlabel 't'\nset ylabel 'E[X_t]'\nplot \\\n";
    for (std::size_t k = 0; k < files.size(); ++k)
      gp << "  '" << files[k] << "' using 1:2 skip 1 with lines title '" << files[k] << "'"
         << (k + 1 < files.size() ? ", \\\n" : "\n");
    write("mean_curve.gp", gp.str());
  }
  return kExitPass;
}

int cmd_marginals(const RunConfig& c, const Writer& write) {
  const BridgeSpec spec = spec_of(c);
  const auto times = uniform_times(spec, c.grid);
  for (const auto& r : resolve_models(c)) {
    const auto table = marginal_table(r.model, spec, c.step);
    std::ostringstream csv;
    csv << "t,z,prob\n";
    for (double t : times) {
      const auto row = table.row_at(t);
      for (Eigen::Index j = 0; j < row.size(); ++j)
        csv << format_double(t) << ',' << spec.x + j << ',' << format_double(row[j]) << '\n';
    }
    write(file_name("marginals", r.suffix, ".csv"), csv.str());
  }
  return kExitPass;
}

int cmd_sample(const RunConfig& c, const Writer& write) {
  const BridgeSpec spec = spec_of(c);
  const auto r = resolve_models(c).front();
  std::string sampler = c.sampler;
  if (sampler == "auto") sampler = c.model ? "thinning" : "constant";
  std::vector<PathSample> paths;
  json stats = json::object();
  if (sampler == "constant") {
    const auto lambda = c.model ? r.model.constant_characteristic() : r.lambda;
    if (!lambda) throw Error(ErrorCode::Config, "the constant sampler needs a constant characteristic");
    paths = sample_constant(*lambda, spec, c.replicas, c.seed);
    stats["lambda"] = *lambda;
  } else if (sampler == "thinning") {
    ThinningStats st;
    const auto h = solve_h(r.model, spec, c.step);
    paths = sample_bridge(r.model, spec, h, c.replicas, c.seed, &st);
    stats = {{"proposals", st.proposals}, {"accepted", st.accepted}, {"majorant_refreshes", st.refreshes}};
  } else if (sampler == "rejection") {
    RejectionStats st;
    paths = sample_rejection(r.model, spec, c.replicas, c.seed, &st);
    stats = {{"proposals", st.proposals}, {"accepted", st.accepted}, {"proposal_lambda", st.proposal_lambda}};
  } else {
    throw Error(ErrorCode::Config, "--sampler must be auto, constant, thinning or rejection");
  }

  std::ostringstream csv;
  csv << "replica,jump_index,time\n";
  std::vector<double> pooled;
  std::vector<std::pair<double, std::size_t>> path_medians;
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto& jt = paths[k].jump_times;
    for (std::size_t j = 0; j < jt.size(); ++j) csv << k << ',' << j + 1 << ',' << format_double(jt[j]) << '\n';
    pooled.insert(pooled.end(), jt.begin(), jt.end());
    if (!jt.empty()) path_medians.emplace_back(quantile(jt, 0.5), k);
  }
  write("paths.csv", csv.str());

  json summary = {{"seed", c.seed}, {"count", paths.size()}, {"n", spec.height()}, {"sampler", sampler},
                  {"statistics", stats}};
  if (!pooled.empty()) {
    summary["median_jump_time"] = quantile(pooled, 0.5);
    std::sort(path_medians.begin(), path_medians.end());
    const auto& median_path = paths[path_medians[(path_medians.size() - 1) / 2].second];
    const double late = static_cast<double>(std::count_if(median_path.jump_times.begin(), median_path.jump_times.end(),
                                                          [&](double t) { return t > spec.s + 0.75 * spec.length(); }));
    summary["median_path"] = {{"replica", path_medians[(path_medians.size() - 1) / 2].second},
                              {"fraction_after_0.75", late / static_cast<double>(median_path.n())}};
  } else {
    summary["median_jump_time"] = nullptr;
  }
  write("sample_summary.json", summary.dump(2) + "\n");
  return kExitPass;
}

int cmd_verify(const RunConfig& c, const Writer& write) {
  const BridgeSpec spec = spec_of(c);
  const Direction direction = direction_from_string(c.direction);
  json reports = json::array();
  bool all = true;
  for (const auto& r : resolve_models(c)) {
    for (const auto& check : c.checks) {
      json rep;
      bool ok = false;
      auto bound_lambda = [&](Direction d) {
        if (r.lambda) return *r.lambda;
        if (spec.height() == 0) return 0.0;
        const auto b = characteristic_bounds(r.model, spec.s, spec.u, spec.x, spec.y - 1);
        return d == Direction::Lower ? b.inf : b.sup;
      };
      if (check == "convexity") {
        const auto rep_ = convexity_check(r.model, spec, c.step, c.tol_second_diff, c.grid);
        rep = rep_.to_json();
        rep.erase("second_differences");
        ok = rep_.passed;
      } else if (check == "dominance") {
        const auto rep_ = dominance_check(r.model, spec, bound_lambda(direction), direction,
                                          default_check_times(spec), c.tol_margin, c.step);
        rep = rep_.to_json();
        rep.erase("grid");
        ok = rep_.passed;
      } else if (check == "mean-bound") {
        const auto rep_ = mean_bound_check(r.model, spec, bound_lambda(Direction::Lower), uniform_times(spec, c.grid),
                                           c.tol_mean, c.step);
        rep = rep_.to_json();
        rep.erase("grid");
        ok = rep_.passed;
      } else if (check == "duality") {
        const auto h = solve_h(r.model, spec, c.step);
        const auto paths = sample_bridge(r.model, spec, h, c.replicas, c.seed);
        json pairs = json::array();
        ok = true;
        for (const auto& pair : duality_catalog()) {
          auto d = duality_on_paths(r.model, spec, pair, paths, c.tol_z);
          d.seed = c.seed;
          pairs.push_back(d.to_json());
          ok = ok && d.passed;
        }
        rep = {{"check", "duality"}, {"pairs", pairs}, {"verdict", ok ? "pass" : "fail"}};
      } else {
        throw Error(ErrorCode::Config, "unknown check '" + check + "'");
      }
      rep["model"] = model_to_json(r.model);
      reports.push_back(rep);
      all = all && ok;
    }
  }
  const json out = {{"checks", reports}, {"verdict", all ? "pass" : "fail"}};
  write("verify.json", out.dump(2) + "\n");
  return all ? kExitPass : kExitCheckFailed;
}

int cmd_lln(const RunConfig& c, const Writer& write) {
  const auto r = resolve_models(c).front();
  std::optional<double> lambda = r.lambda;
  if (!lambda) lambda = r.model.constant_characteristic();
  if (!lambda) throw Error(ErrorCode::Config, "lln needs --lambda for a model without constant characteristic");
  LLNOptions options;
  options.budget = c.lln_budget;
  options.h_step = c.step;
  const auto rep = lln_experiment(r.model, *lambda, c.N_list, c.replicas, c.seed, options);
  std::ostringstream csv;
  csv << "N,replica,distance\n";
  for (const auto& row : rep.rows)
    for (std::size_t k = 0; k < row.distances.size(); ++k) csv << row.N << ',' << k << ',' << format_double(row.distances[k]) << '\n';
  write("lln.csv", csv.str());
  write("lln.json", rep.to_json().dump(2) + "\n");
  return rep.medians_non_increasing ? kExitPass : kExitCheckFailed;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Config, "cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, "'" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_atomic(const std::string& path, const std::string& content) {
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Config, "cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Config, "failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, target);
}

json RunConfig::to_json() const {
  return {{"command", command},
          {"model", model ? *model : json(nullptr)},
          {"x", x},
          {"y", y},
          {"s", s},
          {"u", u},
          {"lambda", lambdas},
          {"step", step},
          {"grid", grid},
          {"seed", seed},
          {"replicas", replicas},
          {"N", N_list},
          {"checks", checks},
          {"direction", direction},
          {"sampler", sampler},
          {"tolerances", {{"margin", tol_margin}, {"second_diff", tol_second_diff}, {"mean", tol_mean}, {"z", tol_z}}},
          {"lln_budget", lln_budget},
          {"gnuplot", gnuplot},
          {"out", out}};
}

RunConfig RunConfig::from_json(const json& j) {
  try {
    RunConfig c;
    c.command = j.at("command").get<std::string>();
    if (!j.at("model").is_null()) c.model = j.at("model");
    c.x = j.at("x").get<long>();
    c.y = j.at("y").get<long>();
    c.s = j.at("s").get<double>();
    c.u = j.at("u").get<double>();
    c.lambdas = j.at("lambda").get<std::vector<double>>();
    c.step = j.at("step").get<double>();
    c.grid = j.at("grid").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.replicas = j.at("replicas").get<std::size_t>();
    c.N_list = j.at("N").get<std::vector<long>>();
    c.checks = j.at("checks").get<std::vector<std::string>>();
    c.direction = j.at("direction").get<std::string>();
    c.sampler = j.at("sampler").get<std::string>();
    const auto& tol = j.at("tolerances");
    c.tol_margin = tol.at("margin").get<double>();
    c.tol_second_diff = tol.at("second_diff").get<double>();
    c.tol_mean = tol.at("mean").get<double>();
    c.tol_z = tol.at("z").get<double>();
    c.lln_budget = j.at("lln_budget").get<double>();
    c.gnuplot = j.at("gnuplot").get<bool>();
    c.out = j.at("out").get<std::string>();
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::Config, std::string("malformed manifest: ") + e.what());
  }
}

int run_config(const RunConfig& config, std::ostream& out) {
  const RunConfig c = resolve_defaults(config);
  const fs::path dir(c.out);
  fs::create_directories(dir);
  const Writer write{dir, out};
  write("manifest.json", c.to_json().dump(2) + "\n");
  if (c.command == "characteristics") return cmd_characteristics(c, write);
  if (c.command == "mean-curve") return cmd_mean_curve(c, write);
  if (c.command == "marginals") return cmd_marginals(c, write);
  if (c.command == "sample") return cmd_sample(c, write);
  if (c.command == "verify") return cmd_verify(c, write);
  return cmd_lln(c, write);
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Bridges of Markov counting processes: marginals, sampling and checks", "cbridge"};
  app.require_subcommand(1);
  RunConfig c;
  std::string model_path;
  std::string config_path;

  const std::vector<std::pair<std::string, std::string>> descriptions = {
      {"characteristics", "tabulate the reciprocal characteristic (t,z,xi)"},
      {"mean-curve", "mean curve, second differences and mean bound per lambda"},
      {"marginals", "bridge marginals P(X_t = z)"},
      {"sample", "sample bridge paths"},
      {"verify", "run theorem checks (convexity, dominance, mean-bound, duality)"},
      {"lln", "law of large numbers experiment"}};
  for (const auto& [name, desc] : descriptions) {
    auto* sub = app.add_subcommand(name, desc);
    sub->add_option("--model", model_path, "intensity model descriptor (JSON file)");
    sub->add_option("--config", config_path, "re-run from a manifest.json");
    sub->add_option("--x", c.x, "start state")->capture_default_str();
    sub->add_option("--y", c.y, "end state")->capture_default_str();
    sub->add_option("--s", c.s, "window start")->capture_default_str();
    sub->add_option("--u", c.u, "window end")->capture_default_str();
    sub->add_option("--lambda", c.lambdas, "characteristic value (repeatable)")->allow_extra_args(false);
    sub->add_option("--step", c.step, "ODE time step")->capture_default_str();
    sub->add_option("--grid", c.grid, "number of output time intervals")->capture_default_str();
    sub->add_option("--seed", c.seed, "random seed")->capture_default_str();
    sub->add_option("--replicas", c.replicas, "number of sampled paths");
    sub->add_option("--N", c.N_list, "bridge heights for lln (repeatable)")->allow_extra_args(false);
    sub->add_option("--check", c.checks, "checks to run (repeatable)")->allow_extra_args(false);
    sub->add_option("--direction", c.direction, "lower or upper")->capture_default_str();
    sub->add_option("--sampler", c.sampler, "auto, constant, thinning or rejection")->capture_default_str();
    sub->add_option("--tol-margin", c.tol_margin)->capture_default_str();
    sub->add_option("--tol-second-diff", c.tol_second_diff)->capture_default_str();
    sub->add_option("--tol-mean", c.tol_mean)->capture_default_str();
    sub->add_option("--tol-z", c.tol_z)->capture_default_str();
    sub->add_option("--budget", c.lln_budget, "cap on N x replicas for lln")->capture_default_str();
    sub->add_flag("--gnuplot", c.gnuplot, "also write a gnuplot script");
    sub->add_option("--out", c.out, "output directory")->capture_default_str();
  }

  std::vector<std::string> argv_store{"cbridge"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitPass : kExitConfigError;
  }

  try {
    const auto* sub = app.get_subcommands().front();
    c.command = sub->get_name();
    if (!config_path.empty()) {
      const std::string out_dir = c.out;
      const bool out_given = sub->count("--out") > 0;
      c = RunConfig::from_json(load_json_file(config_path));
      if (c.command != sub->get_name())
        throw Error(ErrorCode::Config, "manifest is for '" + c.command + "', not '" + sub->get_name() + "'");
      if (out_given) c.out = out_dir;
    } else if (!model_path.empty()) {
      c.model = load_json_file(model_path);
    }
    if (c.model) model_from_json(*c.model);  // validate before any output
    return run_config(c, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace cbridge
