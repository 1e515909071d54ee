// Command-line front end: cohort validation, regime testing, survival
// curves, simulation and hazard diagnostics.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "regimetest/config.hpp"
#include "regimetest/correction.hpp"
#include "regimetest/engine.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"
#include "regimetest/simulate.hpp"

using nlohmann::json;
using namespace regimetest;

namespace {

enum class LogLevel { Error = 0, Warn = 1, Info = 2 };
LogLevel g_log_level = LogLevel::Warn;

void log_info(const std::string& msg) {
  if (g_log_level >= LogLevel::Info) std::cerr << "[info] " << msg << "\n";
}
void log_warn(const std::string& msg) {
  if (g_log_level >= LogLevel::Warn) std::cerr << "[warn] " << msg << "\n";
}

// Writes via a temporary file and rename so partial outputs never appear.
void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write output file '" + tmp + "'");
    out << content;
    if (!out.good()) throw DataError("write failed for '" + tmp + "'");
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) {
    throw DataError("cannot rename '" + tmp + "' to '" + path + "'");
  }
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("REGIMETEST_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return v;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

std::vector<Regime> selected_regimes(const AnalysisConfig& cfg, const Cohort& cohort) {
  std::vector<Regime> out;
  VarScope scope = cohort.var_scope();
  for (int idx : cfg.regime_set) {
    out.push_back(parse_regime(cfg.regimes[idx], cfg.design, scope,
                               "regime" + std::to_string(idx)));
  }
  return out;
}

json result_to_json(const TestResult& r, const AnalysisConfig& cfg,
                    const std::string& data_path) {
  json j;
  j["statistic"] = r.statistic;
  j["nu"] = r.nu;
  j["p_value"] = r.p_value;
  j["variant"] = r.variant;
  j["correction"] = r.correction;
  std::vector<double> comps(r.components.data(),
                            r.components.data() + r.components.size());
  j["components"] = comps;
  j["rank_tolerance"] = r.rank_tolerance;
  j["L"] = r.L;
  j["warnings"] = {{"dropped_grid_points", r.warnings.dropped_grid_points},
                   {"negative_eigenvalues", r.warnings.negative_eigenvalues}};
  json settings = dump_config(cfg);
  settings["data"] = data_path;
  j["settings"] = settings;
  return j;
}

int run_validate(const std::string& data, const std::string& config_path) {
  AnalysisConfig cfg = parse_config(config_path);
  Cohort cohort = load_cohort(data, cfg.design, cfg.covariate_stages);
  int events = 0;
  std::vector<int> kappa_counts(cfg.design.stages, 0);
  for (const SubjectRecord& s : cohort.subjects()) {
    events += s.delta;
    ++kappa_counts[s.kappa - 1];
  }
  std::ostringstream msg;
  msg << "ok: " << cohort.size() << " subjects, " << events << " events; kappa counts:";
  for (int k = 1; k <= cfg.design.stages; ++k) {
    msg << " " << k << "->" << kappa_counts[k - 1];
  }
  std::cout << msg.str() << "\n";
  return 0;
}

int run_test_cmd(const std::string& data, const std::string& config_path,
                 const std::string& out) {
  AnalysisConfig cfg = parse_config(config_path);
  if (cfg.regime_set.size() < 2) {
    throw ConfigError("test requires at least two regimes in regime_set");
  }
  Cohort cohort = load_cohort(data, cfg.design, cfg.covariate_stages);
  std::vector<Regime> regimes = selected_regimes(cfg, cohort);
  TestOptions options;
  options.L = cfg.L;
  options.at_risk_fraction = cfg.at_risk_fraction;
  options.correction = cfg.correction;
  options.rank_tolerance = cfg.rank_tolerance;
  TestResult res = run_test(cohort, regimes, cfg.propensity, cfg.basis, options);
  if (res.warnings.dropped_grid_points > 0) {
    log_warn(std::to_string(res.warnings.dropped_grid_points) +
             " grid point(s) had an empty weighted risk set");
  }
  atomic_write(out, result_to_json(res, cfg, data).dump(2) + "\n");
  log_info("statistic " + format_double(res.statistic) + ", nu " +
           std::to_string(res.nu) + ", p " + format_double(res.p_value));
  return 0;
}

int run_curves(const std::string& data, const std::string& config_path,
               const std::string& out) {
  AnalysisConfig cfg = parse_config(config_path);
  if (cfg.regime_set.empty()) {
    throw ConfigError("curves requires at least one regime in regime_set");
  }
  Cohort cohort = load_cohort(data, cfg.design, cfg.covariate_stages);
  std::vector<Regime> regimes = selected_regimes(cfg, cohort);
  FittedPropensity fitted = fit_propensity(cohort, cfg.propensity);
  const double L = cfg.L.has_value()
                       ? *cfg.L
                       : default_truncation(cohort, cfg.at_risk_fraction);
  std::vector<double> grid = event_grid_or_empty(cohort, L);

  std::ostringstream csv;
  csv << "regime,time,cumhaz,survival\n";
  for (const Regime& regime : regimes) {
    SurvivalCurve curve = regime_cumhaz(cohort, regime, fitted, grid);
    if (curve.dropped_grid_points > 0) {
      log_warn("regime " + regime.label() + ": " +
               std::to_string(curve.dropped_grid_points) +
               " grid point(s) had an empty weighted risk set");
    }
    for (size_t i = 0; i < curve.times.size(); ++i) {
      csv << regime.label() << "," << format_double(curve.times[i]) << ","
          << format_double(curve.cumhaz[i]) << "," << format_double(curve.survival[i])
          << "\n";
    }
  }
  atomic_write(out, csv.str());
  return 0;
}

int run_simulate(const std::string& scenario_id, int n, double zeta, int reps,
                 uint64_t seed, int threads, const std::string& variants_csv,
                 const std::string& regime_subset_csv, const std::string& scenario_file,
                 const std::string& out) {
  ScenarioConfig sc;
  if (scenario_id == "custom" || !scenario_file.empty()) {
    if (scenario_file.empty()) {
      throw ConfigError("scenario 'custom' requires --scenario-file");
    }
    std::ifstream in(scenario_file);
    if (!in) throw ConfigError("cannot open scenario file '" + scenario_file + "'");
    json j;
    try {
      in >> j;
    } catch (const json::parse_error& e) {
      throw ConfigError(std::string("scenario file is not valid JSON: ") + e.what());
    }
    sc = ScenarioConfig::from_json(j);
    if (n > 0) sc.n = n;
    if (zeta != 0.0) sc.zeta = zeta;
  } else {
    sc = ScenarioConfig::named(scenario_id, n > 0 ? n : 1000, zeta);
  }

  McOptions options;
  options.threads = resolve_threads(threads);
  if (!variants_csv.empty()) {
    options.variants.clear();
    std::stringstream ss(variants_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) options.variants.push_back(item);
    }
  }
  if (!regime_subset_csv.empty()) {
    std::stringstream ss(regime_subset_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) options.regime_subset.push_back(std::stoi(item));
    }
  }

  log_info("running " + std::to_string(reps) + " replicates of scenario " + sc.id +
           " on " + std::to_string(options.threads) + " thread(s)");
  McReport report = monte_carlo(sc, reps, options, seed);

  std::ostringstream csv;
  csv << "scenario,n,zeta,reps,variant,rejection_rate,mc_se\n";
  for (const McVariantResult& v : report.variants) {
    csv << report.scenario << "," << report.n << "," << format_double(report.zeta)
        << "," << report.reps << "," << v.name << "," << format_double(v.rate) << ","
        << format_double(v.mc_se) << "\n";
  }
  atomic_write(out, csv.str());

  json meta;
  meta["scenario"] = sc.params_dump();
  meta["reps"] = report.reps;
  meta["master_seed"] = report.master_seed;
  meta["alpha"] = report.alpha;
  meta["variants"] = options.variants;
  if (!options.regime_subset.empty()) meta["regime_subset"] = options.regime_subset;
  meta["errors"] = report.errors;
  meta["fallbacks"] = report.fallbacks;
  meta["seconds"] = report.seconds;
  meta["rng"] = report.rng;
  meta["threads"] = options.threads;
  atomic_write(out + ".meta.json", meta.dump(2) + "\n");

  if (report.errors > 0) {
    log_warn(std::to_string(report.errors) + " replicate(s) failed");
  }
  return 0;
}

int run_diagnose(double l1, double l2, double l3, double pi_r,
                 const std::string& family, double grid_max, int grid_points,
                 const std::string& out) {
  if (grid_points < 2) throw ConfigError("--grid-points must be >= 2");
  if (!(grid_max > 0.0)) throw ConfigError("--grid-max must be positive");
  std::vector<double> grid;
  for (int i = 0; i < grid_points; ++i) {
    grid.push_back(grid_max * i / (grid_points - 1));
  }
  std::ostringstream csv;
  csv << "u,haz_prior_response,haz_post_response,lambda0\n";
  for (double u : grid) {
    double lam0;
    if (family == "response") {
      lam0 = lambda0_response_design(l1, l2, l3, pi_r, u);
    } else if (family == "competing") {
      lam0 = lambda0_competing_design(l1, l2, l3, u);
    } else {
      throw ConfigError("--family must be 'response' or 'competing'");
    }
    csv << format_double(u) << "," << format_double(hazard_prior_response(l1, l2, pi_r, u))
        << "," << format_double(l3) << "," << format_double(lam0) << "\n";
  }
  atomic_write(out, csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Survival-distribution tests for multistage treatment regimes"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "error|warn|info")
      ->check(CLI::IsMember({"error", "warn", "info"}));

  std::string data, config_path, out, scenario = "1a", variants, regime_subset,
                                      scenario_file, family = "response";
  int n = 0, reps = 1000, threads = 0, grid_points = 200;
  double zeta = 0.0, l1 = 1.0, l2 = 1.0, l3 = 1.0, pi_r = 0.4, grid_max = 3.0;
  uint64_t seed = 20240101;

  CLI::App* validate = app.add_subcommand("validate", "Validate a cohort CSV");
  validate->add_option("--data", data, "cohort CSV")->required();
  validate->add_option("--config", config_path, "analysis config JSON")->required();

  CLI::App* test = app.add_subcommand("test", "Test equality of regime survival");
  test->add_option("--data", data, "cohort CSV")->required();
  test->add_option("--config", config_path, "analysis config JSON")->required();
  test->add_option("--out", out, "output JSON path")->required();

  CLI::App* curves = app.add_subcommand("curves", "Regime-specific survival curves");
  curves->add_option("--data", data, "cohort CSV")->required();
  curves->add_option("--config", config_path, "analysis config JSON")->required();
  curves->add_option("--out", out, "output CSV path")->required();

  CLI::App* simulate = app.add_subcommand("simulate", "Monte Carlo rejection rates");
  simulate->add_option("--scenario", scenario, "scenario id (1a..3stage, custom)");
  simulate->add_option("--scenario-file", scenario_file, "custom scenario JSON");
  simulate->add_option("--n", n, "cohort size");
  simulate->add_option("--zeta", zeta, "alternative-strength parameter");
  simulate->add_option("--reps", reps, "Monte Carlo replicates");
  simulate->add_option("--seed", seed, "master seed");
  simulate->add_option("--threads", threads, "worker threads (default: all cores)");
  simulate->add_option("--variants", variants,
                       "comma list of U_nocov,C_nocov,U_cov,C_cov");
  simulate->add_option("--regime-subset", regime_subset,
                       "comma list of embedded-regime indices");
  simulate->add_option("--out", out, "output CSV path")->required();

  CLI::App* diagnose =
      app.add_subcommand("diagnose-hazards", "Closed-form generative hazards");
  diagnose->add_option("--lambda1", l1, "pre-response event hazard")->required();
  diagnose->add_option("--lambda2", l2, "response-time hazard")->required();
  diagnose->add_option("--lambda3", l3, "post-response event hazard")->required();
  diagnose->add_option("--pi-r", pi_r, "response probability");
  diagnose->add_option("--family", family, "response|competing");
  diagnose->add_option("--grid-max", grid_max, "largest time on the grid");
  diagnose->add_option("--grid-points", grid_points, "number of grid points");
  diagnose->add_option("--out", out, "output CSV path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  g_log_level = log_level == "error" ? LogLevel::Error
               : log_level == "info" ? LogLevel::Info
                                     : LogLevel::Warn;

  try {
    if (validate->parsed()) return run_validate(data, config_path);
    if (test->parsed()) return run_test_cmd(data, config_path, out);
    if (curves->parsed()) return run_curves(data, config_path, out);
    if (simulate->parsed()) {
      return run_simulate(scenario, n, zeta, reps, seed, threads, variants,
                          regime_subset, scenario_file, out);
    }
    if (diagnose->parsed()) {
      return run_diagnose(l1, l2, l3, pi_r, family, grid_max, grid_points, out);
    }
  } catch (const NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
