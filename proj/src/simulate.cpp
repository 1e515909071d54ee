#include "regimetest/simulate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <thread>

#include <json.hpp>

#include "regimetest/engine.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

using nlohmann::json;

uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}
  // open (0,1)
  double uniform01() {
    return (static_cast<double>(eng_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
  }
  double runif(double a, double b) { return a + (b - a) * uniform01(); }
  double rexp(double rate) { return -std::log(uniform01()) / rate; }
  double rnorm() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
  int rbern(double p) { return uniform01() < p ? 1 : 0; }
  int rcat3() {
    const double u = uniform01();
    if (u < 1.0 / 3.0) return 0;
    if (u < 2.0 / 3.0) return 1;
    return 2;
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace

ScenarioConfig ScenarioConfig::named(const std::string& id, int n, double zeta) {
  ScenarioConfig c;
  c.id = id;
  c.n = n;
  c.zeta = zeta;

  auto kidwell_null_theta = [] {
    return std::array<double, 8>{1 / 0.91, 1 / 0.91, 1 / 0.5, 1 / 0.5, 1, 1, 1, 1};
  };
  auto covariate_effects = [](ScenarioConfig& cc) {
    cc.theta_x2 = {0.0, 0.15, 0.0};
    cc.delta_r = {0.7, 0.7};
    cc.delta_nr = {0.3, 0.3};
    cc.alpha1 = {0.7, 0.7, 0.7, 0.7};
    cc.alpha2 = {0.7, 0.7, 0.7, 0.7};
  };

  if (id == "1a") {
    c.family = Family::Kidwell;
    c.c_max = 3.80;
    c.theta = kidwell_null_theta();
  } else if (id == "1b") {
    c.family = Family::Kidwell;
    c.c_max = 3.80;
    c.theta = kidwell_null_theta();
    covariate_effects(c);
  } else if (id == "1b-alt") {
    c.family = Family::Kidwell;
    c.c_max = 3.80;
    c.theta = {1 / 0.91, 1 / 1.15, 1 / 0.9, 1 / 0.5,
               1 / 2.0,  1 / 2.33, 1 / 1.11, 1 / 0.67};
    covariate_effects(c);
  } else if (id == "2a") {
    c.family = Family::Kidwell;
    c.c_max = 8.0;
    c.theta = {1 / 0.91, 1 / 0.91, 1 / 0.5, 1 / 0.5,
               1 / 3.0,  1 / 3.0,  1 / 3.0, 1 / 3.0};
  } else if (id == "2b") {
    c.family = Family::Kidwell;
    c.c_max = 8.0;
    c.theta = {1 / 0.91, 1 / 0.91, 1 / 0.5, 1 / 0.5,
               1 / 3.0,  1 / 3.0,  1 / 3.0, 1 / 3.0};
    covariate_effects(c);
  } else if (id == "2b-alt") {
    c.family = Family::Kidwell;
    c.c_max = 8.0;
    c.theta = {1 / 0.35, 1 / 0.9, 1 / 0.5, 1 / 0.5,
               1 / 3.3,  1 / 3.3, 1 / 3.0, 1 / 3.0};
    covariate_effects(c);
  } else if (id == "3a" || id == "3b" || id == "3c") {
    c.family = Family::C9710;
    c.psi = 1.5;
    c.alpha_1ss = -4.2;
    if (id == "3a") {
      c.alpha_1d = -5.5;
      c.alpha_2al = -5.5;
      c.c_max = 500.0;
    } else if (id == "3b") {
      c.alpha_1d = -4.5;
      c.alpha_2al = -5.5;
      c.c_max = 500.0;
    } else {
      c.alpha_1d = -5.5;
      c.alpha_2al = -3.5;
      c.c_max = 300.0;
    }
  } else if (id == "4") {
    c.family = Family::Control;
    c.psi = 1.5;
    c.alpha_1d = -5.5;
    c.alpha_1ss = -4.2;
    c.alpha_2al = -5.5;
    c.c_max = 500.0;
  } else if (id == "5") {
    c.family = Family::EightRegime;
    c.psi = 1.5;
    c.alpha_1d = -5.5;
    c.alpha_1ss = -3.5;
    c.alpha_2al = -5.5;
    c.c_max = 500.0;
  } else if (id == "3stage") {
    c.family = Family::ThreeStage;
    c.psi = 1.5;
    c.alpha_1d = -4.5;
    c.alpha_1ss = -3.2;
    c.alpha_2d = -4.0;
    c.alpha_2ts = -2.7;
    c.alpha_3al = -3.0;
    c.c_max = 350.0;
  } else {
    throw ConfigError("unknown scenario id '" + id + "'");
  }
  return c;
}

namespace {

std::string family_name(ScenarioConfig::Family f) {
  switch (f) {
    case ScenarioConfig::Family::Kidwell: return "response2";
    case ScenarioConfig::Family::C9710: return "competing2";
    case ScenarioConfig::Family::Control: return "competing2-control";
    case ScenarioConfig::Family::EightRegime: return "eight-regime";
    case ScenarioConfig::Family::ThreeStage: return "three-stage";
  }
  return "?";
}

ScenarioConfig::Family family_from_name(const std::string& s) {
  if (s == "response2") return ScenarioConfig::Family::Kidwell;
  if (s == "competing2") return ScenarioConfig::Family::C9710;
  if (s == "competing2-control") return ScenarioConfig::Family::Control;
  if (s == "eight-regime") return ScenarioConfig::Family::EightRegime;
  if (s == "three-stage") return ScenarioConfig::Family::ThreeStage;
  throw ConfigError("unknown scenario family '" + s + "'");
}

}  // namespace

ScenarioConfig ScenarioConfig::from_json(const json& j) {
  ScenarioConfig c;
  if (j.contains("id") && j.at("id").get<std::string>() != "custom") {
    c = named(j.at("id").get<std::string>(), j.value("n", 1000),
              j.value("zeta", 0.0));
  } else {
    if (!j.contains("family")) {
      throw ConfigError("custom scenario requires 'family'");
    }
    c.id = "custom";
    c.family = family_from_name(j.at("family").get<std::string>());
    c.n = j.value("n", 1000);
    c.zeta = j.value("zeta", 0.0);
  }
  auto opt = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  opt("c_max", c.c_max);
  opt("psi", c.psi);
  opt("pi_r", c.pi_r);
  opt("alpha_1d", c.alpha_1d);
  opt("alpha_1ss", c.alpha_1ss);
  opt("alpha_2al", c.alpha_2al);
  opt("alpha_2d", c.alpha_2d);
  opt("alpha_2ts", c.alpha_2ts);
  opt("alpha_3al", c.alpha_3al);
  auto opt_arr = [&](const char* key, auto& arr) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (v.size() != arr.size()) {
      throw ConfigError(std::string("scenario field '") + key + "' must have " +
                        std::to_string(arr.size()) + " entries");
    }
    for (size_t i = 0; i < arr.size(); ++i) arr[i] = v[i].get<double>();
  };
  opt_arr("theta", c.theta);
  opt_arr("theta_x2", c.theta_x2);
  opt_arr("delta_nr", c.delta_nr);
  opt_arr("delta_r", c.delta_r);
  opt_arr("alpha1", c.alpha1);
  opt_arr("alpha2", c.alpha2);
  if (j.contains("n")) c.n = j.at("n").get<int>();
  if (j.contains("zeta")) c.zeta = j.at("zeta").get<double>();
  return c;
}

json ScenarioConfig::params_dump() const {
  json j;
  j["id"] = id;
  j["family"] = family_name(family);
  j["n"] = n;
  j["zeta"] = zeta;
  j["c_max"] = c_max;
  if (family == Family::Kidwell) {
    j["theta"] = theta;
    j["theta_x2"] = theta_x2;
    j["delta_nr"] = delta_nr;
    j["delta_r"] = delta_r;
    j["alpha1"] = alpha1;
    j["alpha2"] = alpha2;
    j["pi_r"] = pi_r;
  } else {
    j["psi"] = psi;
    j["alpha_1ss"] = alpha_1ss;
    j["alpha_1d"] = alpha_1d;
    if (family == Family::ThreeStage) {
      j["alpha_2d"] = alpha_2d;
      j["alpha_2ts"] = alpha_2ts;
      j["alpha_3al"] = alpha_3al;
      j["theta_1d"] = {alpha_1d, 0.5 * psi, 0.5 * psi, -0.26 * zeta};
      j["theta_1ss"] = {alpha_1ss, 0.5 * psi, 0.5 * psi, 0.24 * zeta};
      j["theta_x2"] = {0.2, 0.5 * psi, 0.4 * psi, 0.12 * zeta};
      j["theta_2d"] = {alpha_2d, 0.5 * psi, -0.52 * psi, 0.6 * psi,
                       -0.1 * zeta, -0.11 * zeta};
      j["theta_2ts"] = {alpha_2ts, 0.5 * psi, -0.52 * psi, 0.6 * psi,
                        -0.1 * zeta, -0.11 * zeta};
      j["theta_x3"] = {0.2, 0.5 * psi, 0.4 * psi, 0.12 * zeta, -0.15 * zeta, 0.0};
      j["theta_3al"] = {alpha_3al, 0.5 * psi, -0.52 * psi, 0.6 * psi, 0.1 * psi,
                        -0.1 * zeta, -0.11 * zeta, 0.2 * zeta};
    } else if (family == Family::Control) {
      j["alpha_2al"] = alpha_2al;
      j["theta_1d"] = {alpha_1d, 0.5 * psi, 0.5 * psi, -0.26 * zeta, 0.15 * zeta};
      j["theta_1ss"] = {alpha_1ss, 0.5 * psi, 0.5 * psi, 0.24 * zeta, -0.13 * zeta};
      j["theta_x2"] = {0.2, 0.5 * psi, 0.4 * psi, 0.12 * zeta, 0.1 * zeta};
      j["theta_2al"] = {alpha_2al, 0.5 * psi, -0.52 * psi, 0.6 * psi,
                        -0.1 * zeta, 0.15 * zeta, -0.11 * zeta};
    } else {
      j["alpha_2al"] = alpha_2al;
      j["theta_1d"] = {alpha_1d, 0.5 * psi, 0.5 * psi, -0.26 * zeta};
      j["theta_1ss"] = {alpha_1ss, 0.5 * psi, 0.5 * psi, 0.24 * zeta};
      j["theta_x2"] = {0.2, 0.5 * psi, 0.4 * psi, 0.12 * zeta};
      j["theta_2al"] = {alpha_2al, 0.5 * psi, -0.52 * psi, 0.6 * psi,
                        -0.1 * zeta, -0.11 * zeta};
    }
  }
  return j;
}

namespace {

SmartDesign two_stage_design(const std::vector<int>& a1_opts) {
  SmartDesign d;
  d.stages = 2;
  d.options = {a1_opts, {0, 1}};
  d.strata[2] = {
      {"resp_a0", Condition::parse("a1 == 0"), {0, 1}},
      {"resp_a1", Condition::parse("a1 == 1"), {0, 1}},
  };
  return d;
}

ScenarioArtifacts two_stage_artifacts(bool c9710_covariates, bool control_arm) {
  ScenarioArtifacts a;
  a.design = two_stage_design(control_arm ? std::vector<int>{0, 1, 2}
                                          : std::vector<int>{0, 1});
  if (c9710_covariates) {
    a.covariates = {{"x11", 1}, {"x12", 1}, {"r", 2}, {"x2", 2}};
    a.cov_basis.stage1 = {"x11", "x12"};
    a.cov_basis.stages[2]["resp_a0"] = {"x11", "x12", "x2"};
    a.cov_basis.stages[2]["resp_a1"] = {"x11", "x12", "x2"};
  } else {
    a.covariates = {{"x1", 1}, {"r", 2}, {"x2", 2}};
    a.cov_basis.stage1 = {"x1"};
    a.cov_basis.stages[2]["resp_a0"] = {"x1", "x2"};
    a.cov_basis.stages[2]["resp_a1"] = {"x1", "x2"};
  }
  for (int a1 : {0, 1}) {
    for (int b : {0, 1}) {
      a.regimes.push_back("stage1: " + std::to_string(a1) +
                          "; stage2: " + std::to_string(b));
      a.regime_labels.push_back("d" + std::to_string(2 * a1 + b + 1));
    }
  }
  if (control_arm) {
    a.regimes.push_back("stage1: 2; stage2: 0");
    a.regime_labels.push_back("control");
  }
  KnownUnitProbs s1;
  s1.stage = 1;
  if (control_arm) {
    s1.probs = {{0, 1.0 / 3}, {1, 1.0 / 3}, {2, 1.0 / 3}};
  } else {
    s1.probs = {{0, 0.5}, {1, 0.5}};
  }
  a.known.mode = PropensitySpec::Mode::Known;
  a.known.known.push_back(s1);
  for (const char* name : {"resp_a0", "resp_a1"}) {
    KnownUnitProbs k;
    k.stage = 2;
    k.stratum = name;
    k.probs = {{0, 0.5}, {1, 0.5}};
    a.known.known.push_back(k);
  }
  return a;
}

ScenarioArtifacts eight_regime_artifacts() {
  ScenarioArtifacts a;
  a.design.stages = 2;
  a.design.options = {{0, 1}, {2, 3, 4, 5}};
  a.design.strata[2] = {
      {"r1_a0", Condition::parse("a1 == 0 and r == 1"), {2, 3}},
      {"r0_a0", Condition::parse("a1 == 0 and r == 0"), {2, 4}},
      {"r1_a1", Condition::parse("a1 == 1 and r == 1"), {2, 5}},
      {"r0_a1", Condition::parse("a1 == 1 and r == 0"), {3, 5}},
  };
  a.covariates = {{"x11", 1}, {"x12", 1}, {"r", 2}, {"x2", 2}};
  a.cov_basis.stage1 = {"x11", "x12"};
  for (const char* s : {"r1_a0", "r0_a0", "r1_a1", "r0_a1"}) {
    a.cov_basis.stages[2][s] = {"x11", "x12", "x2"};
  }
  struct Triple {
    int a, b, c;
  };
  const std::vector<Triple> triples = {{0, 2, 2}, {0, 2, 4}, {0, 3, 2}, {0, 3, 4},
                                       {1, 2, 3}, {1, 2, 5}, {1, 5, 3}, {1, 5, 5}};
  int idx = 1;
  for (const auto& t : triples) {
    a.regimes.push_back("stage1: " + std::to_string(t.a) + "; stage2: if r == 1 then " +
                        std::to_string(t.b) + "; " + std::to_string(t.c));
    a.regime_labels.push_back("d" + std::to_string(idx++));
  }
  a.known.mode = PropensitySpec::Mode::Known;
  KnownUnitProbs s1;
  s1.stage = 1;
  s1.probs = {{0, 0.5}, {1, 0.5}};
  a.known.known.push_back(s1);
  const std::vector<std::pair<std::string, std::pair<int, int>>> strata = {
      {"r1_a0", {2, 3}}, {"r0_a0", {2, 4}}, {"r1_a1", {2, 5}}, {"r0_a1", {3, 5}}};
  for (const auto& [name, opts] : strata) {
    KnownUnitProbs k;
    k.stage = 2;
    k.stratum = name;
    k.probs = {{opts.first, 0.5}, {opts.second, 0.5}};
    a.known.known.push_back(k);
  }
  return a;
}

ScenarioArtifacts three_stage_artifacts() {
  ScenarioArtifacts a;
  a.design.stages = 3;
  a.design.options = {{0, 1}, {0, 1}, {0, 1}};
  a.design.strata[2] = {
      {"s2_a0", Condition::parse("a1 == 0"), {0, 1}},
      {"s2_a1", Condition::parse("a1 == 1"), {0, 1}},
  };
  a.design.strata[3] = {
      {"s3_00", Condition::parse("a1 == 0 and a2 == 0"), {0, 1}},
      {"s3_01", Condition::parse("a1 == 0 and a2 == 1"), {0, 1}},
      {"s3_10", Condition::parse("a1 == 1 and a2 == 0"), {0, 1}},
      {"s3_11", Condition::parse("a1 == 1 and a2 == 1"), {0, 1}},
  };
  a.covariates = {{"x11", 1}, {"x12", 1}, {"x2", 2}, {"x3", 3}};
  a.cov_basis.stage1 = {"x11", "x12"};
  for (const char* s : {"s2_a0", "s2_a1"}) {
    a.cov_basis.stages[2][s] = {"x11", "x12", "x2"};
  }
  for (const char* s : {"s3_00", "s3_01", "s3_10", "s3_11"}) {
    a.cov_basis.stages[3][s] = {"x11", "x12", "x2", "x3"};
  }
  struct Triple {
    int a, b, c;
  };
  const std::vector<Triple> triples = {{0, 0, 0}, {0, 1, 0}, {1, 0, 0}, {1, 1, 0},
                                       {0, 0, 1}, {0, 1, 1}, {1, 0, 1}, {1, 1, 1}};
  int idx = 1;
  for (const auto& t : triples) {
    a.regimes.push_back("stage1: " + std::to_string(t.a) +
                        "; stage2: " + std::to_string(t.b) +
                        "; stage3: " + std::to_string(t.c));
    a.regime_labels.push_back("d" + std::to_string(idx++));
  }
  a.known.mode = PropensitySpec::Mode::Known;
  KnownUnitProbs s1;
  s1.stage = 1;
  s1.probs = {{0, 0.5}, {1, 0.5}};
  a.known.known.push_back(s1);
  for (const char* name : {"s2_a0", "s2_a1"}) {
    KnownUnitProbs k;
    k.stage = 2;
    k.stratum = name;
    k.probs = {{0, 0.5}, {1, 0.5}};
    a.known.known.push_back(k);
  }
  for (const char* name : {"s3_00", "s3_01", "s3_10", "s3_11"}) {
    KnownUnitProbs k;
    k.stage = 3;
    k.stratum = name;
    k.probs = {{0, 0.5}, {1, 0.5}};
    a.known.known.push_back(k);
  }
  return a;
}

}  // namespace

ScenarioArtifacts scenario_artifacts(const ScenarioConfig& config) {
  switch (config.family) {
    case ScenarioConfig::Family::Kidwell:
      return two_stage_artifacts(false, false);
    case ScenarioConfig::Family::C9710:
      return two_stage_artifacts(true, false);
    case ScenarioConfig::Family::Control:
      return two_stage_artifacts(true, true);
    case ScenarioConfig::Family::EightRegime:
      return eight_regime_artifacts();
    case ScenarioConfig::Family::ThreeStage:
      return three_stage_artifacts();
  }
  throw ConfigError("unknown scenario family");
}

namespace {

std::string subject_id(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "s%06d", i + 1);
  return buf;
}

// Scenarios 1-2: response status drawn directly; responders move to the
// second decision at their time to response.
std::vector<SubjectRecord> generate_kidwell(const ScenarioConfig& sc, Rng& rng) {
  std::vector<SubjectRecord> out;
  out.reserve(sc.n);
  // covariate slots: x1, r, x2
  for (int i = 0; i < sc.n; ++i) {
    const double x1 = rng.rnorm();
    const int a1 = rng.rbern(0.5);
    int r = rng.rbern(sc.pi_r);
    double x2 = kNaN, px2 = 0.0;
    int a2 = 0;
    double t2 = 0.0, t_event = 0.0;

    if (r == 1) {
      px2 = expit(sc.theta_x2[0] + sc.theta_x2[1] * x1 + sc.theta_x2[2] * a1);
      x2 = rng.rbern(px2);
      a2 = rng.rbern(0.5);
      const double theta_r = a1 == 1 ? sc.theta[2] : sc.theta[3];
      const double delta_r = a1 == 1 ? sc.delta_r[0] : sc.delta_r[1];
      const double lam_r = theta_r * std::exp(delta_r * x1);
      t2 = rng.rexp(lam_r);
      const int cell = a1 == 1 ? (a2 == 1 ? 0 : 1) : (a2 == 1 ? 2 : 3);
      const double theta_re = sc.theta[4 + cell];
      const double lam_re = theta_re * std::exp(sc.alpha1[cell] * x1 +
                                                sc.alpha2[cell] * (x2 - px2));
      t_event = t2 + rng.rexp(lam_re);
    } else {
      const double theta_nr = a1 == 1 ? sc.theta[0] : sc.theta[1];
      const double delta_nr = a1 == 1 ? sc.delta_nr[0] : sc.delta_nr[1];
      const double lam_nr = theta_nr * std::exp(delta_nr * x1);
      t_event = rng.rexp(lam_nr);
    }

    const double cens = rng.runif(0.0, sc.c_max);
    const double u = std::min(t_event, cens);
    const int delta = t_event <= cens ? 1 : 0;
    if (r == 1 && cens < t2) r = 0;  // censored before response

    SubjectRecord s;
    s.id = subject_id(i);
    s.u = u;
    s.delta = delta;
    if (r == 1) {
      s.kappa = 2;
      s.decision_times = {0.0, t2};
      s.treatments = {a1, a2};
      s.covariates = {x1, 1.0, x2};
    } else {
      s.kappa = 1;
      s.decision_times = {0.0};
      s.treatments = {a1};
      s.covariates = {x1, kNaN, kNaN};
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Scenarios 3 and 4: the event and the move to Decision 2 compete; reaching
// Decision 2 is "response".
std::vector<SubjectRecord> generate_competing(const ScenarioConfig& sc, Rng& rng,
                                              bool control_arm) {
  std::vector<SubjectRecord> out;
  out.reserve(sc.n);
  const double psi = sc.psi, zeta = sc.zeta;
  // covariate slots: x11, x12, r, x2
  for (int i = 0; i < sc.n; ++i) {
    const double x11 = rng.rnorm();
    const double x12 = rng.uniform01();
    const int a1 = control_arm ? rng.rcat3() : rng.rbern(0.5);

    double lam_d, lam_ss;
    if (control_arm) {
      const double i1 = a1 == 1 ? 1.0 : 0.0;
      const double i2 = a1 == 2 ? 1.0 : 0.0;
      lam_d = std::exp(sc.alpha_1d + 0.5 * psi * x11 + 0.5 * psi * x12 +
                       (-0.26 * zeta) * i1 + (0.15 * zeta) * i2);
      lam_ss = std::exp(sc.alpha_1ss + 0.5 * psi * x11 + 0.5 * psi * x12 +
                        (0.24 * zeta) * i1 + (-0.13 * zeta) * i2);
    } else {
      lam_d = std::exp(sc.alpha_1d + 0.5 * psi * x11 + 0.5 * psi * (x12 - 0.5) +
                       (-0.26 * zeta) * (a1 - 0.5));
      lam_ss = std::exp(sc.alpha_1ss + 0.5 * psi * x11 + 0.5 * psi * (x12 - 0.5) +
                        (0.24 * zeta) * (a1 - 0.5));
    }
    const double t_d = rng.rexp(lam_d);
    const double t_ss = rng.rexp(lam_ss);
    int r = t_ss < t_d ? 1 : 0;

    double x2 = kNaN, t_event;
    int a2 = 0;
    if (r == 1) {
      double px2;
      if (control_arm) {
        const double i1 = a1 == 1 ? 1.0 : 0.0;
        const double i2 = a1 == 2 ? 1.0 : 0.0;
        px2 = expit(0.2 + 0.5 * psi * x11 + 0.4 * psi * x12 + (0.12 * zeta) * i1 +
                    (0.1 * zeta) * i2);
      } else {
        px2 = expit(0.2 + 0.5 * psi * x11 + 0.4 * psi * x12 + (0.12 * zeta) * a1);
      }
      x2 = rng.rbern(px2);
      a2 = rng.rbern(0.5);
      double lam_al;
      if (control_arm) {
        const double i1 = a1 == 1 ? 1.0 : 0.0;
        const double i2 = a1 == 2 ? 1.0 : 0.0;
        const double a2_term = a1 < 2 ? static_cast<double>(a2) : 0.0;
        lam_al = std::exp(sc.alpha_2al + 0.5 * psi * x11 + (-0.52 * psi) * x12 +
                          0.6 * psi * x2 + (-0.1 * zeta) * i1 + (0.15 * zeta) * i2 +
                          (-0.11 * zeta) * a2_term);
      } else {
        lam_al = std::exp(sc.alpha_2al + 0.5 * psi * x11 + (-0.52 * psi) * (x12 - 0.5) +
                          0.6 * psi * (x2 - px2) + (-0.1 * zeta) * (a1 - 0.5) +
                          (-0.11 * zeta) * (a2 - 0.5));
      }
      t_event = t_ss + rng.rexp(lam_al);
    } else {
      t_event = t_d;
    }

    const double cens = rng.runif(0.0, sc.c_max);
    const double u = std::min(t_event, cens);
    const int delta = t_event <= cens ? 1 : 0;
    if (r == 1 && cens < t_ss) r = 0;  // censored before Decision 2

    // Control subjects are never re-randomized: one decision point.
    const bool second_stage = r == 1 && !(control_arm && a1 == 2);

    SubjectRecord s;
    s.id = subject_id(i);
    s.u = u;
    s.delta = delta;
    if (second_stage) {
      s.kappa = 2;
      s.decision_times = {0.0, t_ss};
      s.treatments = {a1, a2};
      s.covariates = {x11, x12, 1.0, x2};
    } else {
      s.kappa = 1;
      s.decision_times = {0.0};
      s.treatments = {a1};
      s.covariates = {x11, x12, kNaN, kNaN};
    }
    out.push_back(std::move(s));
  }
  return out;
}

// Scenario 5: all who reach Decision 2 are re-randomized within the
// (a1, response) feasible subsets of the eight-regime design.
std::vector<SubjectRecord> generate_eight_regime(const ScenarioConfig& sc, Rng& rng) {
  std::vector<SubjectRecord> out;
  out.reserve(sc.n);
  const double psi = sc.psi, zeta = sc.zeta;
  // feasible subsets keyed by (a1, r)
  auto options_for = [](int a1, int r) -> std::pair<int, int> {
    if (a1 == 0 && r == 1) return {2, 3};
    if (a1 == 0 && r == 0) return {2, 4};
    if (a1 == 1 && r == 1) return {2, 5};
    return {3, 5};
  };
  for (int i = 0; i < sc.n; ++i) {
    const double x11 = rng.rnorm();
    const double x12 = rng.uniform01();
    const int a1 = rng.rbern(0.5);
    const double lam_d = std::exp(sc.alpha_1d + 0.5 * psi * x11 + 0.5 * psi * x12 +
                                  (-0.26 * zeta) * a1);
    const double lam_ss = std::exp(sc.alpha_1ss + 0.5 * psi * x11 + 0.5 * psi * x12 +
                                   (0.24 * zeta) * a1);
    const double t_d = rng.rexp(lam_d);
    const double t_ss = rng.rexp(lam_ss);
    const int gamma_ss = t_ss < t_d ? 1 : 0;

    int r = 0, a2_draw = 0, a2_code = 0;
    double x2 = kNaN, t_event;
    if (gamma_ss == 1) {
      const double p_r = expit(0.3 + 0.15 * x11 + 0.15 * x12 + 0.2 * zeta * a1);
      r = rng.rbern(p_r);
      const double px2 = expit(0.2 + 0.5 * psi * x11 + 0.4 * psi * x12 +
                               (0.12 * zeta) * a1);
      x2 = rng.rbern(px2);
      a2_draw = rng.rbern(0.5);
      const auto opts = options_for(a1, r);
      a2_code = a2_draw == 0 ? opts.first : opts.second;
      const double lam_al =
          std::exp(sc.alpha_2al + 0.5 * psi * x11 + (-0.52 * psi) * x12 +
                   0.6 * psi * x2 + (-0.1 * zeta) * a1 + (-0.11 * zeta) * a2_draw +
                   (-0.3 * zeta) * r);
      t_event = t_ss + rng.rexp(lam_al);
    } else {
      t_event = t_d;
    }

    const double cens = rng.runif(0.0, sc.c_max);
    const double u = std::min(t_event, cens);
    const int delta = t_event <= cens ? 1 : 0;
    const bool second_stage = gamma_ss == 1 && cens >= t_ss;

    SubjectRecord s;
    s.id = subject_id(i);
    s.u = u;
    s.delta = delta;
    if (second_stage) {
      s.kappa = 2;
      s.decision_times = {0.0, t_ss};
      s.treatments = {a1, a2_code};
      s.covariates = {x11, x12, static_cast<double>(r), x2};
    } else {
      s.kappa = 1;
      s.decision_times = {0.0};
      s.treatments = {a1};
      s.covariates = {x11, x12, kNaN, kNaN};
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<SubjectRecord> generate_three_stage(const ScenarioConfig& sc, Rng& rng) {
  std::vector<SubjectRecord> out;
  out.reserve(sc.n);
  const double psi = sc.psi, zeta = sc.zeta;
  // covariate slots: x11, x12, x2, x3
  for (int i = 0; i < sc.n; ++i) {
    const double x11 = rng.rnorm();
    const double x12 = rng.uniform01();
    const int a1 = rng.rbern(0.5);
    const double lam_1d = std::exp(sc.alpha_1d + 0.5 * psi * x11 +
                                   0.5 * psi * (x12 - 0.5) + (-0.26 * zeta) * (a1 - 0.5));
    const double lam_1ss = std::exp(sc.alpha_1ss + 0.5 * psi * x11 +
                                    0.5 * psi * (x12 - 0.5) + (0.24 * zeta) * (a1 - 0.5));
    const double t_d1 = rng.rexp(lam_1d);
    const double t_ss = rng.rexp(lam_1ss);
    int r2 = t_ss < t_d1 ? 1 : 0;

    double x2 = kNaN, x3 = kNaN;
    int a2 = 0, a3 = 0, r3 = 0;
    double t2 = 0.0, t3 = 0.0, t_event = t_d1;
    if (r2 == 1) {
      t2 = t_ss;
      const double px2 = expit(0.2 + 0.5 * psi * x11 + 0.4 * psi * x12 +
                               (0.12 * zeta) * a1);
      x2 = rng.rbern(px2);
      a2 = rng.rbern(0.5);
      const double lam_2d =
          std::exp(sc.alpha_2d + 0.5 * psi * x11 + (-0.52 * psi) * (x12 - 0.5) +
                   0.6 * psi * (x2 - px2) + (-0.1 * zeta) * (a1 - 0.5) +
                   (-0.11 * zeta) * (a2 - 0.5));
      const double lam_2ts =
          std::exp(sc.alpha_2ts + 0.5 * psi * x11 + (-0.52 * psi) * (x12 - 0.5) +
                   0.6 * psi * (x2 - px2) + (-0.1 * zeta) * (a1 - 0.5) +
                   (-0.11 * zeta) * (a2 - 0.5));
      const double t_d2 = rng.rexp(lam_2d);
      const double t_ts = rng.rexp(lam_2ts);
      r3 = t_ts < t_d2 ? 1 : 0;
      if (r3 == 1) {
        t3 = t_ss + t_ts;
        const double px3 = expit(0.2 + 0.5 * psi * x11 + 0.4 * psi * x12 +
                                 (0.12 * zeta) * x2 + (-0.15 * zeta) * a1 + 0.0 * a2);
        x3 = rng.rbern(px3);
        a3 = rng.rbern(0.5);
        const double lam_3al =
            std::exp(sc.alpha_3al + 0.5 * psi * x11 + (-0.52 * psi) * (x12 - 0.5) +
                     0.6 * psi * (x2 - px2) + 0.1 * psi * (x3 - px3) +
                     (-0.1 * zeta) * (a1 - 0.5) + (-0.11 * zeta) * (a2 - 0.5) +
                     (0.2 * zeta) * (a3 - 0.5));
        t_event = t3 + rng.rexp(lam_3al);
      } else {
        t_event = t_ss + t_d2;
      }
    }

    const double cens = rng.runif(0.0, sc.c_max);
    const double u = std::min(t_event, cens);
    const int delta = t_event <= cens ? 1 : 0;
    if (r3 == 1 && cens < t3) r3 = 0;
    if (r2 == 1 && cens < t2) r2 = 0;

    SubjectRecord s;
    s.id = subject_id(i);
    s.u = u;
    s.delta = delta;
    if (r2 == 1 && r3 == 1) {
      s.kappa = 3;
      s.decision_times = {0.0, t2, t3};
      s.treatments = {a1, a2, a3};
      s.covariates = {x11, x12, x2, x3};
    } else if (r2 == 1) {
      s.kappa = 2;
      s.decision_times = {0.0, t2};
      s.treatments = {a1, a2};
      s.covariates = {x11, x12, x2, kNaN};
    } else {
      s.kappa = 1;
      s.decision_times = {0.0};
      s.treatments = {a1};
      s.covariates = {x11, x12, kNaN, kNaN};
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Cohort generate_scenario(const ScenarioConfig& config, uint64_t seed) {
  if (config.n < 1) throw ConfigError("scenario n must be >= 1");
  Rng rng(seed);
  ScenarioArtifacts art = scenario_artifacts(config);
  std::vector<SubjectRecord> records;
  switch (config.family) {
    case ScenarioConfig::Family::Kidwell:
      records = generate_kidwell(config, rng);
      break;
    case ScenarioConfig::Family::C9710:
      records = generate_competing(config, rng, false);
      break;
    case ScenarioConfig::Family::Control:
      records = generate_competing(config, rng, true);
      break;
    case ScenarioConfig::Family::EightRegime:
      records = generate_eight_regime(config, rng);
      break;
    case ScenarioConfig::Family::ThreeStage:
      records = generate_three_stage(config, rng);
      break;
  }
  return Cohort(art.design, art.covariates, std::move(records));
}

double hazard_prior_response(double lambda1, double lambda2, double pi_r, double u) {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0)) {
    throw ConfigError("hazard rates must be positive");
  }
  const double num = (1.0 - pi_r) * lambda1 * std::exp(-lambda1 * u);
  const double den = (1.0 - pi_r) * std::exp(-lambda1 * u) + pi_r * std::exp(-lambda2 * u);
  return num / den;
}

double lambda0_response_design(double lambda1, double lambda2, double lambda3,
                               double pi_r, double u) {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !(lambda3 > 0.0)) {
    throw ConfigError("hazard rates must be positive");
  }
  if (lambda2 == lambda3) {
    throw SingularParameterizationError(
        "pooled response-design hazard is undefined at lambda2 == lambda3");
  }
  const double d23 = lambda2 - lambda3;
  const double num = (1.0 - pi_r) * lambda1 * std::exp(-lambda1 * u) +
                     pi_r * lambda2 * lambda3 *
                         (std::exp(-lambda3 * u) - std::exp(-lambda2 * u)) / d23;
  const double den = (1.0 - pi_r) * std::exp(-lambda1 * u) +
                     pi_r *
                         (lambda2 * std::exp(-lambda3 * u) -
                          lambda3 * std::exp(-lambda2 * u)) /
                         d23;
  return num / den;
}

double lambda0_competing_design(double lambda1, double lambda2, double lambda3,
                                double u) {
  if (!(lambda1 > 0.0) || !(lambda2 > 0.0) || !(lambda3 > 0.0)) {
    throw ConfigError("hazard rates must be positive");
  }
  const double e12 = std::exp(-(lambda1 + lambda2) * u);
  const double e3 = std::exp(-lambda3 * u);
  const double num = (lambda1 + lambda2) * (lambda1 - lambda3) * e12 +
                     lambda2 * lambda3 * e3;
  const double den = (lambda1 - lambda3) * e12 + lambda2 * e3;
  return num / den;
}

HazardDiagnostics hazard_diagnostics(double lambda1, double lambda2, double lambda3,
                                     double pi_r, const std::vector<double>& grid) {
  HazardDiagnostics d;
  d.grid = grid;
  for (double u : grid) {
    d.prior_response.push_back(hazard_prior_response(lambda1, lambda2, pi_r, u));
    d.post_response.push_back(lambda3);
    d.lambda0_response.push_back(
        lambda0_response_design(lambda1, lambda2, lambda3, pi_r, u));
    d.lambda0_competing.push_back(
        lambda0_competing_design(lambda1, lambda2, lambda3, u));
  }
  return d;
}

McReport monte_carlo(const ScenarioConfig& config, int reps, const McOptions& options,
                     uint64_t master_seed) {
  if (reps < 0) throw ConfigError("reps must be >= 0");
  const auto t0 = std::chrono::steady_clock::now();

  McReport report;
  report.scenario = config.id;
  report.n = config.n;
  report.zeta = config.zeta;
  report.reps = reps;
  report.master_seed = master_seed;
  report.alpha = options.alpha;
  for (const std::string& v : options.variants) {
    if (v != "U_nocov" && v != "C_nocov" && v != "U_cov" && v != "C_cov") {
      throw ConfigError("unknown variant '" + v + "'");
    }
    report.variants.push_back({v, 0, 0.0, 0.0});
  }
  if (reps == 0 || report.variants.empty()) return report;

  ScenarioArtifacts art = scenario_artifacts(config);
  std::vector<std::string> regime_src = art.regimes;
  if (!options.custom_regimes.empty()) {
    regime_src = options.custom_regimes;
  } else if (!options.regime_subset.empty()) {
    regime_src.clear();
    for (int idx : options.regime_subset) {
      if (idx < 0 || idx >= static_cast<int>(art.regimes.size())) {
        throw ConfigError("regime subset index " + std::to_string(idx) +
                          " out of range");
      }
      regime_src.push_back(art.regimes[idx]);
    }
  }
  // Regimes are parsed per replicate against the replicate's cohort scope,
  // but the source and design never change; parse once against a scope
  // built from the declared columns.
  VarScope scope;
  scope.stages = art.design.stages;
  for (const auto& [name, stage] : art.covariates) scope.covariate_stage[name] = stage;
  std::vector<Regime> regimes;
  for (size_t i = 0; i < regime_src.size(); ++i) {
    regimes.push_back(
        parse_regime(regime_src[i], art.design, scope, "r" + std::to_string(i + 1)));
  }
  if (regimes.size() < 2) {
    throw ConfigError("monte_carlo requires at least two regimes");
  }

  const bool need_nocov =
      std::find(options.variants.begin(), options.variants.end(), "U_nocov") !=
          options.variants.end() ||
      std::find(options.variants.begin(), options.variants.end(), "C_nocov") !=
          options.variants.end();
  const bool need_cov =
      std::find(options.variants.begin(), options.variants.end(), "U_cov") !=
          options.variants.end() ||
      std::find(options.variants.begin(), options.variants.end(), "C_cov") !=
          options.variants.end();

  const int n_threads = std::max(1, options.threads);
  struct Tally {
    std::vector<int> rejections;
    int errors = 0;
    int fallbacks = 0;
  };
  std::vector<Tally> tallies(n_threads);
  for (auto& t : tallies) t.rejections.assign(report.variants.size(), 0);

  auto worker = [&](int tid) {
    Tally& tally = tallies[tid];
    for (int r = tid; r < reps; r += n_threads) {
      const uint64_t seed = splitmix64(master_seed ^ static_cast<uint64_t>(r));
      try {
        Cohort cohort = generate_scenario(config, seed);
        FittedPropensity fitted;
        BasisSpec empty_basis;
        bool fell_back = false;
        try {
          fitted = fit_saturated(cohort);
        } catch (const DataError&) {
          fitted = known_propensity(cohort, art.known);
          fell_back = true;
          ++tally.fallbacks;
        }
        TestOptions topt;
        topt.L = options.L;
        topt.at_risk_fraction = options.at_risk_fraction;

        TestComputation comp(cohort, regimes, fitted, topt);
        TestPair nocov, cov;
        if (need_nocov) nocov = comp.with_basis(empty_basis);
        if (need_cov) {
          cov = fell_back ? comp.with_basis(empty_basis)
                          : comp.with_basis(art.cov_basis);
        }
        for (size_t v = 0; v < report.variants.size(); ++v) {
          const std::string& name = report.variants[v].name;
          const TestResult* res = nullptr;
          if (name == "U_nocov") res = &nocov.uncorrected;
          if (name == "C_nocov") res = &nocov.corrected;
          if (name == "U_cov") res = &cov.uncorrected;
          if (name == "C_cov") res = &cov.corrected;
          if (res != nullptr && res->p_value < options.alpha) ++tally.rejections[v];
        }
      } catch (const Error&) {
        ++tally.errors;
      }
    }
  };

  if (n_threads == 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& th : pool) th.join();
  }

  for (const Tally& t : tallies) {
    report.errors += t.errors;
    report.fallbacks += t.fallbacks;
    for (size_t v = 0; v < report.variants.size(); ++v) {
      report.variants[v].rejections += t.rejections[v];
    }
  }
  for (auto& v : report.variants) {
    v.rate = static_cast<double>(v.rejections) / reps;
    v.mc_se = std::sqrt(v.rate * (1.0 - v.rate) / reps);
  }
  report.seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace regimetest
