#include "regimetest/config.hpp"

#include <fstream>

#include <json.hpp>

#include "regimetest/errors.hpp"
#include "regimetest/regime.hpp"

namespace regimetest {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key, const char* where) {
  if (!j.contains(key)) {
    throw ConfigError(std::string(where) + ": missing key '" + key + "'");
  }
  return j.at(key);
}

SmartDesign parse_design(const json& j) {
  SmartDesign d;
  d.stages = require(j, "stages", "design").get<int>();
  const json& opts = require(j, "options", "design");
  if (!opts.is_array()) throw ConfigError("design.options must be an array");
  for (const auto& stage_opts : opts) {
    std::vector<int> codes;
    for (const auto& c : stage_opts) codes.push_back(c.get<int>());
    d.options.push_back(std::move(codes));
  }
  if (j.contains("strata")) {
    for (const auto& [key, list] : j.at("strata").items()) {
      int stage = 0;
      try {
        stage = std::stoi(key);
      } catch (...) {
        throw ConfigError("design.strata keys must be stage numbers, found '" +
                          key + "'");
      }
      std::vector<Stratum> strata;
      for (const auto& sj : list) {
        Stratum s;
        s.name = require(sj, "name", "design.strata").get<std::string>();
        s.condition =
            Condition::parse(require(sj, "condition", "design.strata").get<std::string>());
        for (const auto& o : require(sj, "options", "design.strata")) {
          s.options.push_back(o.get<int>());
        }
        strata.push_back(std::move(s));
      }
      d.strata[stage] = std::move(strata);
    }
  }
  d.validate();
  return d;
}

PropensitySpec parse_propensity(const json& j) {
  PropensitySpec spec;
  const std::string mode = require(j, "mode", "propensity").get<std::string>();
  if (mode == "saturated") {
    spec.mode = PropensitySpec::Mode::Saturated;
  } else if (mode == "known") {
    spec.mode = PropensitySpec::Mode::Known;
    for (const auto& vj : require(j, "values", "propensity")) {
      KnownUnitProbs k;
      k.stage = require(vj, "stage", "propensity.values").get<int>();
      k.stratum = vj.value("stratum", std::string());
      for (const auto& [code, p] : require(vj, "probs", "propensity.values").items()) {
        k.probs[std::stoi(code)] = p.get<double>();
      }
      spec.known.push_back(std::move(k));
    }
  } else if (mode == "logistic") {
    spec.mode = PropensitySpec::Mode::Logistic;
    if (j.contains("stage_formulas")) {
      for (const auto& [key, val] : j.at("stage_formulas").items()) {
        const int stage = std::stoi(key);
        if (stage == 1) {
          spec.stage1_formula = val.get<std::vector<std::string>>();
        } else {
          for (const auto& [sname, cols] : val.items()) {
            spec.stage_formulas[stage][sname] = cols.get<std::vector<std::string>>();
          }
        }
      }
    }
  } else {
    throw ConfigError("propensity.mode must be one of saturated|known|logistic, found '" +
                      mode + "'");
  }
  return spec;
}

BasisSpec parse_basis(const json& j) {
  BasisSpec basis;
  for (const auto& [key, val] : j.items()) {
    if (key.rfind("stage", 0) != 0) {
      throw ConfigError("basis keys must look like 'stage<k>', found '" + key + "'");
    }
    int stage = 0;
    try {
      stage = std::stoi(key.substr(5));
    } catch (...) {
      throw ConfigError("basis keys must look like 'stage<k>', found '" + key + "'");
    }
    if (stage == 1) {
      basis.stage1 = val.get<std::vector<std::string>>();
    } else {
      for (const auto& [sname, cols] : val.items()) {
        basis.stages[stage][sname] = cols.get<std::vector<std::string>>();
      }
    }
  }
  return basis;
}

}  // namespace

AnalysisConfig parse_config_json(const json& j) {
  AnalysisConfig c;
  c.design = parse_design(require(j, "design", "config"));

  const json& covs = require(j, "covariates", "config");
  for (const auto& [name, stage] : covs.items()) {
    c.covariate_stages.emplace_back(name, stage.get<int>());
  }

  VarScope scope;
  scope.stages = c.design.stages;
  for (const auto& [name, stage] : c.covariate_stages) {
    scope.covariate_stage[name] = stage;
  }
  // Validate stratum conditions against the declared scope.
  for (const auto& [stage, strata] : c.design.strata) {
    for (const Stratum& s : strata) {
      for (const std::string& var : s.condition.variables()) {
        std::optional<int> from = scope.available_from(var);
        if (!from.has_value()) {
          throw ConfigError("stratum '" + s.name + "' references unknown variable '" +
                            var + "'");
        }
        if (*from > stage) {
          throw ConfigError("stratum '" + s.name + "' uses variable '" + var +
                            "' not available until stage " + std::to_string(*from));
        }
      }
    }
  }

  c.regimes = require(j, "regimes", "config").get<std::vector<std::string>>();
  for (size_t i = 0; i < c.regimes.size(); ++i) {
    try {
      parse_regime(c.regimes[i], c.design, scope);
    } catch (const Error& e) {
      throw ConfigError("regime " + std::to_string(i) + ": " + e.what());
    }
  }

  if (j.contains("regime_set")) {
    c.regime_set = j.at("regime_set").get<std::vector<int>>();
  } else {
    for (size_t i = 0; i < c.regimes.size(); ++i) {
      c.regime_set.push_back(static_cast<int>(i));
    }
  }
  for (int idx : c.regime_set) {
    if (idx < 0 || idx >= static_cast<int>(c.regimes.size())) {
      throw ConfigError("regime_set index " + std::to_string(idx) + " out of range");
    }
  }

  c.propensity = j.contains("propensity") ? parse_propensity(j.at("propensity"))
                                          : PropensitySpec{};
  if (j.contains("basis")) c.basis = parse_basis(j.at("basis"));
  if (j.contains("L") && !j.at("L").is_null()) c.L = j.at("L").get<double>();
  if (j.contains("at_risk_fraction")) {
    c.at_risk_fraction = j.at("at_risk_fraction").get<double>();
    if (!(c.at_risk_fraction > 0.0) || c.at_risk_fraction >= 1.0) {
      throw ConfigError("at_risk_fraction must lie in (0,1)");
    }
  }
  if (j.contains("correction")) c.correction = j.at("correction").get<bool>();
  if (j.contains("alpha")) {
    c.alpha = j.at("alpha").get<double>();
    if (!(c.alpha > 0.0) || c.alpha >= 1.0) {
      throw ConfigError("alpha must lie in (0,1)");
    }
  }
  if (j.contains("rank_tolerance")) {
    c.rank_tolerance = j.at("rank_tolerance").get<double>();
  }
  return c;
}

AnalysisConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config_json(j);
}

json dump_config(const AnalysisConfig& c) {
  json j;
  json design;
  design["stages"] = c.design.stages;
  design["options"] = c.design.options;
  json strata = json::object();
  for (const auto& [stage, list] : c.design.strata) {
    json arr = json::array();
    for (const Stratum& s : list) {
      arr.push_back({{"name", s.name},
                     {"condition", s.condition.to_string()},
                     {"options", s.options}});
    }
    strata[std::to_string(stage)] = arr;
  }
  if (!strata.empty()) design["strata"] = strata;
  j["design"] = design;

  json covs = json::object();
  for (const auto& [name, stage] : c.covariate_stages) covs[name] = stage;
  j["covariates"] = covs;

  j["regimes"] = c.regimes;
  j["regime_set"] = c.regime_set;

  json prop;
  switch (c.propensity.mode) {
    case PropensitySpec::Mode::Saturated:
      prop["mode"] = "saturated";
      break;
    case PropensitySpec::Mode::Known: {
      prop["mode"] = "known";
      json values = json::array();
      for (const auto& k : c.propensity.known) {
        json v;
        v["stage"] = k.stage;
        if (!k.stratum.empty()) v["stratum"] = k.stratum;
        json probs = json::object();
        for (const auto& [code, p] : k.probs) probs[std::to_string(code)] = p;
        v["probs"] = probs;
        values.push_back(v);
      }
      prop["values"] = values;
      break;
    }
    case PropensitySpec::Mode::Logistic: {
      prop["mode"] = "logistic";
      json fs = json::object();
      if (!c.propensity.stage1_formula.empty()) {
        fs["1"] = c.propensity.stage1_formula;
      }
      for (const auto& [stage, per_stratum] : c.propensity.stage_formulas) {
        json m = json::object();
        for (const auto& [sname, cols] : per_stratum) m[sname] = cols;
        fs[std::to_string(stage)] = m;
      }
      prop["stage_formulas"] = fs;
      break;
    }
  }
  j["propensity"] = prop;

  json basis = json::object();
  if (!c.basis.stage1.empty()) basis["stage1"] = c.basis.stage1;
  for (const auto& [stage, per_stratum] : c.basis.stages) {
    json m = json::object();
    for (const auto& [sname, cols] : per_stratum) m[sname] = cols;
    basis["stage" + std::to_string(stage)] = m;
  }
  j["basis"] = basis;

  if (c.L.has_value()) {
    j["L"] = *c.L;
  } else {
    j["L"] = nullptr;
  }
  j["at_risk_fraction"] = c.at_risk_fraction;
  j["correction"] = c.correction;
  j["alpha"] = c.alpha;
  j["rank_tolerance"] = c.rank_tolerance;
  return j;
}

}  // namespace regimetest
