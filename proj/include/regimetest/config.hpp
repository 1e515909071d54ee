#ifndef REGIMETEST_CONFIG_HPP
#define REGIMETEST_CONFIG_HPP

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "regimetest/augment.hpp"
#include "regimetest/design.hpp"
#include "regimetest/propensity.hpp"

namespace regimetest {

// Everything needed to analyze a cohort: the design, the regimes under
// comparison, the propensity model, the augmentation basis and the test
// settings.
struct AnalysisConfig {
  SmartDesign design;
  std::vector<std::pair<std::string, int>> covariate_stages;
  std::vector<std::string> regimes;  // rule-DSL sources
  std::vector<int> regime_set;       // indices into `regimes`
  PropensitySpec propensity;         // default: saturated
  BasisSpec basis;                   // default: empty
  std::optional<double> L;
  double at_risk_fraction = 0.02;
  bool correction = true;
  double alpha = 0.05;
  double rank_tolerance = 1e-8;
};

AnalysisConfig parse_config(const std::string& path);
AnalysisConfig parse_config_json(const nlohmann::json& j);
nlohmann::json dump_config(const AnalysisConfig& config);

}  // namespace regimetest

#endif
