#ifndef REGIMETEST_SIMULATE_HPP
#define REGIMETEST_SIMULATE_HPP

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "regimetest/augment.hpp"
#include "regimetest/cohort.hpp"
#include "regimetest/propensity.hpp"

namespace regimetest {

// Fully parameterized generative scenario. Named ids (1a, 1b, 1b-alt, 2a,
// 2b, 2b-alt, 3a, 3b, 3c, 4, 5, 3stage) load the standard parameter values;
// "custom" starts from a family's defaults and applies JSON overrides.
struct ScenarioConfig {
  enum class Family { Kidwell, C9710, Control, EightRegime, ThreeStage };

  std::string id = "1a";
  Family family = Family::Kidwell;
  int n = 1000;
  double zeta = 0.0;
  double c_max = 3.80;

  // two-arm response-design family (scenarios 1-2); arrays in printed order:
  // theta = (NR1, NR0, R1, R0, RE11, RE10, RE01, RE00)
  std::array<double, 8> theta{};
  std::array<double, 3> theta_x2{};  // intercept, x1, a1
  std::array<double, 2> delta_nr{};  // arm 1, arm 0
  std::array<double, 2> delta_r{};   // arm 1, arm 0
  std::array<double, 4> alpha1{};    // (1,1), (1,0), (0,1), (0,0)
  std::array<double, 4> alpha2{};
  double pi_r = 0.4;

  // competing-risks families (scenarios 3, 4, 5, 3stage)
  double psi = 1.5;
  double alpha_1d = -5.5;
  double alpha_1ss = -4.2;
  double alpha_2al = -5.5;
  double alpha_2d = -4.0;   // 3stage
  double alpha_2ts = -2.7;  // 3stage
  double alpha_3al = -3.0;  // 3stage

  static ScenarioConfig named(const std::string& id, int n, double zeta);
  static ScenarioConfig from_json(const nlohmann::json& j);
  nlohmann::json params_dump() const;
};

// Design, column declarations, embedded regimes, covariate basis and the
// design randomization constants for a scenario's analysis.
struct ScenarioArtifacts {
  SmartDesign design;
  std::vector<std::pair<std::string, int>> covariates;
  std::vector<std::string> regimes;  // rule-DSL sources
  std::vector<std::string> regime_labels;
  BasisSpec cov_basis;
  PropensitySpec known;
};
ScenarioArtifacts scenario_artifacts(const ScenarioConfig& config);

// Draws one cohort. Identical (config, seed) pairs produce identical cohorts.
Cohort generate_scenario(const ScenarioConfig& config, uint64_t seed);

uint64_t splitmix64(uint64_t x);

// Closed-form diagnostic hazards for the two-stage generative designs.
// Hazard of the event before response at time u.
double hazard_prior_response(double lambda1, double lambda2, double pi_r, double u);
// Pooled hazard for the response design (throws SingularParameterizationError
// when lambda2 == lambda3).
double lambda0_response_design(double lambda1, double lambda2, double lambda3,
                               double pi_r, double u);
// Pooled hazard for the competing-risks design.
double lambda0_competing_design(double lambda1, double lambda2, double lambda3,
                                double u);

struct HazardDiagnostics {
  std::vector<double> grid;
  std::vector<double> prior_response;
  std::vector<double> post_response;  // constant lambda3
  std::vector<double> lambda0_response;
  std::vector<double> lambda0_competing;
};
HazardDiagnostics hazard_diagnostics(double lambda1, double lambda2, double lambda3,
                                     double pi_r, const std::vector<double>& grid);

struct McVariantResult {
  std::string name;
  int rejections = 0;
  double rate = 0.0;
  double mc_se = 0.0;
};

struct McReport {
  std::string scenario;
  int n = 0;
  double zeta = 0.0;
  int reps = 0;
  uint64_t master_seed = 0;
  double alpha = 0.05;
  std::vector<McVariantResult> variants;
  int errors = 0;
  int fallbacks = 0;  // replicates analyzed with known probabilities
  double seconds = 0.0;
  std::string rng = "mt19937_64+splitmix64";
};

struct McOptions {
  std::vector<std::string> variants = {"U_nocov", "C_nocov", "U_cov", "C_cov"};
  std::vector<int> regime_subset;           // indices into the embedded list
  std::vector<std::string> custom_regimes;  // overrides the embedded list
  int threads = 1;
  double alpha = 0.05;
  double at_risk_fraction = 0.02;
  std::optional<double> L;
};

// Runs `reps` independent replicates; replicate r uses seed
// splitmix64(master_seed ^ r), so results do not depend on thread count.
McReport monte_carlo(const ScenarioConfig& config, int reps, const McOptions& options,
                     uint64_t master_seed);

}  // namespace regimetest

#endif
