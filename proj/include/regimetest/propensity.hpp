#ifndef REGIMETEST_PROPENSITY_HPP
#define REGIMETEST_PROPENSITY_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "regimetest/cohort.hpp"

namespace regimetest {

// Probabilities supplied directly for one fitting unit (stage-1, or a
// stage-k stratum identified by name).
struct KnownUnitProbs {
  int stage = 1;
  std::string stratum;  // empty for the stage-1 unit
  std::map<int, double> probs;
};

struct PropensitySpec {
  enum class Mode { Known, Saturated, Logistic };
  Mode mode = Mode::Saturated;
  std::vector<KnownUnitProbs> known;  // Known mode
  // Logistic mode: covariate columns of the linear predictor; "1" denotes
  // the intercept. Units without a formula default to intercept-only.
  std::vector<std::string> stage1_formula;
  std::map<int, std::map<std::string, std::vector<std::string>>> stage_formulas;
};

// A fitted treatment-assignment model: predicted probabilities
// w_k(H_k, a_k) per subject and stage, and per-subject ML score vectors.
class FittedPropensity {
 public:
  struct Unit {
    int stage = 1;
    int stratum = -1;  // -1 = stage-1 unit (all subjects)
    std::vector<int> options;
    int baseline = 0;                 // option code absorbed by the model
    std::vector<int> param_options;   // options carrying a parameter, in order
    int score_offset = 0;
    int score_len = 0;
    bool logistic = false;
    // saturated / known: probability per option
    std::map<int, double> prob;
    // logistic: coefficient vector over formula columns
    Eigen::VectorXd gamma;
    std::vector<int> formula_cols;  // covariate index, -1 = intercept
    std::vector<std::string> formula_names;
  };

  int score_dim() const { return score_dim_; }
  const Eigen::VectorXd& gamma_hat() const { return gamma_hat_; }
  const std::vector<Unit>& units() const { return units_; }

  // w_k(H_k, option) for the given subject; 0 when the option is not
  // feasible for the subject's stratum at that stage.
  double prob(const Cohort& cohort, const SubjectRecord& s, int stage,
              int option) const;
  double prob_indexed(const Cohort& cohort, int subject, int stage, int option) const;

  // ML score vector; blocks for unreached stages or other strata are zero.
  Eigen::VectorXd score_vector(const Cohort& cohort, int subject) const;

 private:
  std::vector<Unit> units_;
  Eigen::VectorXd gamma_hat_;
  int score_dim_ = 0;
  bool known_mode_ = false;

  double unit_prob(const SubjectRecord& s, const Unit& u, int option) const;
  const Unit* unit_for(const Cohort& cohort, int subject, int stage) const;

  friend FittedPropensity fit_saturated(const Cohort&);
  friend FittedPropensity fit_logistic(const Cohort&, const PropensitySpec&);
  friend FittedPropensity known_propensity(const Cohort&, const PropensitySpec&);
};

// Per-stratum sample proportions (the ML fit of the saturated model).
// Throws EmptyStratumError / DegenerateStratumError.
FittedPropensity fit_saturated(const Cohort& cohort);

// Per-unit binary logistic models fitted by damped Newton iterations.
FittedPropensity fit_logistic(const Cohort& cohort, const PropensitySpec& spec);

// Probabilities taken from the spec; score_dim() == 0.
FittedPropensity known_propensity(const Cohort& cohort, const PropensitySpec& spec);

FittedPropensity fit_propensity(const Cohort& cohort, const PropensitySpec& spec);

// Free-function form of FittedPropensity::score_vector.
Eigen::VectorXd score_vector(const SubjectRecord& s, const Cohort& cohort,
                             const FittedPropensity& fitted);

}  // namespace regimetest

#endif
