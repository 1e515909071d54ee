#ifndef REGIMETEST_REGIME_HPP
#define REGIMETEST_REGIME_HPP

#include <optional>
#include <string>
#include <vector>

#include "regimetest/design.hpp"

namespace regimetest {

struct SubjectRecord;
class Cohort;
class FittedPropensity;

// One ordered if/then clause of a stage rule; the last clause of a stage
// must be a catch-all (condition "true").
struct Clause {
  Condition condition;
  int treatment = 0;
};

// First-match-wins clause list for one decision point.
struct StageRule {
  std::vector<Clause> clauses;
};

// A treatment regime: one StageRule per decision point.
class Regime {
 public:
  Regime() = default;
  Regime(std::vector<StageRule> stages, std::string label)
      : stages_(std::move(stages)), label_(std::move(label)) {}

  int stage_count() const { return static_cast<int>(stages_.size()); }
  const StageRule& stage(int k) const { return stages_.at(k - 1); }
  const std::string& label() const { return label_; }
  std::string pretty_print() const;

 private:
  std::vector<StageRule> stages_;
  std::string label_;
};

// Parses rule-DSL source into a Regime validated against the design: every
// assigned code must lie in the stage's option set, every referenced
// variable must be known and available at the clause's stage, and every
// stage must end in a catch-all clause.
Regime parse_regime(const std::string& text, const SmartDesign& design,
                    const VarScope& scope, const std::string& label = "");

// Applies the stage-k rule to a history. Returns nullopt (no selection)
// when the history indicates the event has already occurred.
std::optional<int> evaluate_rule(const Regime& regime, int k, const History& h);

// Indicator that the treatments received through time u are consistent with
// following the regime: prod_k [ I(T_k > u) + I(T_k <= u) I(A_k = d_k(H_k)) ].
int consistency_indicator(const SubjectRecord& subject, const Cohort& cohort,
                          const Regime& regime, double u);

// Cumulative probability of receiving the regime-consistent treatments
// through u: prod_k [ I(T_k > u) + I(T_k <= u) w_k(H_k, d_k(H_k)) ].
// Throws PositivityViolation when a required probability is zero.
double propensity_product(const SubjectRecord& subject, const Cohort& cohort,
                          const Regime& regime, double u,
                          const FittedPropensity& prop);

}  // namespace regimetest

#endif
