#include <cmath>

#include "regimetest/cohort.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/propensity.hpp"
#include "regimetest/regime.hpp"

namespace regimetest {

int consistency_indicator(const SubjectRecord& subject, const Cohort& cohort,
                          const Regime& regime, double u) {
  if (u < 0.0) throw DataError("consistency_indicator: u must be nonnegative");
  for (int k = 1; k <= subject.kappa; ++k) {
    // Decision times are increasing, so later factors are all 1 once T_k > u.
    if (subject.decision_times[k - 1] > u) break;
    SubjectStageView view(cohort, subject, k);
    std::optional<int> choice = evaluate_rule(regime, k, view);
    if (!choice.has_value()) {
      throw DataError("regime made no selection at a reached decision point");
    }
    if (subject.treatments[k - 1] != *choice) return 0;
  }
  return 1;
}

double propensity_product(const SubjectRecord& subject, const Cohort& cohort,
                          const Regime& regime, double u,
                          const FittedPropensity& prop) {
  if (u < 0.0) throw DataError("propensity_product: u must be nonnegative");
  double pi = 1.0;
  for (int k = 1; k <= subject.kappa; ++k) {
    if (subject.decision_times[k - 1] > u) break;
    SubjectStageView view(cohort, subject, k);
    std::optional<int> choice = evaluate_rule(regime, k, view);
    if (!choice.has_value()) {
      throw DataError("regime made no selection at a reached decision point");
    }
    const double w = prop.prob(cohort, subject, k, *choice);
    if (!(w > 0.0)) {
      throw PositivityViolation("zero assignment probability for option " +
                                std::to_string(*choice) + " at stage " +
                                std::to_string(k) + " (subject '" + subject.id + "')");
    }
    pi *= w;
  }
  return pi;
}

}  // namespace regimetest
