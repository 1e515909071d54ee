#ifndef REGIMETEST_COHORT_HPP
#define REGIMETEST_COHORT_HPP

#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "regimetest/design.hpp"

namespace regimetest {

// Observed data on one participant: the number of decision points reached,
// the times they were reached, the treatments received, per-stage covariates,
// and the event-or-censoring time with its indicator.
struct SubjectRecord {
  std::string id;
  int kappa = 1;
  double u = 0.0;
  int delta = 0;
  std::vector<double> decision_times;  // T_1 = 0, ..., T_kappa
  std::vector<int> treatments;         // A_1, ..., A_kappa
  std::vector<double> covariates;      // one slot per cohort column; NaN = absent
};

// Immutable validated table of subjects plus column metadata.
class Cohort {
 public:
  Cohort(SmartDesign design,
         std::vector<std::pair<std::string, int>> covariate_columns,
         std::vector<SubjectRecord> subjects);

  const SmartDesign& design() const { return design_; }
  const std::vector<SubjectRecord>& subjects() const { return subjects_; }
  int size() const { return static_cast<int>(subjects_.size()); }

  const std::vector<std::string>& covariate_names() const { return names_; }
  int covariate_stage(int col) const { return stages_[col]; }
  int covariate_index(std::string_view name) const;  // -1 when absent
  VarScope var_scope() const;

  // Stratum index of subject i at stage k (2 <= k <= kappa_i), cached at load.
  int stratum_of(int subject, int stage) const;

 private:
  SmartDesign design_;
  std::vector<std::string> names_;
  std::vector<int> stages_;
  std::vector<SubjectRecord> subjects_;
  std::vector<std::vector<int>> strata_cache_;  // per subject: stage 2..kappa
  void validate();
};

// History of subject `s` as available at decision point `stage`: prior
// treatments a1..a{stage-1}, decision times t2..t{stage}, kappa, and
// covariates declared at stages <= stage.
class SubjectStageView : public History {
 public:
  SubjectStageView(const Cohort& cohort, const SubjectRecord& s, int stage)
      : cohort_(cohort), s_(s), stage_(stage) {}
  std::optional<double> value(std::string_view name) const override;

 private:
  const Cohort& cohort_;
  const SubjectRecord& s_;
  int stage_;
};

// Loads a cohort from CSV. Columns: subject_id,kappa,u,delta,a1..aK,t2..tK,
// then covariate columns; `covariate_stages` declares the stage of every
// covariate column.
Cohort load_cohort(const std::string& path, const SmartDesign& design,
                   const std::vector<std::pair<std::string, int>>& covariate_stages);

void save_cohort(const Cohort& cohort, const std::string& path);

// Distinct event times (delta = 1) at or before L, ascending.
// Throws EmptyGridError when there are none.
std::vector<double> event_grid(const Cohort& cohort, double L);
std::vector<double> event_grid_or_empty(const Cohort& cohort, double L);

// Truncation time from the at-risk rule: the smallest observed time at which
// no more than ceil(fraction * n) subjects remain at risk (the largest
// observed time when no such time exists).
double default_truncation(const Cohort& cohort, double at_risk_fraction);

// (dN(u), Y(u)) for one subject: dN = I(U = u, delta = 1), Y = I(U >= u).
std::pair<int, int> counting_views(const SubjectRecord& s, double u);

}  // namespace regimetest

#endif
