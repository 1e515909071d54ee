#ifndef REGIMETEST_ENGINE_HPP
#define REGIMETEST_ENGINE_HPP

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "regimetest/augment.hpp"
#include "regimetest/cohort.hpp"
#include "regimetest/propensity.hpp"
#include "regimetest/regime.hpp"

namespace regimetest {

struct TestWarnings {
  int dropped_grid_points = 0;
  int negative_eigenvalues = 0;
};

struct TestResult {
  double statistic = 0.0;
  int nu = 0;
  double p_value = 1.0;
  Eigen::VectorXd components;  // the D-1 score components entering the quadratic form
  std::string variant;         // plain | estimated-gamma | augmented
  bool correction = false;
  double rank_tolerance = 1e-8;
  double L = 0.0;
  TestWarnings warnings;
};

struct TestOptions {
  std::optional<double> L;
  double at_risk_fraction = 0.02;
  bool correction = true;
  double rank_tolerance = 1e-8;
};

// Inverse-probability weights Omega_i(u, d^j) = C_i(u,d^j) I(U_i >= u) /
// pi_i(u,d^j), cached as step functions over each subject's decision times.
class WeightTable {
 public:
  WeightTable(const Cohort& cohort, const std::vector<Regime>& regimes,
              const FittedPropensity& fitted);

  int regime_count() const { return D_; }
  const Cohort& cohort() const { return *cohort_; }

  // Full Omega value at time u.
  double omega(int subject, int regime, double u) const;
  // Value of C/pi on segment s (u in [T_{s+1}, T_{s+2})), ignoring I(U >= u).
  double segment_value(int subject, int regime, int seg) const {
    return seg_[offset_[subject] + static_cast<size_t>(seg) * D_ + regime];
  }
  int segment_at(int subject, double u) const;

 private:
  const Cohort* cohort_;
  int D_ = 0;
  std::vector<size_t> offset_;
  std::vector<double> seg_;
};

// Omega(u,d) for one subject; returns 0 when the subject left the risk set
// or is inconsistent with the regime.
double omega(const SubjectRecord& subject, const Cohort& cohort,
             const Regime& regime, double u, const FittedPropensity& fitted);

// dLambda0 increments on the grid, Eq-style pooled over regimes; grid points
// with an empty weighted risk set contribute nothing and are counted.
std::vector<double> baseline_hazard(const WeightTable& wt,
                                    const std::vector<double>& grid,
                                    TestWarnings* warnings = nullptr);

// Share of the weighted risk set attributable to regime j at time u.
double qhat(const WeightTable& wt, int regime, double u);

// (D-1)-dimensional generalized score vector, last regime as reference.
Eigen::VectorXd score_statistic(const WeightTable& wt, const std::vector<double>& grid);

// Per-subject terms whose column sums reproduce score_statistic and whose
// empirical second moment estimates its covariance. Optionally also fills
// the per-subject correction terms used by the small-sample covariance
// correction (see correction.hpp).
Eigen::MatrixXd iid_terms(const WeightTable& wt, const std::vector<double>& grid,
                          Eigen::MatrixXd* g_terms_out = nullptr,
                          TestWarnings* warnings = nullptr);

// Sigma-hat = n^{-1} sum_i t_i t_i^T.
Eigen::MatrixXd covariance(const Eigen::MatrixXd& iid);

// Full pipeline: weights -> baseline hazard -> iid terms -> optional
// residualization -> covariance (optionally bias-corrected) -> generalized
// inverse -> chi-square p-value.
TestResult run_test(const Cohort& cohort, const std::vector<Regime>& regimes,
                    const PropensitySpec& prop_spec, const BasisSpec& basis,
                    const TestOptions& options);

struct TestPair {
  TestResult corrected;
  TestResult uncorrected;
};

// Shares the expensive part of the pipeline (grid, weights, iid and
// correction terms) across basis choices and correction flags.
class TestComputation {
 public:
  TestComputation(const Cohort& cohort, const std::vector<Regime>& regimes,
                  const FittedPropensity& fitted, const TestOptions& options);
  TestPair with_basis(const BasisSpec& basis) const;
  const Eigen::MatrixXd& iid() const { return iid_; }
  const Eigen::MatrixXd& correction_terms() const { return g_; }
  double truncation() const { return L_; }
  const std::vector<double>& grid() const { return grid_; }

 private:
  const Cohort* cohort_;
  const FittedPropensity* fitted_;
  TestOptions options_;
  double L_ = 0.0;
  std::vector<double> grid_;
  Eigen::MatrixXd iid_;
  Eigen::MatrixXd g_;
  TestWarnings warn_;
};

// Same pipeline with both the corrected and uncorrected covariance, sharing
// all intermediate computation. Used by the simulation harness.
TestPair run_test_both(const Cohort& cohort, const std::vector<Regime>& regimes,
                       const FittedPropensity& fitted, const BasisSpec& basis,
                       const TestOptions& options);

struct SurvivalCurve {
  std::string label;
  std::vector<double> times;     // starts at 0
  std::vector<double> cumhaz;    // nondecreasing, starts at 0
  std::vector<double> survival;  // exp(-cumhaz)
  int dropped_grid_points = 0;
};

// Regime-specific cumulative hazard / survival on the grid.
SurvivalCurve regime_cumhaz(const Cohort& cohort, const Regime& regime,
                            const FittedPropensity& fitted,
                            const std::vector<double>& grid);

}  // namespace regimetest

#endif
