#ifndef REGIMETEST_AUGMENT_HPP
#define REGIMETEST_AUGMENT_HPP

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "regimetest/cohort.hpp"
#include "regimetest/propensity.hpp"

namespace regimetest {

// Covariate columns entering the augmentation design matrix: a list for the
// stage-1 block and, per stage >= 2, a list per stratum. No intercept entry.
struct BasisSpec {
  std::vector<std::string> stage1;
  std::map<int, std::map<std::string, std::vector<std::string>>> stages;

  bool empty() const { return stage1.empty() && stages.empty(); }
};

// Design matrix with row i = [score vector | basis blocks], where each basis
// block is the unit's treatment residual times the chosen history columns,
// zeroed for subjects outside the unit.
Eigen::MatrixXd build_design_matrix(const Cohort& cohort,
                                    const FittedPropensity& fitted,
                                    const BasisSpec& basis);

// Residuals of column-wise least squares through the origin of `iid` on `x`,
// computed with pseudo-inverse normal equations.
Eigen::MatrixXd residualize(const Eigen::MatrixXd& iid, const Eigen::MatrixXd& x);

class Regime;
struct TestResult;
struct TestOptions;

// Efficiency-augmented test: estimated propensities with score-residual
// projection, optionally extended by the covariate basis. Requires a
// saturated or logistic propensity spec.
TestResult run_augmented_test(const Cohort& cohort, const std::vector<Regime>& regimes,
                              const PropensitySpec& prop_spec, const BasisSpec& basis,
                              const TestOptions& options);

}  // namespace regimetest

#endif
