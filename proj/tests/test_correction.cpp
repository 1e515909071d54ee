#include <doctest.h>

#include <cmath>

#include "regimetest/correction.hpp"
#include "regimetest/engine.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/simulate.hpp"
#include "test_helpers.hpp"

using namespace regimetest;
using namespace rt_test;

TEST_CASE("zero correction terms leave the covariance unchanged") {
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2, 0.5, 0.5, 1;
  Eigen::MatrixXd iid = Eigen::MatrixXd::Random(6, 2);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(6, 2);
  CHECK((corrected_covariance(sigma, iid, g, 6) - sigma).norm() == 0.0);
}

TEST_CASE("corrected covariance is symmetric and matches a two-subject hand value") {
  Eigen::MatrixXd iid(2, 1);
  iid << 0.5, 0.5;
  Eigen::MatrixXd g(2, 1);
  g << 0.5, 0.5;
  Eigen::MatrixXd sigma = covariance(iid);
  Eigen::MatrixXd corrected = corrected_covariance(sigma, iid, g, 2);
  // sigma = 0.25; correction = (2/4) * 2 * sum(t_i g_i) = 0.5 * 2 * 0.5
  CHECK(corrected(0, 0) == doctest::Approx(0.75));

  Eigen::MatrixXd iid2 = Eigen::MatrixXd::Random(9, 3);
  Eigen::MatrixXd g2 = Eigen::MatrixXd::Random(9, 3);
  Eigen::MatrixXd s2 = covariance(iid2);
  Eigen::MatrixXd c2 = corrected_covariance(s2, iid2, g2, 9);
  CHECK((c2 - c2.transpose()).norm() == 0.0);
}

TEST_CASE("dimension mismatches are rejected") {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd iid = Eigen::MatrixXd::Zero(5, 2);
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 2);
  CHECK_THROWS_AS(corrected_covariance(sigma, iid, g, 5), NumericError);
}

TEST_CASE("standalone g_terms agrees with the fused pipeline") {
  ScenarioConfig sc = ScenarioConfig::named("3a", 200, 0.0);
  Cohort c = generate_scenario(sc, 60u);
  ScenarioArtifacts art = scenario_artifacts(sc);
  VarScope scope = c.var_scope();
  std::vector<Regime> regimes;
  for (const std::string& src : art.regimes) {
    regimes.push_back(parse_regime(src, art.design, scope));
  }
  FittedPropensity fit = fit_saturated(c);
  std::vector<double> grid = event_grid(c, default_truncation(c, 0.02));
  WeightTable wt(c, regimes, fit);

  Eigen::MatrixXd g_fused;
  iid_terms(wt, grid, &g_fused);
  PooledRiskSeries series = pooled_series(wt, grid);
  Eigen::MatrixXd g_standalone = g_terms(wt, grid, series);
  CHECK((g_fused - g_standalone).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("subjects inconsistent with every regime have zero correction terms") {
  Cohort c = one_stage_cohort({one_stage_subject("s1", 1, 1.0, 1),
                               one_stage_subject("s2", 0, 2.0, 1),
                               one_stage_subject("s3", 2, 1.5, 1)},
                              {0, 1, 2});
  PropensitySpec spec;
  spec.mode = PropensitySpec::Mode::Known;
  KnownUnitProbs s1{1, "", {{0, 1.0 / 3}, {1, 1.0 / 3}, {2, 1.0 / 3}}};
  spec.known = {s1};
  FittedPropensity prop = known_propensity(c, spec);
  std::vector<Regime> regimes = {arm_regime(c.design(), 1), arm_regime(c.design(), 0)};
  std::vector<double> grid = event_grid(c, 100.0);
  WeightTable wt(c, regimes, prop);
  Eigen::MatrixXd g;
  iid_terms(wt, grid, &g);
  CHECK(g.row(2).norm() == 0.0);  // the arm-2 subject
}

TEST_CASE("duplicating the cohort halves the correction term exactly") {
  ScenarioConfig sc = ScenarioConfig::named("1a", 150, 0.0);
  Cohort c = generate_scenario(sc, 19u);
  ScenarioArtifacts art = scenario_artifacts(sc);
  VarScope scope = c.var_scope();
  std::vector<Regime> regimes;
  for (const std::string& src : art.regimes) {
    regimes.push_back(parse_regime(src, art.design, scope));
  }

  std::vector<SubjectRecord> doubled = c.subjects();
  for (SubjectRecord s : c.subjects()) {
    s.id += "_copy";
    doubled.push_back(std::move(s));
  }
  Cohort c2(art.design, art.covariates, std::move(doubled));

  const double L = default_truncation(c, 0.02);
  std::vector<double> grid = event_grid(c, L);
  std::vector<double> grid2 = event_grid(c2, L);
  REQUIRE(grid == grid2);

  FittedPropensity k1 = known_propensity(c, art.known);
  FittedPropensity k2 = known_propensity(c2, art.known);
  WeightTable wt1(c, regimes, k1);
  WeightTable wt2(c2, regimes, k2);

  Eigen::MatrixXd g1, g2;
  Eigen::MatrixXd iid1 = iid_terms(wt1, grid, &g1);
  Eigen::MatrixXd iid2 = iid_terms(wt2, grid2, &g2);

  Eigen::MatrixXd s1 = covariance(iid1);
  Eigen::MatrixXd s2 = covariance(iid2);
  CHECK((s1 - s2).cwiseAbs().maxCoeff() < 1e-12);

  Eigen::MatrixXd corr1 = corrected_covariance(s1, iid1, g1, c.size()) - s1;
  Eigen::MatrixXd corr2 = corrected_covariance(s2, iid2, g2, c2.size()) - s2;
  CHECK((corr2 - 0.5 * corr1).cwiseAbs().maxCoeff() < 1e-12);
}
