#ifndef REGIMETEST_CORRECTION_HPP
#define REGIMETEST_CORRECTION_HPP

#include <Eigen/Dense>
#include <vector>

#include "regimetest/engine.hpp"

namespace regimetest {

// Pooled weighted-risk-set series over the event grid.
struct PooledRiskSeries {
  std::vector<double> dlam0;      // baseline hazard increments
  Eigen::MatrixXd qhat;           // grid x D weighted risk shares
  std::vector<double> ybar_mean;  // n^{-1} sum_l Ybar_l(u)
  std::vector<char> dropped;      // grid points with empty weighted risk set
  int dropped_count = 0;
};

PooledRiskSeries pooled_series(const WeightTable& wt, const std::vector<double>& grid);

// Per-subject correction terms G_i (n x (D-1)):
//   G_i = sum_u A_i(u) [sum_j Omega_i(u,d^j)] dM_i(u) / ybar_mean(u),
// with A_i(u)^j = Omega_i(u,d^j) - qhat(u,d^j) sum_j' Omega_i(u,d^j') and
// dM_i(u) = dN_i(u) - dLambda0(u) Y_i(u).
Eigen::MatrixXd g_terms(const WeightTable& wt, const std::vector<double>& grid,
                        const PooledRiskSeries& series);

// Bias-corrected covariance: Sigma + n^{-2} sum_i (2 t_i g_i^T + 2 g_i t_i^T),
// symmetrized.
Eigen::MatrixXd corrected_covariance(const Eigen::MatrixXd& sigma,
                                     const Eigen::MatrixXd& iid,
                                     const Eigen::MatrixXd& g, int n);

}  // namespace regimetest

#endif
