#ifndef REGIMETEST_NUMERIC_HPP
#define REGIMETEST_NUMERIC_HPP

#include <Eigen/Dense>
#include <string>

namespace regimetest {

// Regularized upper incomplete gamma function Q(s, x), absolute accuracy ~1e-12.
double regularized_gamma_q(double s, double x);

// Upper tail probability of a chi-square distribution with nu degrees of freedom.
double chi2_sf(double x, int nu);

struct PinvResult {
  Eigen::MatrixXd pinv;
  int rank = 0;                 // number of retained eigenvalues
  int negative_eigenvalues = 0; // eigenvalues below -tol * lambda_max, zeroed
};

// Moore-Penrose pseudoinverse of a symmetric matrix via eigendecomposition.
// Eigenvalues below rel_tol * lambda_max are treated as zero; negative
// eigenvalues are zeroed and counted. Throws AllZeroMatrixError when no
// eigenvalue survives.
PinvResult pinv_rank(const Eigen::MatrixXd& s, double rel_tol = 1e-8);

// Same as pinv_rank but returns a zero matrix (rank 0) instead of throwing.
PinvResult pinv_rank_or_zero(const Eigen::MatrixXd& s, double rel_tol = 1e-8);

double expit(double x);

// Shortest decimal representation that parses back to the same double.
std::string format_double(double v);

}  // namespace regimetest

#endif
