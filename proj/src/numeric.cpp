#include "regimetest/numeric.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <limits>

#include "regimetest/errors.hpp"

namespace regimetest {

namespace {

constexpr int kMaxIter = 500;
constexpr double kEps = 1e-15;

// Lower regularized incomplete gamma P(s, x) by power series, for x < s + 1.
double gamma_p_series(double s, double x) {
  double ap = s;
  double sum = 1.0 / s;
  double del = sum;
  for (int i = 0; i < kMaxIter; ++i) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::fabs(del) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

// Upper regularized incomplete gamma Q(s, x) by continued fraction (modified
// Lentz), for x >= s + 1.
double gamma_q_cf(double s, double x) {
  const double tiny = 1e-300;
  double b = x + 1.0 - s;
  double c = 1.0 / tiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIter; ++i) {
    double an = -static_cast<double>(i) * (static_cast<double>(i) - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

}  // namespace

double regularized_gamma_q(double s, double x) {
  if (s <= 0.0) throw NumericError("regularized_gamma_q: s must be positive");
  if (x < 0.0) throw NumericError("regularized_gamma_q: x must be nonnegative");
  if (x == 0.0) return 1.0;
  if (x < s + 1.0) return 1.0 - gamma_p_series(s, x);
  return gamma_q_cf(s, x);
}

double chi2_sf(double x, int nu) {
  if (nu < 1) throw NumericError("chi2_sf: degrees of freedom must be >= 1");
  if (x < 0.0) throw NumericError("chi2_sf: statistic must be nonnegative");
  return regularized_gamma_q(0.5 * nu, 0.5 * x);
}

namespace {

PinvResult pinv_impl(const Eigen::MatrixXd& s, double rel_tol) {
  if (s.rows() != s.cols()) {
    throw NumericError("pinv_rank: matrix must be square");
  }
  const Eigen::Index p = s.rows();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (s + s.transpose()));
  if (eig.info() != Eigen::Success) {
    throw NumericError("pinv_rank: eigendecomposition failed");
  }
  const Eigen::VectorXd& vals = eig.eigenvalues();
  double lmax = 0.0;
  for (Eigen::Index i = 0; i < p; ++i) lmax = std::max(lmax, vals(i));

  PinvResult out;
  out.pinv = Eigen::MatrixXd::Zero(p, p);
  if (lmax <= 0.0) return out;

  const double cut = rel_tol * lmax;
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    if (vals(i) > cut) {
      inv(i) = 1.0 / vals(i);
      ++out.rank;
    } else if (vals(i) < -cut) {
      ++out.negative_eigenvalues;
    }
  }
  out.pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
  return out;
}

}  // namespace

PinvResult pinv_rank(const Eigen::MatrixXd& s, double rel_tol) {
  PinvResult out = pinv_impl(s, rel_tol);
  if (out.rank == 0) {
    throw AllZeroMatrixError("pinv_rank: matrix has no positive eigenvalues");
  }
  return out;
}

PinvResult pinv_rank_or_zero(const Eigen::MatrixXd& s, double rel_tol) {
  return pinv_impl(s, rel_tol);
}

double expit(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(buf, "%lf", &back);
    if (back == v) return buf;
  }
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace regimetest
