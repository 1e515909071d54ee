#include "regimetest/correction.hpp"

#include "regimetest/errors.hpp"

namespace regimetest {

Eigen::MatrixXd g_terms(const WeightTable& wt, const std::vector<double>& grid,
                        const PooledRiskSeries& series) {
  if (grid.empty()) throw EmptyGridError("g_terms: empty event grid");
  const Cohort& cohort = wt.cohort();
  const int n = cohort.size();
  const int D = wt.regime_count();
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, D - 1);

  std::vector<double> w(D);
  for (int gidx = 0; gidx < static_cast<int>(grid.size()); ++gidx) {
    if (series.dropped[gidx]) continue;
    const double u = grid[gidx];
    const double dlam = series.dlam0[gidx];
    const double inv_ybar = 1.0 / series.ybar_mean[gidx];
    for (int i = 0; i < n; ++i) {
      const SubjectRecord& s = cohort.subjects()[i];
      if (s.u < u) continue;
      const int seg = wt.segment_at(i, u);
      double total = 0.0;
      for (int j = 0; j < D; ++j) {
        w[j] = wt.segment_value(i, j, seg);
        total += w[j];
      }
      const double dm = ((s.u == u && s.delta == 1) ? 1.0 : 0.0) - dlam;
      if (dm == 0.0) continue;
      for (int j = 0; j < D - 1; ++j) {
        g(i, j) += (w[j] - series.qhat(gidx, j) * total) * total * dm * inv_ybar;
      }
    }
  }
  return g;
}

Eigen::MatrixXd corrected_covariance(const Eigen::MatrixXd& sigma,
                                     const Eigen::MatrixXd& iid,
                                     const Eigen::MatrixXd& g, int n) {
  if (iid.rows() != g.rows() || iid.cols() != g.cols() ||
      sigma.rows() != iid.cols() || sigma.cols() != iid.cols()) {
    throw NumericError("corrected_covariance: dimension mismatch");
  }
  if (n < 1) throw NumericError("corrected_covariance: n must be positive");
  const double scale = 2.0 / (static_cast<double>(n) * static_cast<double>(n));
  Eigen::MatrixXd cross = iid.transpose() * g;
  Eigen::MatrixXd corrected = sigma + scale * (cross + cross.transpose());
  return 0.5 * (corrected + corrected.transpose());
}

}  // namespace regimetest
