#include "regimetest/engine.hpp"

#include <algorithm>
#include <cmath>

#include "regimetest/correction.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

namespace {

constexpr double kProbClipLo = 1e-6;
constexpr double kProbClipHi = 1.0 - 1e-6;

// Advances per-subject segment indices as the sweep time increases.
class SegmentCursor {
 public:
  explicit SegmentCursor(const Cohort& cohort) : cohort_(&cohort) { reset(); }
  void reset() { seg_.assign(cohort_->size(), 0); }
  int at(int subject, double u) {
    const SubjectRecord& s = cohort_->subjects()[subject];
    int& seg = seg_[subject];
    while (seg + 1 < s.kappa && s.decision_times[seg + 1] <= u) ++seg;
    return seg;
  }

 private:
  const Cohort* cohort_;
  std::vector<int> seg_;
};

}  // namespace

WeightTable::WeightTable(const Cohort& cohort, const std::vector<Regime>& regimes,
                         const FittedPropensity& fitted)
    : cohort_(&cohort), D_(static_cast<int>(regimes.size())) {
  for (const Regime& r : regimes) {
    if (r.stage_count() != cohort.design().stages) {
      throw ConfigError("regime '" + r.label() + "' has " +
                        std::to_string(r.stage_count()) + " stages, design has " +
                        std::to_string(cohort.design().stages));
    }
  }
  const int n = cohort.size();
  offset_.resize(n);
  size_t total = 0;
  for (int i = 0; i < n; ++i) {
    offset_[i] = total;
    total += static_cast<size_t>(cohort.subjects()[i].kappa) * D_;
  }
  seg_.assign(total, 0.0);

  for (int i = 0; i < n; ++i) {
    const SubjectRecord& s = cohort.subjects()[i];
    for (int j = 0; j < D_; ++j) {
      bool consistent = true;
      double inv_pi = 1.0;
      for (int k = 1; k <= s.kappa; ++k) {
        if (consistent) {
          SubjectStageView view(cohort, s, k);
          std::optional<int> choice = evaluate_rule(regimes[j], k, view);
          if (!choice.has_value()) {
            throw DataError("regime made no selection at a reached decision point");
          }
          if (s.treatments[k - 1] != *choice) {
            consistent = false;
          } else {
            double w = fitted.prob_indexed(cohort, i, k, *choice);
            if (!(w > 0.0)) {
              throw PositivityViolation(
                  "zero assignment probability for the received option at stage " +
                  std::to_string(k) + " (subject '" + s.id + "')");
            }
            w = std::clamp(w, kProbClipLo, kProbClipHi);
            inv_pi /= w;
          }
        }
        seg_[offset_[i] + static_cast<size_t>(k - 1) * D_ + j] =
            consistent ? inv_pi : 0.0;
      }
    }
  }
}

int WeightTable::segment_at(int subject, double u) const {
  const SubjectRecord& s = cohort_->subjects()[subject];
  int seg = 0;
  while (seg + 1 < s.kappa && s.decision_times[seg + 1] <= u) ++seg;
  return seg;
}

double WeightTable::omega(int subject, int regime, double u) const {
  const SubjectRecord& s = cohort_->subjects()[subject];
  if (s.u < u) return 0.0;
  return segment_value(subject, regime, segment_at(subject, u));
}

double omega(const SubjectRecord& subject, const Cohort& cohort,
             const Regime& regime, double u, const FittedPropensity& fitted) {
  if (subject.u < u) return 0.0;
  if (consistency_indicator(subject, cohort, regime, u) == 0) return 0.0;
  double inv_pi = 1.0;
  for (int k = 1; k <= subject.kappa; ++k) {
    if (subject.decision_times[k - 1] > u) break;
    SubjectStageView view(cohort, subject, k);
    std::optional<int> choice = evaluate_rule(regime, k, view);
    double w = fitted.prob(cohort, subject, k, *choice);
    if (!(w > 0.0)) {
      throw PositivityViolation("zero assignment probability at stage " +
                                std::to_string(k) + " (subject '" + subject.id + "')");
    }
    inv_pi /= std::clamp(w, kProbClipLo, kProbClipHi);
  }
  return inv_pi;
}

PooledRiskSeries pooled_series(const WeightTable& wt, const std::vector<double>& grid) {
  const Cohort& cohort = wt.cohort();
  const int n = cohort.size();
  const int D = wt.regime_count();
  const int G = static_cast<int>(grid.size());

  PooledRiskSeries out;
  out.dlam0.assign(G, 0.0);
  out.qhat = Eigen::MatrixXd::Zero(G, D);
  out.ybar_mean.assign(G, 0.0);
  out.dropped.assign(G, 0);

  SegmentCursor cursor(cohort);
  std::vector<double> sum_y(D);
  for (int g = 0; g < G; ++g) {
    const double u = grid[g];
    std::fill(sum_y.begin(), sum_y.end(), 0.0);
    double num = 0.0;
    for (int i = 0; i < n; ++i) {
      const SubjectRecord& s = cohort.subjects()[i];
      if (s.u < u) continue;
      const int seg = cursor.at(i, u);
      double total = 0.0;
      for (int j = 0; j < D; ++j) {
        const double w = wt.segment_value(i, j, seg);
        sum_y[j] += w;
        total += w;
      }
      if (s.u == u && s.delta == 1) num += total;
    }
    double den = 0.0;
    for (int j = 0; j < D; ++j) den += sum_y[j];
    if (den > 0.0) {
      out.dlam0[g] = num / den;
      for (int j = 0; j < D; ++j) out.qhat(g, j) = sum_y[j] / den;
      out.ybar_mean[g] = den / n;
    } else {
      out.dropped[g] = 1;
      ++out.dropped_count;
    }
  }
  return out;
}

std::vector<double> baseline_hazard(const WeightTable& wt,
                                    const std::vector<double>& grid,
                                    TestWarnings* warnings) {
  PooledRiskSeries s = pooled_series(wt, grid);
  if (warnings != nullptr) warnings->dropped_grid_points += s.dropped_count;
  return s.dlam0;
}

double qhat(const WeightTable& wt, int regime, double u) {
  const Cohort& cohort = wt.cohort();
  const int D = wt.regime_count();
  double num = 0.0, den = 0.0;
  for (int i = 0; i < cohort.size(); ++i) {
    const SubjectRecord& s = cohort.subjects()[i];
    if (s.u < u) continue;
    const int seg = wt.segment_at(i, u);
    for (int j = 0; j < D; ++j) {
      const double w = wt.segment_value(i, j, seg);
      den += w;
      if (j == regime) num += w;
    }
  }
  if (!(den > 0.0)) {
    throw NumericError("qhat: empty weighted risk set at u = " + format_double(u));
  }
  return num / den;
}

Eigen::VectorXd score_statistic(const WeightTable& wt, const std::vector<double>& grid) {
  if (grid.empty()) throw EmptyGridError("score_statistic: empty event grid");
  const Cohort& cohort = wt.cohort();
  const int D = wt.regime_count();
  if (D < 2) throw ConfigError("score_statistic requires at least two regimes");
  const std::vector<double> dlam0 = baseline_hazard(wt, grid);

  Eigen::VectorXd t = Eigen::VectorXd::Zero(D - 1);
  SegmentCursor cursor(cohort);
  for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
    const double u = grid[g];
    for (int i = 0; i < cohort.size(); ++i) {
      const SubjectRecord& s = cohort.subjects()[i];
      if (s.u < u) continue;
      const int seg = cursor.at(i, u);
      const double dm = ((s.u == u && s.delta == 1) ? 1.0 : 0.0) - dlam0[g];
      for (int j = 0; j < D - 1; ++j) {
        t(j) += wt.segment_value(i, j, seg) * dm;
      }
    }
  }
  return t;
}

Eigen::MatrixXd iid_terms(const WeightTable& wt, const std::vector<double>& grid,
                          Eigen::MatrixXd* g_terms_out, TestWarnings* warnings) {
  if (grid.empty()) throw EmptyGridError("iid_terms: empty event grid");
  const Cohort& cohort = wt.cohort();
  const int n = cohort.size();
  const int D = wt.regime_count();
  if (D < 2) throw ConfigError("iid_terms requires at least two regimes");

  PooledRiskSeries series = pooled_series(wt, grid);
  if (warnings != nullptr) warnings->dropped_grid_points += series.dropped_count;

  Eigen::MatrixXd iid = Eigen::MatrixXd::Zero(n, D - 1);
  if (g_terms_out != nullptr) *g_terms_out = Eigen::MatrixXd::Zero(n, D - 1);

  SegmentCursor cursor(cohort);
  std::vector<double> w(D);
  for (int g = 0; g < static_cast<int>(grid.size()); ++g) {
    if (series.dropped[g]) continue;
    const double u = grid[g];
    const double dlam = series.dlam0[g];
    const double inv_ybar = 1.0 / series.ybar_mean[g];
    for (int i = 0; i < n; ++i) {
      const SubjectRecord& s = cohort.subjects()[i];
      if (s.u < u) continue;
      const int seg = cursor.at(i, u);
      double total = 0.0;
      for (int j = 0; j < D; ++j) {
        w[j] = wt.segment_value(i, j, seg);
        total += w[j];
      }
      const double dm = ((s.u == u && s.delta == 1) ? 1.0 : 0.0) - dlam;
      if (dm == 0.0) continue;
      for (int j = 0; j < D - 1; ++j) {
        const double a = (w[j] - series.qhat(g, j) * total) * dm;
        iid(i, j) += a;
        if (g_terms_out != nullptr) (*g_terms_out)(i, j) += a * total * inv_ybar;
      }
    }
  }
  return iid;
}

Eigen::MatrixXd covariance(const Eigen::MatrixXd& iid) {
  const int n = static_cast<int>(iid.rows());
  if (n < 1) throw DataError("covariance: empty iid matrix");
  Eigen::MatrixXd s = (iid.transpose() * iid) / static_cast<double>(n);
  return 0.5 * (s + s.transpose());
}

namespace {

TestResult assemble(const Eigen::VectorXd& tr, const Eigen::MatrixXd& sigma,
                    bool corrected, const std::string& variant, int n, double l,
                    const TestWarnings& warn, const TestOptions& options) {
  TestResult res;
  res.variant = variant;
  res.correction = corrected;
  res.rank_tolerance = options.rank_tolerance;
  res.L = l;
  res.warnings = warn;
  res.components = tr;

  PinvResult pr = pinv_rank(sigma, options.rank_tolerance);
  res.warnings.negative_eigenvalues += pr.negative_eigenvalues;
  res.nu = pr.rank;
  res.statistic = tr.dot(pr.pinv * tr) / static_cast<double>(n);
  if (!std::isfinite(res.statistic)) {
    throw NumericError("test statistic is not finite");
  }
  if (res.statistic < 0.0 && res.statistic > -1e-12) res.statistic = 0.0;
  res.p_value = chi2_sf(res.statistic, res.nu);
  return res;
}

}  // namespace

TestComputation::TestComputation(const Cohort& cohort,
                                 const std::vector<Regime>& regimes,
                                 const FittedPropensity& fitted,
                                 const TestOptions& options)
    : cohort_(&cohort), fitted_(&fitted), options_(options) {
  if (regimes.size() < 2) {
    throw ConfigError("the test requires at least two regimes");
  }
  L_ = options.L.has_value() ? *options.L
                             : default_truncation(cohort, options.at_risk_fraction);
  grid_ = event_grid(cohort, L_);
  WeightTable wt(cohort, regimes, fitted);
  iid_ = iid_terms(wt, grid_, &g_, &warn_);
}

TestPair TestComputation::with_basis(const BasisSpec& basis) const {
  const int n = cohort_->size();
  std::string variant = "plain";
  Eigen::MatrixXd iid_r = iid_;
  if (fitted_->score_dim() > 0) {
    Eigen::MatrixXd x = build_design_matrix(*cohort_, *fitted_, basis);
    iid_r = residualize(iid_, x);
    variant = basis.empty() ? "estimated-gamma" : "augmented";
  } else if (!basis.empty()) {
    throw ConfigError("covariate augmentation requires estimated propensities");
  }

  Eigen::VectorXd tr = iid_r.colwise().sum();
  Eigen::MatrixXd sigma = covariance(iid_r);

  TestPair pair;
  pair.uncorrected = assemble(tr, sigma, false, variant, n, L_, warn_, options_);
  Eigen::MatrixXd sigma_c = corrected_covariance(sigma, iid_r, g_, n);
  pair.corrected = assemble(tr, sigma_c, true, variant, n, L_, warn_, options_);
  return pair;
}

TestPair run_test_both(const Cohort& cohort, const std::vector<Regime>& regimes,
                       const FittedPropensity& fitted, const BasisSpec& basis,
                       const TestOptions& options) {
  return TestComputation(cohort, regimes, fitted, options).with_basis(basis);
}

TestResult run_test(const Cohort& cohort, const std::vector<Regime>& regimes,
                    const PropensitySpec& prop_spec, const BasisSpec& basis,
                    const TestOptions& options) {
  FittedPropensity fitted = fit_propensity(cohort, prop_spec);
  TestPair pair = run_test_both(cohort, regimes, fitted, basis, options);
  return options.correction ? pair.corrected : pair.uncorrected;
}

SurvivalCurve regime_cumhaz(const Cohort& cohort, const Regime& regime,
                            const FittedPropensity& fitted,
                            const std::vector<double>& grid) {
  std::vector<Regime> one{regime};
  WeightTable wt(cohort, one, fitted);

  SurvivalCurve curve;
  curve.label = regime.label();
  curve.times.push_back(0.0);
  curve.cumhaz.push_back(0.0);
  curve.survival.push_back(1.0);

  SegmentCursor cursor(cohort);
  double cum = 0.0;
  for (double u : grid) {
    double num = 0.0, den = 0.0;
    for (int i = 0; i < cohort.size(); ++i) {
      const SubjectRecord& s = cohort.subjects()[i];
      if (s.u < u) continue;
      const double w = wt.segment_value(i, 0, cursor.at(i, u));
      den += w;
      if (s.u == u && s.delta == 1) num += w;
    }
    if (den > 0.0) {
      cum += num / den;
    } else {
      ++curve.dropped_grid_points;
    }
    curve.times.push_back(u);
    curve.cumhaz.push_back(cum);
    curve.survival.push_back(std::exp(-cum));
  }
  return curve;
}

}  // namespace regimetest
