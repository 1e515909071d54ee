#include "regimetest/augment.hpp"

#include <cmath>

#include "regimetest/engine.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

namespace {

// Resolves and validates one unit's basis column list.
std::vector<int> basis_columns(const Cohort& cohort, int stage,
                               const std::vector<std::string>& names) {
  std::vector<int> cols;
  for (const std::string& name : names) {
    const int col = cohort.covariate_index(name);
    if (col < 0) {
      throw ConfigError("basis references unknown column '" + name + "'");
    }
    if (cohort.covariate_stage(col) > stage) {
      throw ConfigError("basis column '" + name + "' belongs to stage " +
                        std::to_string(cohort.covariate_stage(col)) +
                        " but is used in a stage-" + std::to_string(stage) +
                        " block");
    }
    cols.push_back(col);
  }
  return cols;
}

}  // namespace

Eigen::MatrixXd build_design_matrix(const Cohort& cohort,
                                    const FittedPropensity& fitted,
                                    const BasisSpec& basis) {
  if (fitted.score_dim() == 0 && basis.empty()) {
    throw ConfigError("design matrix requires score columns or a basis");
  }
  const int n = cohort.size();
  const auto& units = fitted.units();

  // Column layout: score vector first, then one block per unit with a basis.
  struct Block {
    const FittedPropensity::Unit* unit;
    std::vector<int> cols;
  };
  std::vector<Block> blocks;
  int extra = 0;
  for (const auto& u : units) {
    std::vector<std::string> names;
    if (u.stage == 1) {
      names = basis.stage1;
    } else {
      auto kit = basis.stages.find(u.stage);
      if (kit != basis.stages.end()) {
        const std::string sname = cohort.design().strata_at(u.stage)[u.stratum].name;
        auto sit = kit->second.find(sname);
        if (sit != kit->second.end()) names = sit->second;
      }
    }
    if (names.empty()) continue;
    Block b{&u, basis_columns(cohort, u.stage, names)};
    extra += static_cast<int>(u.param_options.size() * b.cols.size());
    blocks.push_back(std::move(b));
  }

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, fitted.score_dim() + extra);
  for (int i = 0; i < n; ++i) {
    if (fitted.score_dim() > 0) {
      x.block(i, 0, 1, fitted.score_dim()) =
          fitted.score_vector(cohort, i).transpose();
    }
  }

  int off = fitted.score_dim();
  for (const Block& b : blocks) {
    const auto& u = *b.unit;
    for (size_t pa = 0; pa < u.param_options.size(); ++pa) {
      const int opt = u.param_options[pa];
      for (size_t c = 0; c < b.cols.size(); ++c) {
        for (int i = 0; i < n; ++i) {
          const SubjectRecord& s = cohort.subjects()[i];
          if (s.kappa < u.stage) continue;
          if (u.stage >= 2 && cohort.stratum_of(i, u.stage) != u.stratum) continue;
          const double p = fitted.prob_indexed(cohort, i, u.stage, opt);
          const double resid = (s.treatments[u.stage - 1] == opt ? 1.0 : 0.0) - p;
          const double v = s.covariates[b.cols[c]];
          if (std::isnan(v)) {
            throw DataError("missing basis covariate for subject '" + s.id + "'");
          }
          x(i, off) = resid * v;
        }
        ++off;
      }
    }
  }
  return x;
}

Eigen::MatrixXd residualize(const Eigen::MatrixXd& iid, const Eigen::MatrixXd& x) {
  if (iid.rows() == 0) throw DataError("residualize: empty iid matrix");
  if (x.cols() == 0 || x.rows() != iid.rows()) {
    if (x.cols() == 0) return iid;
    throw DataError("residualize: row mismatch between iid and design matrix");
  }
  const Eigen::MatrixXd xtx = x.transpose() * x;
  PinvResult pr = pinv_rank_or_zero(xtx, 1e-12);
  if (pr.rank == 0) return iid;  // all-zero design: null projection
  const Eigen::MatrixXd beta = pr.pinv * (x.transpose() * iid);
  return iid - x * beta;
}

TestResult run_augmented_test(const Cohort& cohort, const std::vector<Regime>& regimes,
                              const PropensitySpec& prop_spec, const BasisSpec& basis,
                              const TestOptions& options) {
  if (prop_spec.mode == PropensitySpec::Mode::Known) {
    throw ConfigError("the augmented test requires estimated propensities");
  }
  return run_test(cohort, regimes, prop_spec, basis, options);
}

}  // namespace regimetest
