#include "regimetest/propensity.hpp"

#include <algorithm>
#include <cmath>

#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

namespace {

// Baseline option absorbed by the model: option 0 when present, otherwise
// the last-listed option. Matches the usual logit parameterization where
// the stage-1 parameter is attached to option 1 of {0,1} and a stratum
// like {2,3} carries a parameter for its first-listed option.
int pick_baseline(const std::vector<int>& options) {
  if (std::find(options.begin(), options.end(), 0) != options.end()) return 0;
  return options.back();
}

std::vector<int> non_baseline(const std::vector<int>& options, int baseline) {
  std::vector<int> out;
  for (int o : options) {
    if (o != baseline) out.push_back(o);
  }
  return out;
}

// Subjects entering a fitting unit: everyone for the stage-1 unit, subjects
// with kappa >= stage in the given stratum otherwise.
bool in_unit(const Cohort& cohort, int subject, const FittedPropensity::Unit& u) {
  const SubjectRecord& s = cohort.subjects()[subject];
  if (u.stage == 1) return true;
  if (s.kappa < u.stage) return false;
  return cohort.stratum_of(subject, u.stage) == u.stratum;
}

}  // namespace

double FittedPropensity::unit_prob(const SubjectRecord& s, const Unit& u,
                                   int option) const {
  if (std::find(u.options.begin(), u.options.end(), option) == u.options.end()) {
    return 0.0;
  }
  if (!u.logistic) {
    auto it = u.prob.find(option);
    return it == u.prob.end() ? 0.0 : it->second;
  }
  double lp = 0.0;
  for (size_t i = 0; i < u.formula_cols.size(); ++i) {
    double x = 1.0;
    if (u.formula_cols[i] >= 0) {
      x = s.covariates[u.formula_cols[i]];
      if (std::isnan(x)) {
        throw DataError("missing covariate '" + u.formula_names[i] +
                        "' when predicting for subject '" + s.id + "'");
      }
    }
    lp += u.gamma(static_cast<Eigen::Index>(i)) * x;
  }
  const double p_target = expit(lp);
  return option == u.param_options.front() ? p_target : 1.0 - p_target;
}

const FittedPropensity::Unit* FittedPropensity::unit_for(const Cohort& cohort,
                                                         int subject,
                                                         int stage) const {
  const SubjectRecord& s = cohort.subjects()[subject];
  if (stage > s.kappa) return nullptr;
  const int stratum = stage == 1 ? -1 : cohort.stratum_of(subject, stage);
  for (const Unit& u : units_) {
    if (u.stage == stage && u.stratum == stratum) return &u;
  }
  return nullptr;
}

double FittedPropensity::prob(const Cohort& cohort, const SubjectRecord& s,
                              int stage, int option) const {
  const int stratum =
      stage == 1 ? -1 : cohort.design().stratum_index(stage, SubjectStageView(cohort, s, stage));
  for (const Unit& u : units_) {
    if (u.stage == stage && u.stratum == stratum) return unit_prob(s, u, option);
  }
  throw DataError("no fitted unit for stage " + std::to_string(stage));
}

double FittedPropensity::prob_indexed(const Cohort& cohort, int subject, int stage,
                                      int option) const {
  const Unit* u = unit_for(cohort, subject, stage);
  if (u == nullptr) {
    throw DataError("subject did not reach stage " + std::to_string(stage));
  }
  return unit_prob(cohort.subjects()[subject], *u, option);
}

Eigen::VectorXd FittedPropensity::score_vector(const Cohort& cohort,
                                               int subject) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(score_dim_);
  if (known_mode_) return out;
  const SubjectRecord& s = cohort.subjects()[subject];
  for (const Unit& u : units_) {
    if (s.kappa < u.stage) continue;
    if (u.stage >= 2 && cohort.stratum_of(subject, u.stage) != u.stratum) continue;
    const int a = s.treatments[u.stage - 1];
    if (!u.logistic) {
      for (size_t j = 0; j < u.param_options.size(); ++j) {
        const int opt = u.param_options[j];
        out(u.score_offset + static_cast<Eigen::Index>(j)) =
            (a == opt ? 1.0 : 0.0) - u.prob.at(opt);
      }
    } else {
      double lp = 0.0;
      Eigen::VectorXd x(u.formula_cols.size());
      for (size_t i = 0; i < u.formula_cols.size(); ++i) {
        double v = u.formula_cols[i] < 0 ? 1.0 : s.covariates[u.formula_cols[i]];
        x(static_cast<Eigen::Index>(i)) = v;
        lp += u.gamma(static_cast<Eigen::Index>(i)) * v;
      }
      const double resid = (a == u.param_options.front() ? 1.0 : 0.0) - expit(lp);
      out.segment(u.score_offset, u.score_len) = resid * x;
    }
  }
  return out;
}

Eigen::VectorXd score_vector(const SubjectRecord& s, const Cohort& cohort,
                             const FittedPropensity& fitted) {
  const auto& subjects = cohort.subjects();
  for (size_t i = 0; i < subjects.size(); ++i) {
    if (&subjects[i] == &s) return fitted.score_vector(cohort, static_cast<int>(i));
  }
  for (size_t i = 0; i < subjects.size(); ++i) {
    if (subjects[i].id == s.id) return fitted.score_vector(cohort, static_cast<int>(i));
  }
  throw DataError("subject '" + s.id + "' is not a member of the cohort");
}

namespace {

std::vector<FittedPropensity::Unit> layout_units(const Cohort& cohort) {
  std::vector<FittedPropensity::Unit> units;
  const SmartDesign& d = cohort.design();
  FittedPropensity::Unit u1;
  u1.stage = 1;
  u1.stratum = -1;
  u1.options = d.options[0];
  u1.baseline = pick_baseline(u1.options);
  u1.param_options = non_baseline(u1.options, u1.baseline);
  units.push_back(u1);
  for (int k = 2; k <= d.stages; ++k) {
    const auto& strata = d.strata_at(k);
    for (size_t sidx = 0; sidx < strata.size(); ++sidx) {
      FittedPropensity::Unit u;
      u.stage = k;
      u.stratum = static_cast<int>(sidx);
      u.options = strata[sidx].options;
      u.baseline = pick_baseline(u.options);
      u.param_options = non_baseline(u.options, u.baseline);
      units.push_back(u);
    }
  }
  return units;
}

void assign_offsets(std::vector<FittedPropensity::Unit>& units, int& score_dim) {
  int off = 0;
  for (auto& u : units) {
    u.score_offset = off;
    off += u.score_len;
  }
  score_dim = off;
}

std::string unit_label(const Cohort& cohort, const FittedPropensity::Unit& u) {
  if (u.stage == 1) return "stage 1";
  return "stage " + std::to_string(u.stage) + " stratum '" +
         cohort.design().strata_at(u.stage)[u.stratum].name + "'";
}

}  // namespace

FittedPropensity fit_saturated(const Cohort& cohort) {
  FittedPropensity out;
  out.units_ = layout_units(cohort);
  std::vector<double> gamma;
  for (auto& u : out.units_) {
    std::map<int, int> counts;
    for (int o : u.options) counts[o] = 0;
    int total = 0;
    for (int i = 0; i < cohort.size(); ++i) {
      if (!in_unit(cohort, i, u)) continue;
      ++counts[cohort.subjects()[i].treatments[u.stage - 1]];
      ++total;
    }
    if (total == 0) {
      throw EmptyStratumError("no subjects in " + unit_label(cohort, u));
    }
    for (int o : u.options) {
      if (counts[o] == 0) {
        throw DegenerateStratumError("all subjects in " + unit_label(cohort, u) +
                                     " received the same option (option " +
                                     std::to_string(o) + " has zero count)");
      }
      u.prob[o] = static_cast<double>(counts[o]) / total;
    }
    u.score_len = static_cast<int>(u.param_options.size());
    for (int o : u.param_options) {
      gamma.push_back(std::log(u.prob[o] / u.prob[u.baseline]));
    }
  }
  assign_offsets(out.units_, out.score_dim_);
  out.gamma_hat_ = Eigen::Map<Eigen::VectorXd>(gamma.data(), gamma.size());
  return out;
}

FittedPropensity known_propensity(const Cohort& cohort, const PropensitySpec& spec) {
  if (spec.mode != PropensitySpec::Mode::Known) {
    throw ConfigError("known_propensity requires mode 'known'");
  }
  FittedPropensity out;
  out.known_mode_ = true;
  out.units_ = layout_units(cohort);
  for (auto& u : out.units_) {
    const std::string sname =
        u.stage == 1 ? "" : cohort.design().strata_at(u.stage)[u.stratum].name;
    const KnownUnitProbs* found = nullptr;
    for (const auto& k : spec.known) {
      if (k.stage == u.stage && k.stratum == sname) {
        found = &k;
        break;
      }
    }
    if (found == nullptr) {
      throw ConfigError("known propensity values missing for " +
                        unit_label(cohort, u));
    }
    double sum = 0.0;
    for (int o : u.options) {
      auto it = found->probs.find(o);
      if (it == found->probs.end()) {
        throw ConfigError("known propensity for " + unit_label(cohort, u) +
                          " is missing option " + std::to_string(o));
      }
      if (!(it->second >= 0.0) || it->second > 1.0) {
        throw ConfigError("known propensity outside [0,1] for " +
                          unit_label(cohort, u));
      }
      u.prob[o] = it->second;
      sum += it->second;
    }
    if (std::fabs(sum - 1.0) > 1e-8) {
      throw ConfigError("known propensities for " + unit_label(cohort, u) +
                        " must sum to 1");
    }
    u.score_len = 0;
  }
  assign_offsets(out.units_, out.score_dim_);
  out.gamma_hat_ = Eigen::VectorXd();
  return out;
}

namespace {

// Damped Newton maximization of the binary logistic loglikelihood for one
// fitting unit. y = I(A = target), rows = subjects in the unit.
Eigen::VectorXd newton_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const std::string& label) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (n < p) {
    throw DataError("logistic fit for " + label + ": fewer subjects than parameters");
  }
  {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(x.transpose() * x);
    if (lu.rank() < p) {
      throw DataError("logistic fit for " + label +
                      ": design matrix is rank deficient");
    }
  }
  auto loglik = [&](const Eigen::VectorXd& gamma) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double lp = x.row(i).dot(gamma);
      // log(1 + exp(lp)) computed stably
      const double log1pexp = lp > 0 ? lp + std::log1p(std::exp(-lp))
                                     : std::log1p(std::exp(lp));
      ll += y(i) * lp - log1pexp;
    }
    return ll;
  };

  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(p);
  double ll = loglik(gamma);
  constexpr double kScoreTol = 1e-8;
  constexpr int kMaxIter = 100;
  constexpr int kMaxHalvings = 30;
  constexpr double kSeparationBound = 15.0;

  for (int iter = 0; iter < kMaxIter; ++iter) {
    Eigen::VectorXd mu(n), w(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      mu(i) = expit(x.row(i).dot(gamma));
      w(i) = mu(i) * (1.0 - mu(i));
    }
    Eigen::VectorXd score = x.transpose() * (y - mu);
    if (score.lpNorm<Eigen::Infinity>() < kScoreTol) {
      if (gamma.lpNorm<Eigen::Infinity>() > kSeparationBound) {
        throw SeparationError("logistic fit for " + label +
                              ": separation detected (|gamma| > 15)");
      }
      return gamma;
    }
    Eigen::MatrixXd info = x.transpose() * w.asDiagonal() * x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    if (ldlt.info() != Eigen::Success) {
      throw NonConvergenceError("logistic fit for " + label +
                                ": information matrix not factorizable");
    }
    Eigen::VectorXd step = ldlt.solve(score);
    double scale = 1.0;
    int halvings = 0;
    for (;;) {
      Eigen::VectorXd cand = gamma + scale * step;
      double cand_ll = loglik(cand);
      if (cand_ll >= ll) {
        gamma = cand;
        ll = cand_ll;
        break;
      }
      if (++halvings > kMaxHalvings) {
        throw NonConvergenceError("logistic fit for " + label +
                                  ": step halving failed to increase loglikelihood");
      }
      scale *= 0.5;
    }
    if (gamma.lpNorm<Eigen::Infinity>() > kSeparationBound) {
      throw SeparationError("logistic fit for " + label +
                            ": separation detected (|gamma| > 15)");
    }
  }
  throw NonConvergenceError("logistic fit for " + label +
                            ": no convergence in 100 iterations");
}

}  // namespace

FittedPropensity fit_logistic(const Cohort& cohort, const PropensitySpec& spec) {
  if (spec.mode != PropensitySpec::Mode::Logistic) {
    throw ConfigError("fit_logistic requires mode 'logistic'");
  }
  FittedPropensity out;
  out.units_ = layout_units(cohort);
  std::vector<double> gamma_all;

  for (auto& u : out.units_) {
    if (u.options.size() != 2) {
      throw ConfigError("logistic mode requires exactly two options per stratum; " +
                        unit_label(cohort, u) + " has " +
                        std::to_string(u.options.size()));
    }
    std::vector<std::string> formula = {"1"};
    if (u.stage == 1) {
      if (!spec.stage1_formula.empty()) formula = spec.stage1_formula;
    } else {
      const std::string sname = cohort.design().strata_at(u.stage)[u.stratum].name;
      auto kit = spec.stage_formulas.find(u.stage);
      if (kit != spec.stage_formulas.end()) {
        auto sit = kit->second.find(sname);
        if (sit != kit->second.end()) formula = sit->second;
      }
    }
    u.logistic = true;
    u.formula_names = formula;
    for (const std::string& name : formula) {
      if (name == "1") {
        u.formula_cols.push_back(-1);
        continue;
      }
      int col = cohort.covariate_index(name);
      if (col < 0) {
        throw ConfigError("propensity formula references unknown column '" + name + "'");
      }
      if (cohort.covariate_stage(col) > u.stage) {
        throw ConfigError("propensity formula for " + unit_label(cohort, u) +
                          " uses column '" + name + "' from a later stage");
      }
      u.formula_cols.push_back(col);
    }

    std::vector<int> members;
    for (int i = 0; i < cohort.size(); ++i) {
      if (in_unit(cohort, i, u)) members.push_back(i);
    }
    if (members.empty()) {
      throw EmptyStratumError("no subjects in " + unit_label(cohort, u));
    }
    const int target = u.param_options.front();
    Eigen::MatrixXd x(members.size(), u.formula_cols.size());
    Eigen::VectorXd y(members.size());
    for (size_t r = 0; r < members.size(); ++r) {
      const SubjectRecord& s = cohort.subjects()[members[r]];
      for (size_t c = 0; c < u.formula_cols.size(); ++c) {
        double v = u.formula_cols[c] < 0 ? 1.0 : s.covariates[u.formula_cols[c]];
        if (std::isnan(v)) {
          throw DataError("missing covariate '" + u.formula_names[c] +
                          "' for subject '" + s.id + "'");
        }
        x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v;
      }
      y(static_cast<Eigen::Index>(r)) = s.treatments[u.stage - 1] == target ? 1.0 : 0.0;
    }
    u.gamma = newton_logistic(x, y, unit_label(cohort, u));
    u.score_len = static_cast<int>(u.formula_cols.size());
    for (Eigen::Index i = 0; i < u.gamma.size(); ++i) gamma_all.push_back(u.gamma(i));
  }
  assign_offsets(out.units_, out.score_dim_);
  out.gamma_hat_ = Eigen::Map<Eigen::VectorXd>(gamma_all.data(), gamma_all.size());
  return out;
}

FittedPropensity fit_propensity(const Cohort& cohort, const PropensitySpec& spec) {
  switch (spec.mode) {
    case PropensitySpec::Mode::Known:
      return known_propensity(cohort, spec);
    case PropensitySpec::Mode::Saturated:
      return fit_saturated(cohort);
    case PropensitySpec::Mode::Logistic:
      return fit_logistic(cohort, spec);
  }
  throw ConfigError("unknown propensity mode");
}

}  // namespace regimetest
