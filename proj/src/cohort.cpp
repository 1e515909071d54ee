#include "regimetest/cohort.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

bool is_reserved_name(const std::string& name, int stages) {
  if (name == "subject_id" || name == "kappa" || name == "u" || name == "delta" ||
      name == "r") {
    return true;
  }
  auto indexed = [&](char prefix) {
    if (name.size() < 2 || name[0] != prefix) return false;
    for (size_t i = 1; i < name.size(); ++i) {
      if (name[i] < '0' || name[i] > '9') return false;
    }
    int k = std::stoi(name.substr(1));
    return k >= 1 && k <= stages;
  };
  return indexed('a') || indexed('t');
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

double parse_number(const std::string& field, int row, const std::string& col) {
  double v = 0.0;
  const char* b = field.data();
  const char* e = b + field.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) {
    throw DataError("row " + std::to_string(row) + ": malformed value '" + field +
                    "' in column " + col);
  }
  return v;
}

int parse_int(const std::string& field, int row, const std::string& col) {
  double v = parse_number(field, row, col);
  if (v != std::floor(v)) {
    throw DataError("row " + std::to_string(row) + ": column " + col +
                    " must be an integer, found '" + field + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

Cohort::Cohort(SmartDesign design,
               std::vector<std::pair<std::string, int>> covariate_columns,
               std::vector<SubjectRecord> subjects)
    : design_(std::move(design)), subjects_(std::move(subjects)) {
  design_.validate();
  for (auto& [name, stage] : covariate_columns) {
    if (name.empty()) throw ConfigError("covariate column with empty name");
    if (is_reserved_name(name, design_.stages) && name != "r") {
      throw ConfigError("covariate column '" + name + "' collides with a reserved name");
    }
    if (stage < 1 || stage > design_.stages) {
      throw ConfigError("covariate '" + name + "' declares invalid stage " +
                        std::to_string(stage));
    }
    if (covariate_index(name) >= 0) {
      throw ConfigError("duplicate covariate column '" + name + "'");
    }
    names_.push_back(name);
    stages_.push_back(stage);
  }
  validate();
}

int Cohort::covariate_index(std::string_view name) const {
  for (size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return static_cast<int>(i);
  }
  return -1;
}

VarScope Cohort::var_scope() const {
  VarScope scope;
  scope.stages = design_.stages;
  for (size_t i = 0; i < names_.size(); ++i) scope.covariate_stage[names_[i]] = stages_[i];
  return scope;
}

int Cohort::stratum_of(int subject, int stage) const {
  if (stage < 2) throw Error("stratum_of: stage must be >= 2");
  const auto& cache = strata_cache_[subject];
  int idx = stage - 2;
  if (idx >= static_cast<int>(cache.size())) {
    throw Error("stratum_of: subject did not reach stage " + std::to_string(stage));
  }
  return cache[idx];
}

void Cohort::validate() {
  std::set<std::string> ids;
  strata_cache_.resize(subjects_.size());
  for (size_t i = 0; i < subjects_.size(); ++i) {
    SubjectRecord& s = subjects_[i];
    const std::string where = "subject '" + s.id + "'";
    if (s.id.empty()) throw DataError("subject with empty id");
    if (!ids.insert(s.id).second) throw DataError("duplicate subject id '" + s.id + "'");
    if (s.kappa < 1 || s.kappa > design_.stages) {
      throw DataError(where + ": kappa " + std::to_string(s.kappa) +
                      " outside [1," + std::to_string(design_.stages) + "]");
    }
    if (!(s.u > 0.0) || !std::isfinite(s.u)) {
      throw DataError(where + ": u must be positive and finite");
    }
    if (s.delta != 0 && s.delta != 1) throw DataError(where + ": delta must be 0 or 1");
    if (static_cast<int>(s.decision_times.size()) != s.kappa ||
        static_cast<int>(s.treatments.size()) != s.kappa) {
      throw DataError(where + ": expected " + std::to_string(s.kappa) +
                      " decision times and treatments");
    }
    if (s.decision_times[0] != 0.0) throw DataError(where + ": T_1 must be 0");
    for (int k = 1; k < s.kappa; ++k) {
      if (!(s.decision_times[k] > s.decision_times[k - 1])) {
        throw DataError(where + ": decision times must be strictly increasing (t" +
                        std::to_string(k + 1) + ")");
      }
    }
    if (s.decision_times[s.kappa - 1] > s.u) {
      throw DataError(where + ": invariant T_kappa <= u violated (t" +
                      std::to_string(s.kappa) + " = " +
                      format_double(s.decision_times[s.kappa - 1]) + " > u = " +
                      format_double(s.u) + ")");
    }
    if (s.covariates.size() != names_.size()) {
      throw DataError(where + ": expected " + std::to_string(names_.size()) +
                      " covariate values");
    }
    for (size_t c = 0; c < names_.size(); ++c) {
      if (stages_[c] <= s.kappa && std::isnan(s.covariates[c])) {
        throw DataError(where + ": missing value for stage-" +
                        std::to_string(stages_[c]) + " covariate '" + names_[c] + "'");
      }
    }
    if (!design_.option_in_stage(1, s.treatments[0])) {
      throw DataError(where + ": a1 = " + std::to_string(s.treatments[0]) +
                      " not in the stage 1 option set");
    }
    strata_cache_[i].clear();
    for (int k = 2; k <= s.kappa; ++k) {
      SubjectStageView view(*this, s, k);
      int stratum;
      try {
        stratum = design_.stratum_index(k, view);
      } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
      }
      const Stratum& st = design_.strata_at(k)[stratum];
      if (std::find(st.options.begin(), st.options.end(), s.treatments[k - 1]) ==
          st.options.end()) {
        throw DataError(where + ": a" + std::to_string(k) + " = " +
                        std::to_string(s.treatments[k - 1]) +
                        " is not feasible in stratum '" + st.name + "'");
      }
      strata_cache_[i].push_back(stratum);
    }
  }
}

std::optional<double> SubjectStageView::value(std::string_view name) const {
  auto parse_indexed = [&](char prefix) -> int {
    if (name.size() < 2 || name[0] != prefix) return -1;
    int idx = 0;
    for (size_t i = 1; i < name.size(); ++i) {
      if (name[i] < '0' || name[i] > '9') return -1;
      idx = idx * 10 + (name[i] - '0');
    }
    return idx;
  };
  int col = cohort_.covariate_index(name);
  if (col >= 0) {
    if (cohort_.covariate_stage(col) > stage_) return std::nullopt;
    double v = s_.covariates[col];
    if (std::isnan(v)) return std::nullopt;
    return v;
  }
  if (int j = parse_indexed('a'); j >= 1) {
    if (j >= stage_ || j > s_.kappa) return std::nullopt;
    return static_cast<double>(s_.treatments[j - 1]);
  }
  if (int j = parse_indexed('t'); j >= 2) {
    if (j > stage_ || j > s_.kappa) return std::nullopt;
    return s_.decision_times[j - 1];
  }
  if (name == "kappa") return static_cast<double>(s_.kappa);
  return std::nullopt;
}

Cohort load_cohort(const std::string& path, const SmartDesign& design,
                   const std::vector<std::pair<std::string, int>>& covariate_stages) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError("empty data file '" + path + "'");
  std::vector<std::string> header = split_csv_line(line);

  const int K = design.stages;
  std::vector<std::string> expected = {"subject_id", "kappa", "u", "delta"};
  for (int k = 1; k <= K; ++k) expected.push_back("a" + std::to_string(k));
  for (int k = 2; k <= K; ++k) expected.push_back("t" + std::to_string(k));
  if (header.size() < expected.size()) {
    throw DataError("header is missing required columns");
  }
  for (size_t i = 0; i < expected.size(); ++i) {
    if (header[i] != expected[i]) {
      throw DataError("header column " + std::to_string(i + 1) + " must be '" +
                      expected[i] + "', found '" + header[i] + "'");
    }
  }
  std::vector<std::string> cov_names(header.begin() + expected.size(), header.end());
  std::vector<int> cov_cols;  // declared-order -> CSV position
  std::vector<std::pair<std::string, int>> columns;
  for (const auto& [name, stage] : covariate_stages) {
    auto it = std::find(cov_names.begin(), cov_names.end(), name);
    if (it == cov_names.end()) {
      throw DataError("declared covariate '" + name + "' not found in data header");
    }
    cov_cols.push_back(static_cast<int>(expected.size() + (it - cov_names.begin())));
    columns.emplace_back(name, stage);
  }
  for (const std::string& name : cov_names) {
    bool declared = false;
    for (const auto& [n, st] : covariate_stages) {
      if (n == name) {
        declared = true;
        break;
      }
    }
    if (!declared) {
      throw DataError("covariate column '" + name + "' has no declared stage");
    }
  }

  std::vector<SubjectRecord> records;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    std::vector<std::string> f = split_csv_line(line);
    if (f.size() != header.size()) {
      throw DataError("row " + std::to_string(row) + ": expected " +
                      std::to_string(header.size()) + " fields, found " +
                      std::to_string(f.size()));
    }
    SubjectRecord s;
    s.id = f[0];
    s.kappa = parse_int(f[1], row, "kappa");
    s.u = parse_number(f[2], row, "u");
    s.delta = parse_int(f[3], row, "delta");
    if (s.kappa < 1 || s.kappa > K) {
      throw DataError("row " + std::to_string(row) + ": kappa outside [1," +
                      std::to_string(K) + "]");
    }
    s.treatments.resize(s.kappa);
    s.decision_times.assign(s.kappa, 0.0);
    for (int k = 1; k <= K; ++k) {
      const std::string& field = f[3 + k];
      if (k <= s.kappa) {
        if (field.empty()) {
          throw DataError("row " + std::to_string(row) + ": a" + std::to_string(k) +
                          " must be present when kappa >= " + std::to_string(k));
        }
        s.treatments[k - 1] = parse_int(field, row, "a" + std::to_string(k));
      } else if (!field.empty()) {
        throw DataError("row " + std::to_string(row) + ": a" + std::to_string(k) +
                        " must be empty when kappa < " + std::to_string(k));
      }
    }
    for (int k = 2; k <= K; ++k) {
      const std::string& field = f[2 + K + k];
      if (k <= s.kappa) {
        if (field.empty()) {
          throw DataError("row " + std::to_string(row) + ": t" + std::to_string(k) +
                          " must be present when kappa >= " + std::to_string(k));
        }
        s.decision_times[k - 1] = parse_number(field, row, "t" + std::to_string(k));
      } else if (!field.empty()) {
        throw DataError("row " + std::to_string(row) + ": t" + std::to_string(k) +
                        " must be empty when kappa < " + std::to_string(k));
      }
    }
    s.covariates.assign(columns.size(), kNaN);
    for (size_t c = 0; c < columns.size(); ++c) {
      const std::string& field = f[cov_cols[c]];
      if (!field.empty()) {
        s.covariates[c] = parse_number(field, row, columns[c].first);
      }
    }
    records.push_back(std::move(s));
  }

  try {
    return Cohort(design, columns, std::move(records));
  } catch (const DataError& e) {
    throw DataError(std::string(e.what()) + " (file '" + path + "')");
  }
}

void save_cohort(const Cohort& cohort, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write data file '" + path + "'");
  const int K = cohort.design().stages;
  out << "subject_id,kappa,u,delta";
  for (int k = 1; k <= K; ++k) out << ",a" << k;
  for (int k = 2; k <= K; ++k) out << ",t" << k;
  for (const std::string& name : cohort.covariate_names()) out << "," << name;
  out << "\n";
  for (const SubjectRecord& s : cohort.subjects()) {
    out << s.id << "," << s.kappa << "," << format_double(s.u) << "," << s.delta;
    for (int k = 1; k <= K; ++k) {
      out << ",";
      if (k <= s.kappa) out << s.treatments[k - 1];
    }
    for (int k = 2; k <= K; ++k) {
      out << ",";
      if (k <= s.kappa) out << format_double(s.decision_times[k - 1]);
    }
    for (size_t c = 0; c < s.covariates.size(); ++c) {
      out << ",";
      if (!std::isnan(s.covariates[c])) out << format_double(s.covariates[c]);
    }
    out << "\n";
  }
  if (!out.good()) throw DataError("write failed for '" + path + "'");
}

std::vector<double> event_grid_or_empty(const Cohort& cohort, double L) {
  if (!(L > 0.0)) throw DataError("truncation time L must be positive");
  std::vector<double> times;
  for (const SubjectRecord& s : cohort.subjects()) {
    if (s.delta == 1 && s.u <= L) times.push_back(s.u);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());
  return times;
}

std::vector<double> event_grid(const Cohort& cohort, double L) {
  std::vector<double> g = event_grid_or_empty(cohort, L);
  if (g.empty()) {
    throw EmptyGridError("no events at or before L = " + format_double(L));
  }
  return g;
}

double default_truncation(const Cohort& cohort, double at_risk_fraction) {
  if (!(at_risk_fraction > 0.0) || at_risk_fraction >= 1.0) {
    throw ConfigError("at_risk_fraction must lie in (0,1)");
  }
  if (cohort.size() == 0) throw DataError("empty cohort");
  std::vector<double> times;
  times.reserve(cohort.size());
  for (const SubjectRecord& s : cohort.subjects()) times.push_back(s.u);
  std::sort(times.begin(), times.end());
  const int n = cohort.size();
  const int target = static_cast<int>(std::ceil(at_risk_fraction * n));
  // at_risk(times[i]) = n - i, so the smallest time with at_risk <= target
  // is times[n - target] when it exists.
  for (int i = 0; i < n; ++i) {
    int at_risk = n - i;
    if (at_risk <= target) return times[i];
  }
  return times.back();
}

std::pair<int, int> counting_views(const SubjectRecord& s, double u) {
  int dn = (s.u == u && s.delta == 1) ? 1 : 0;
  int y = (s.u >= u) ? 1 : 0;
  return {dn, y};
}

}  // namespace regimetest
