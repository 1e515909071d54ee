#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "regimetest/cohort.hpp"
#include "regimetest/errors.hpp"
#include "test_helpers.hpp"

using namespace regimetest;
using namespace rt_test;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* kHeader = "subject_id,kappa,u,delta,a1,a2,t2,x1,r,x2\n";

std::vector<std::pair<std::string, int>> columns() {
  return {{"x1", 1}, {"r", 2}, {"x2", 2}};
}

}  // namespace

TEST_CASE("load_cohort happy path") {
  const std::string path = "cohort_happy.csv";
  write_file(path, std::string(kHeader) +
                       "s1,1,2.5,1,0,,,0.1,,\n"
                       "s2,2,7.25,0,1,0,3.5,-0.3,1,1\n"
                       "s3,2,9,1,0,1,4,0.55,1,0\n");
  Cohort c = load_cohort(path, two_stage_design(), columns());
  CHECK(c.size() == 3);
  CHECK(c.subjects()[0].kappa == 1);
  CHECK(c.subjects()[1].decision_times[1] == 3.5);
  CHECK(c.subjects()[2].treatments[1] == 1);
  CHECK(c.stratum_of(1, 2) == 1);  // a1 == 1
  CHECK(c.stratum_of(2, 2) == 0);
  std::remove(path.c_str());
}

TEST_CASE("load_cohort rejects a decision time after u") {
  const std::string path = "cohort_bad_t2.csv";
  write_file(path, std::string(kHeader) + "s1,2,3.0,1,1,0,3.5,0.1,1,1\n");
  CHECK_THROWS_WITH_AS(load_cohort(path, two_stage_design(), columns()),
                       doctest::Contains("T_kappa <= u"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("load_cohort row-level diagnostics") {
  const std::string base = std::string(kHeader);
  struct Case {
    const char* row;
    const char* needle;
  };
  const Case cases[] = {
      {"s1,1,2.5,1,,,,0.1,,\n", "a1 must be present"},
      {"s1,1,2.5,1,0,1,,0.1,,\n", "a2 must be empty"},
      {"s1,2,2.5,1,0,1,,0.1,1,1\n", "t2 must be present"},
      {"s1,1,2.5,3,0,,,0.1,,\n", "delta"},
      {"s1,1,2.5,1,0,,,,,\n", "x1"},
      {"s1,1,abc,1,0,,,0.1,,\n", "malformed"},
      {"s1,1,2.5,1,0,,\n", "expected 10 fields"},
  };
  for (const Case& tc : cases) {
    const std::string path = "cohort_bad_row.csv";
    write_file(path, base + tc.row);
    CHECK_THROWS_WITH_AS(load_cohort(path, two_stage_design(), columns()),
                         doctest::Contains(tc.needle), DataError);
    std::remove(path.c_str());
  }
}

TEST_CASE("duplicate subject ids are rejected") {
  const std::string path = "cohort_dup.csv";
  write_file(path, std::string(kHeader) +
                       "s1,1,2.5,1,0,,,0.1,,\n"
                       "s1,1,3.5,0,1,,,0.2,,\n");
  CHECK_THROWS_WITH_AS(load_cohort(path, two_stage_design(), columns()),
                       doctest::Contains("duplicate subject id"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("treatment outside the matched stratum's options is rejected") {
  SmartDesign d = two_stage_design();
  d.options[1] = {0, 1, 2};
  d.strata[2] = {
      {"resp_a0", Condition::parse("a1 == 0"), {0, 1}},
      {"resp_a1", Condition::parse("a1 == 1"), {1, 2}},
  };
  const std::string path = "cohort_stratum_opt.csv";
  write_file(path, std::string(kHeader) + "s1,2,7,1,1,0,3,0.1,1,1\n");
  CHECK_THROWS_WITH_AS(load_cohort(path, d, columns()),
                       doctest::Contains("not feasible"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("undeclared covariate columns are rejected") {
  const std::string path = "cohort_undeclared.csv";
  write_file(path, std::string(kHeader) + "s1,1,2.5,1,0,,,0.1,,\n");
  CHECK_THROWS_WITH_AS(load_cohort(path, two_stage_design(), {{"x1", 1}, {"r", 2}}),
                       doctest::Contains("no declared stage"), DataError);
  std::remove(path.c_str());
}

TEST_CASE("save/load round trip is the identity") {
  const std::string p1 = "cohort_rt1.csv";
  const std::string p2 = "cohort_rt2.csv";
  write_file(p1, std::string(kHeader) +
                     "s1,1,2.512345678901234,1,0,,,0.1,,\n"
                     "s2,2,7.25,0,1,0,3.5,-0.333333333333333,1,1\n"
                     "s3,2,9,1,0,1,4.125,0.55,1,0\n");
  Cohort c1 = load_cohort(p1, two_stage_design(), columns());
  save_cohort(c1, p2);
  Cohort c2 = load_cohort(p2, two_stage_design(), columns());
  REQUIRE(c2.size() == c1.size());
  for (int i = 0; i < c1.size(); ++i) {
    const SubjectRecord& a = c1.subjects()[i];
    const SubjectRecord& b = c2.subjects()[i];
    CHECK(a.id == b.id);
    CHECK(a.kappa == b.kappa);
    CHECK(a.u == b.u);
    CHECK(a.delta == b.delta);
    CHECK(a.treatments == b.treatments);
    CHECK(a.decision_times == b.decision_times);
    REQUIRE(a.covariates.size() == b.covariates.size());
    for (size_t j = 0; j < a.covariates.size(); ++j) {
      if (std::isnan(a.covariates[j])) {
        CHECK(std::isnan(b.covariates[j]));
      } else {
        CHECK(a.covariates[j] == b.covariates[j]);
      }
    }
  }
  // a second save must produce identical bytes
  const std::string p3 = "cohort_rt3.csv";
  save_cohort(c2, p3);
  CHECK(slurp(p2) == slurp(p3));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(p3.c_str());
}

TEST_CASE("event_grid dedupes, truncates and reports empties") {
  Cohort c = one_stage_cohort({one_stage_subject("s1", 0, 2.0, 1),
                               one_stage_subject("s2", 1, 2.0, 1),
                               one_stage_subject("s3", 0, 5.0, 1),
                               one_stage_subject("s4", 1, 9.0, 1)});
  CHECK(event_grid(c, 6.0) == std::vector<double>{2.0, 5.0});
  CHECK(event_grid(c, 100.0) == std::vector<double>{2.0, 5.0, 9.0});

  Cohort censored = one_stage_cohort({one_stage_subject("s1", 0, 2.0, 0),
                                      one_stage_subject("s2", 1, 3.0, 0)});
  CHECK_THROWS_AS(event_grid(censored, 10.0), EmptyGridError);
  CHECK(event_grid_or_empty(censored, 10.0).empty());
}

TEST_CASE("event_grid is prefix-monotone in L") {
  std::vector<SubjectRecord> subjects;
  for (int i = 0; i < 60; ++i) {
    subjects.push_back(one_stage_subject("s" + std::to_string(i), i % 2,
                                         0.37 * ((i * 7) % 23) + 0.253, (i % 3) != 0));
  }
  Cohort c = one_stage_cohort(std::move(subjects));
  std::vector<double> l_values = {1.0, 2.0, 4.0, 8.0, 16.0};
  for (size_t i = 1; i < l_values.size(); ++i) {
    std::vector<double> g1 = event_grid_or_empty(c, l_values[i - 1]);
    std::vector<double> g2 = event_grid_or_empty(c, l_values[i]);
    REQUIRE(g1.size() <= g2.size());
    for (size_t k = 0; k < g1.size(); ++k) CHECK(g1[k] == g2[k]);
  }
}

TEST_CASE("default_truncation matches a brute-force search") {
  std::vector<SubjectRecord> subjects;
  for (int i = 0; i < 100; ++i) {
    subjects.push_back(one_stage_subject("s" + std::to_string(i), i % 2,
                                         1.0 + 0.13 * ((i * 31) % 97), i % 2));
  }
  Cohort c = one_stage_cohort(std::move(subjects));
  const double f = 0.02;
  const double L = default_truncation(c, f);
  // oracle: smallest observed time with at most ceil(f n) subjects at risk
  const int target = static_cast<int>(std::ceil(f * c.size()));
  double best = -1.0;
  for (const SubjectRecord& s : c.subjects()) {
    int at_risk = 0;
    for (const SubjectRecord& t : c.subjects()) at_risk += t.u >= s.u ? 1 : 0;
    if (at_risk <= target && (best < 0.0 || s.u < best)) best = s.u;
  }
  REQUIRE(best > 0.0);
  CHECK(L == best);
}

TEST_CASE("counting views") {
  SubjectRecord s5 = one_stage_subject("a", 0, 5.0, 1);
  CHECK(counting_views(s5, 5.0) == std::pair<int, int>{1, 1});
  SubjectRecord s3 = one_stage_subject("b", 0, 3.0, 0);
  CHECK(counting_views(s3, 5.0) == std::pair<int, int>{0, 0});
  SubjectRecord s9 = one_stage_subject("c", 0, 9.0, 1);
  CHECK(counting_views(s9, 5.0) == std::pair<int, int>{0, 1});
}

TEST_CASE("counting-process invariants over the grid") {
  std::vector<SubjectRecord> subjects;
  for (int i = 0; i < 40; ++i) {
    subjects.push_back(one_stage_subject("s" + std::to_string(i), i % 2,
                                         0.5 + 0.37 * ((i * 13) % 17), (i % 4) != 1));
  }
  Cohort c = one_stage_cohort(std::move(subjects));
  std::vector<double> grid = event_grid(c, 1e9);
  for (const SubjectRecord& s : c.subjects()) {
    int dn_sum = 0;
    int prev_y = 1;
    for (double u : grid) {
      auto [dn, y] = counting_views(s, u);
      dn_sum += dn;
      CHECK(y <= prev_y);
      prev_y = y;
    }
    CHECK(dn_sum <= 1);
    CHECK(dn_sum == ((s.delta == 1 && s.u <= grid.back()) ? 1 : 0));
  }
}
