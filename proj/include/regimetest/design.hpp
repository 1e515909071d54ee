#ifndef REGIMETEST_DESIGN_HPP
#define REGIMETEST_DESIGN_HPP

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace regimetest {

// Read-only view of the variables known about a subject at some point in time.
// Names follow the rule DSL: covariate column names plus the reserved
// a1..aK (prior treatments), t2..tK (decision times), r (response) and kappa.
class History {
 public:
  virtual ~History() = default;
  virtual std::optional<double> value(std::string_view name) const = 0;
  virtual bool event_occurred() const { return false; }
};

// Flat map-backed history, mainly for tests and ad-hoc evaluation.
class MapHistory : public History {
 public:
  MapHistory() = default;
  explicit MapHistory(std::map<std::string, double, std::less<>> vars,
                      bool event = false)
      : vars_(std::move(vars)), event_(event) {}
  std::optional<double> value(std::string_view name) const override {
    auto it = vars_.find(name);
    if (it == vars_.end()) return std::nullopt;
    return it->second;
  }
  bool event_occurred() const override { return event_; }
  void set(const std::string& name, double v) { vars_[name] = v; }
  void set_event_occurred(bool e) { event_ = e; }

 private:
  std::map<std::string, double, std::less<>> vars_;
  bool event_ = false;
};

// Declares which variable names exist and the earliest decision point at
// which each becomes usable. Used to validate conditions at parse time.
struct VarScope {
  int stages = 1;
  std::map<std::string, int> covariate_stage;

  // Earliest stage (1..K) at which `name` may appear in a condition, or
  // nullopt when the name is unknown.
  std::optional<int> available_from(std::string_view name) const;
};

// Boolean expression over named history variables: comparisons against
// numeric literals combined with and/or/not.
class Condition {
 public:
  Condition();  // literal true

  // Parses a full expression string (the DSL `expr` production).
  static Condition parse(const std::string& text);
  static Condition always_true();

  bool evaluate(const History& h) const;
  bool is_true_literal() const;
  // All variable names referenced by the expression.
  std::vector<std::string> variables() const;
  std::string to_string() const;

  struct Node;

 private:
  explicit Condition(std::shared_ptr<const Node> root);
  std::shared_ptr<const Node> root_;
  friend class DslParser;
};

// One feasible subset of options at a decision point, keyed by a condition
// on the history available there.
struct Stratum {
  std::string name;
  Condition condition;
  std::vector<int> options;
};

// Shape of the multistage study: stage count, per-stage option sets and,
// for stages 2..K, the strata defining feasible subsets.
struct SmartDesign {
  int stages = 1;
  std::vector<std::vector<int>> options;   // index k-1 holds A_k
  std::map<int, std::vector<Stratum>> strata;  // stage -> strata (k >= 2)

  bool option_in_stage(int stage, int code) const;
  const std::vector<Stratum>& strata_at(int stage) const;
  // Index of the unique stratum matching the history at `stage`; throws
  // DataError unless exactly one matches.
  int stratum_index(int stage, const History& h) const;
  void validate() const;
};

}  // namespace regimetest

#endif
