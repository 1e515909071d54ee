#include "regimetest/design.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "condition_impl.hpp"
#include "regimetest/errors.hpp"
#include "regimetest/numeric.hpp"

namespace regimetest {

using dsl::Tok;

namespace {

bool eval_node(const Condition::Node& n, const History& h) {
  using Kind = Condition::Node::Kind;
  switch (n.kind) {
    case Kind::True:
      return true;
    case Kind::Cmp: {
      std::optional<double> v = h.value(n.var);
      if (!v.has_value() || std::isnan(*v)) {
        throw DataError("variable '" + n.var + "' has no value in this history");
      }
      switch (n.op) {
        case Tok::Lt: return *v < n.literal;
        case Tok::Le: return *v <= n.literal;
        case Tok::Gt: return *v > n.literal;
        case Tok::Ge: return *v >= n.literal;
        case Tok::Eq: return *v == n.literal;
        case Tok::Ne: return *v != n.literal;
        default: throw Error("corrupt condition node");
      }
    }
    case Kind::And:
      for (const auto& c : n.children) {
        if (!eval_node(*c, h)) return false;
      }
      return true;
    case Kind::Or:
      for (const auto& c : n.children) {
        if (eval_node(*c, h)) return true;
      }
      return false;
    case Kind::Not:
      return !eval_node(*n.children.front(), h);
  }
  return false;
}

void collect_vars(const Condition::Node& n, std::set<std::string>& out) {
  if (n.kind == Condition::Node::Kind::Cmp) out.insert(n.var);
  for (const auto& c : n.children) collect_vars(*c, out);
}

// levels: 0 = or-context, 1 = and-context, 2 = unary-context
std::string print_node(const Condition::Node& n, int parent_level) {
  using Kind = Condition::Node::Kind;
  switch (n.kind) {
    case Kind::True:
      return "true";
    case Kind::Cmp: {
      std::string op;
      switch (n.op) {
        case Tok::Lt: op = "<"; break;
        case Tok::Le: op = "<="; break;
        case Tok::Gt: op = ">"; break;
        case Tok::Ge: op = ">="; break;
        case Tok::Eq: op = "=="; break;
        case Tok::Ne: op = "!="; break;
        default: op = "?"; break;
      }
      return n.var + " " + op + " " + format_double(n.literal);
    }
    case Kind::And: {
      std::string s;
      for (size_t i = 0; i < n.children.size(); ++i) {
        if (i) s += " and ";
        s += print_node(*n.children[i], 1);
      }
      if (parent_level > 1) return "(" + s + ")";
      return s;
    }
    case Kind::Or: {
      std::string s;
      for (size_t i = 0; i < n.children.size(); ++i) {
        if (i) s += " or ";
        s += print_node(*n.children[i], 0);
      }
      if (parent_level > 0) return "(" + s + ")";
      return s;
    }
    case Kind::Not:
      return "not " + print_node(*n.children.front(), 2);
  }
  return "";
}

}  // namespace

Condition::Condition() : root_(make_true_node()) {}
Condition::Condition(std::shared_ptr<const Node> root) : root_(std::move(root)) {}

Condition Condition::parse(const std::string& text) {
  DslParser p(dsl::lex(text));
  Condition c = p.parse_expression();
  p.expect(Tok::End, "end of expression");
  return c;
}

Condition Condition::always_true() { return Condition(); }

bool Condition::evaluate(const History& h) const { return eval_node(*root_, h); }

bool Condition::is_true_literal() const { return root_->kind == Node::Kind::True; }

std::vector<std::string> Condition::variables() const {
  std::set<std::string> s;
  collect_vars(*root_, s);
  return {s.begin(), s.end()};
}

std::string Condition::to_string() const { return print_node(*root_, 0); }

std::optional<int> VarScope::available_from(std::string_view name) const {
  auto parse_indexed = [&](char prefix) -> std::optional<int> {
    if (name.size() < 2 || name[0] != prefix) return std::nullopt;
    int idx = 0;
    for (size_t i = 1; i < name.size(); ++i) {
      if (name[i] < '0' || name[i] > '9') return std::nullopt;
      idx = idx * 10 + (name[i] - '0');
    }
    return idx;
  };
  auto it = covariate_stage.find(std::string(name));
  if (it != covariate_stage.end()) return it->second;
  if (auto j = parse_indexed('a'); j && *j >= 1 && *j <= stages) return *j + 1;
  if (auto j = parse_indexed('t'); j && *j >= 2 && *j <= stages) return *j;
  if (name == "kappa") return 1;
  if (name == "r" && stages >= 2) return 2;
  return std::nullopt;
}

bool SmartDesign::option_in_stage(int stage, int code) const {
  const auto& opts = options.at(stage - 1);
  return std::find(opts.begin(), opts.end(), code) != opts.end();
}

const std::vector<Stratum>& SmartDesign::strata_at(int stage) const {
  static const std::vector<Stratum> empty;
  auto it = strata.find(stage);
  if (it == strata.end()) return empty;
  return it->second;
}

int SmartDesign::stratum_index(int stage, const History& h) const {
  const auto& list = strata_at(stage);
  if (list.empty()) {
    throw DataError("design declares no strata at stage " + std::to_string(stage));
  }
  int found = -1;
  for (size_t i = 0; i < list.size(); ++i) {
    if (list[i].condition.evaluate(h)) {
      if (found >= 0) {
        throw DataError("history matches both stratum '" + list[found].name +
                        "' and stratum '" + list[i].name + "' at stage " +
                        std::to_string(stage));
      }
      found = static_cast<int>(i);
    }
  }
  if (found < 0) {
    throw DataError("history matches no stratum at stage " + std::to_string(stage));
  }
  return found;
}

void SmartDesign::validate() const {
  if (stages < 1) throw ConfigError("design: stages must be >= 1");
  if (static_cast<int>(options.size()) != stages) {
    throw ConfigError("design: options must list one option set per stage");
  }
  for (int k = 1; k <= stages; ++k) {
    if (options[k - 1].empty()) {
      throw ConfigError("design: empty option set at stage " + std::to_string(k));
    }
    std::set<int> uniq(options[k - 1].begin(), options[k - 1].end());
    if (uniq.size() != options[k - 1].size()) {
      throw ConfigError("design: duplicate option code at stage " + std::to_string(k));
    }
  }
  for (const auto& [stage, list] : strata) {
    if (stage < 2 || stage > stages) {
      throw ConfigError("design: strata declared for invalid stage " +
                        std::to_string(stage));
    }
    std::set<std::string> names;
    for (const auto& s : list) {
      if (s.name.empty()) throw ConfigError("design: stratum with empty name");
      if (!names.insert(s.name).second) {
        throw ConfigError("design: duplicate stratum name '" + s.name + "'");
      }
      if (s.options.empty()) {
        throw ConfigError("design: stratum '" + s.name + "' has no options");
      }
      for (int code : s.options) {
        if (!option_in_stage(stage, code)) {
          throw ConfigError("design: stratum '" + s.name + "' lists option " +
                            std::to_string(code) + " outside stage " +
                            std::to_string(stage) + " options");
        }
      }
    }
  }
  for (int k = 2; k <= stages; ++k) {
    if (strata_at(k).empty()) {
      throw ConfigError("design: stage " + std::to_string(k) +
                        " requires at least one stratum");
    }
  }
}

}  // namespace regimetest
