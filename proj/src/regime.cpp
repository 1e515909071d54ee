#include "regimetest/regime.hpp"

#include <cmath>
#include <map>
#include <set>

#include "condition_impl.hpp"
#include "regimetest/errors.hpp"

namespace regimetest {

using dsl::Tok;
using dsl::Token;

namespace {

// Parses "stage<k>" or "stage <k>" at the current position; returns 0 when
// the stream is not at a stage header.
int try_stage_header(DslParser& p) {
  if (p.at(Tok::KwStage)) {
    Token kw = p.take();
    Token num = p.expect(Tok::Number, "stage number");
    if (!num.is_int || num.number < 1) {
      throw ParseError("invalid stage number '" + num.text + "'", num.line, num.column);
    }
    p.expect(Tok::Colon, "':'");
    return static_cast<int>(num.number);
  }
  if (p.at(Tok::Ident)) {
    const std::string& t = p.peek().text;
    if (t.size() > 5 && t.rfind("stage", 0) == 0) {
      int k = 0;
      bool digits = true;
      for (size_t i = 5; i < t.size(); ++i) {
        if (t[i] < '0' || t[i] > '9') {
          digits = false;
          break;
        }
        k = k * 10 + (t[i] - '0');
      }
      if (digits && k >= 1) {
        p.take();
        p.expect(Tok::Colon, "':'");
        return k;
      }
    }
  }
  return 0;
}

bool at_stage_header(const DslParser& p) {
  if (p.at(Tok::KwStage)) return true;
  if (p.at(Tok::Ident)) {
    const std::string& t = p.peek().text;
    if (t.size() > 5 && t.rfind("stage", 0) == 0) {
      for (size_t i = 5; i < t.size(); ++i) {
        if (t[i] < '0' || t[i] > '9') return false;
      }
      return true;
    }
  }
  return false;
}

int expect_treatment_code(DslParser& p) {
  Token num = p.expect(Tok::Number, "treatment code");
  if (!num.is_int || num.number < 0) {
    throw ParseError("treatment code must be a nonnegative integer, found '" +
                         num.text + "'",
                     num.line, num.column);
  }
  return static_cast<int>(num.number);
}

}  // namespace

Regime parse_regime(const std::string& text, const SmartDesign& design,
                    const VarScope& scope, const std::string& label) {
  DslParser p(dsl::lex(text));
  std::map<int, StageRule> rules;

  while (!p.at(Tok::End)) {
    while (p.at(Tok::Semi)) p.take();
    if (p.at(Tok::End)) break;

    const Token head = p.peek();
    int k = try_stage_header(p);
    if (k == 0) {
      throw ParseError("expected stage header", head.line, head.column);
    }
    if (k > design.stages) {
      throw ConfigError("regime declares stage " + std::to_string(k) +
                        " but the design has " + std::to_string(design.stages) +
                        " stage(s)");
    }
    if (rules.count(k)) {
      throw ConfigError("duplicate rule for stage " + std::to_string(k));
    }

    StageRule rule;
    bool saw_catch_all = false;
    for (;;) {
      if (saw_catch_all && (p.at(Tok::KwIf) || p.at(Tok::Number))) {
        throw ParseError("unreachable clause after catch-all",
                         p.peek().line, p.peek().column);
      }
      if (p.at(Tok::KwIf)) {
        p.take();
        Condition cond = p.parse_expression();
        p.expect(Tok::KwThen, "'then'");
        int code = expect_treatment_code(p);
        rule.clauses.push_back({cond, code});
        if (p.at(Tok::KwElse)) {  // sugar for a trailing catch-all
          p.take();
          int else_code = expect_treatment_code(p);
          rule.clauses.push_back({Condition::always_true(), else_code});
          saw_catch_all = true;
        }
      } else if (p.at(Tok::Number)) {
        int code = expect_treatment_code(p);
        rule.clauses.push_back({Condition::always_true(), code});
        saw_catch_all = true;
      } else {
        throw ParseError(std::string("expected clause, found ") +
                             dsl::tok_name(p.peek().kind),
                         p.peek().line, p.peek().column);
      }
      if (p.at(Tok::Semi)) {
        p.take();
        if (p.at(Tok::End) || at_stage_header(p)) break;
        continue;
      }
      break;
    }

    if (rule.clauses.empty() || !rule.clauses.back().condition.is_true_literal()) {
      throw ConfigError("stage " + std::to_string(k) +
                        " rule is missing a catch-all clause");
    }
    for (const Clause& c : rule.clauses) {
      if (!design.option_in_stage(k, c.treatment)) {
        throw ConfigError("treatment code " + std::to_string(c.treatment) +
                          " is not in the design's stage " + std::to_string(k) +
                          " option set");
      }
      for (const std::string& var : c.condition.variables()) {
        std::optional<int> from = scope.available_from(var);
        if (!from.has_value()) {
          throw ConfigError("unknown variable '" + var + "' in stage " +
                            std::to_string(k) + " rule");
        }
        if (*from > k) {
          throw ConfigError("variable '" + var + "' is not available until stage " +
                            std::to_string(*from) + " but is used in a stage " +
                            std::to_string(k) + " rule");
        }
      }
    }
    rules.emplace(k, std::move(rule));
  }

  for (int k = 1; k <= design.stages; ++k) {
    if (!rules.count(k)) {
      throw ConfigError("regime is missing a rule for stage " + std::to_string(k));
    }
  }

  std::vector<StageRule> stages;
  stages.reserve(design.stages);
  for (int k = 1; k <= design.stages; ++k) stages.push_back(std::move(rules[k]));
  return Regime(std::move(stages), label);
}

std::string Regime::pretty_print() const {
  std::string out;
  for (int k = 1; k <= stage_count(); ++k) {
    if (k > 1) out += "\n";
    out += "stage" + std::to_string(k) + ": ";
    const StageRule& rule = stage(k);
    for (size_t i = 0; i < rule.clauses.size(); ++i) {
      if (i) out += "; ";
      const Clause& c = rule.clauses[i];
      if (c.condition.is_true_literal()) {
        out += std::to_string(c.treatment);
      } else {
        out += "if " + c.condition.to_string() + " then " + std::to_string(c.treatment);
      }
    }
  }
  return out;
}

std::optional<int> evaluate_rule(const Regime& regime, int k, const History& h) {
  if (h.event_occurred()) return std::nullopt;
  const StageRule& rule = regime.stage(k);
  for (const Clause& c : rule.clauses) {
    if (c.condition.evaluate(h)) return c.treatment;
  }
  // unreachable: parse_regime guarantees a catch-all
  throw Error("stage rule fell through without a catch-all");
}

}  // namespace regimetest
