#ifndef REGIMETEST_CONDITION_IMPL_HPP
#define REGIMETEST_CONDITION_IMPL_HPP

// Internal: expression tree nodes and the recursive-descent parser shared by
// Condition::parse and parse_regime.

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "dsl_lexer.hpp"
#include "regimetest/design.hpp"
#include "regimetest/errors.hpp"

namespace regimetest {

struct Condition::Node {
  enum class Kind { True, Cmp, And, Or, Not };
  Kind kind = Kind::True;
  // Cmp payload
  std::string var;
  dsl::Tok op = dsl::Tok::Eq;
  double literal = 0.0;
  std::vector<std::shared_ptr<const Node>> children;
};

using ConditionNodePtr = std::shared_ptr<const Condition::Node>;

inline ConditionNodePtr make_true_node() {
  auto n = std::make_shared<Condition::Node>();
  n->kind = Condition::Node::Kind::True;
  return n;
}

class DslParser {
 public:
  explicit DslParser(std::vector<dsl::Token> toks) : toks_(std::move(toks)) {}

  const dsl::Token& peek() const { return toks_[pos_]; }
  dsl::Token take() { return toks_[pos_++]; }
  bool at(dsl::Tok k) const { return peek().kind == k; }

  dsl::Token expect(dsl::Tok k, const char* what) {
    if (!at(k)) {
      throw ParseError(std::string("expected ") + what + ", found " +
                           dsl::tok_name(peek().kind),
                       peek().line, peek().column);
    }
    return take();
  }

  Condition parse_expression() { return Condition(parse_or()); }

 private:
  ConditionNodePtr parse_or() {
    ConditionNodePtr left = parse_and();
    if (!at(dsl::Tok::KwOr)) return left;
    auto node = std::make_shared<Condition::Node>();
    node->kind = Condition::Node::Kind::Or;
    node->children.push_back(left);
    while (at(dsl::Tok::KwOr)) {
      take();
      node->children.push_back(parse_and());
    }
    return node;
  }

  ConditionNodePtr parse_and() {
    ConditionNodePtr left = parse_unary();
    if (!at(dsl::Tok::KwAnd)) return left;
    auto node = std::make_shared<Condition::Node>();
    node->kind = Condition::Node::Kind::And;
    node->children.push_back(left);
    while (at(dsl::Tok::KwAnd)) {
      take();
      node->children.push_back(parse_unary());
    }
    return node;
  }

  ConditionNodePtr parse_unary() {
    using dsl::Tok;
    if (at(Tok::KwNot)) {
      take();
      auto node = std::make_shared<Condition::Node>();
      node->kind = Condition::Node::Kind::Not;
      node->children.push_back(parse_unary());
      return node;
    }
    if (at(Tok::LParen)) {
      take();
      ConditionNodePtr inner = parse_or();
      expect(Tok::RParen, "')'");
      return inner;
    }
    if (at(Tok::KwTrue)) {
      take();
      return make_true_node();
    }
    if (at(Tok::Ident)) {
      dsl::Token name = take();
      auto node = std::make_shared<Condition::Node>();
      node->kind = Condition::Node::Kind::Cmp;
      node->var = name.text;
      switch (peek().kind) {
        case Tok::Lt:
        case Tok::Le:
        case Tok::Gt:
        case Tok::Ge:
        case Tok::Eq:
        case Tok::Ne:
          node->op = take().kind;
          break;
        default:
          throw ParseError("expected comparison operator after '" + name.text + "'",
                           peek().line, peek().column);
      }
      dsl::Token num = expect(Tok::Number, "numeric literal");
      node->literal = num.number;
      return node;
    }
    throw ParseError(std::string("expected condition, found ") +
                         dsl::tok_name(peek().kind),
                     peek().line, peek().column);
  }

  std::vector<dsl::Token> toks_;
  size_t pos_ = 0;
};

}  // namespace regimetest

#endif
