#ifndef REGIMETEST_DSL_LEXER_HPP
#define REGIMETEST_DSL_LEXER_HPP

#include <string>
#include <vector>

#include "regimetest/errors.hpp"

namespace regimetest::dsl {

enum class Tok {
  Ident,
  Number,
  Colon,
  Semi,
  LParen,
  RParen,
  Lt,
  Le,
  Gt,
  Ge,
  Eq,
  Ne,
  KwStage,
  KwIf,
  KwThen,
  KwElse,
  KwAnd,
  KwOr,
  KwNot,
  KwTrue,
  End,
};

struct Token {
  Tok kind = Tok::End;
  std::string text;
  double number = 0.0;
  bool is_int = false;
  int line = 1;
  int column = 1;
};

std::vector<Token> lex(const std::string& src);

const char* tok_name(Tok t);

}  // namespace regimetest::dsl

#endif
