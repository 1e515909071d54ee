#include "dsl_lexer.hpp"

#include <cctype>
#include <charconv>
#include <cmath>

namespace regimetest::dsl {

namespace {

bool ident_start(char c) { return std::isalpha(static_cast<unsigned char>(c)) || c == '_'; }
bool ident_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_'; }

Tok keyword(const std::string& s) {
  if (s == "stage") return Tok::KwStage;
  if (s == "if") return Tok::KwIf;
  if (s == "then") return Tok::KwThen;
  if (s == "else") return Tok::KwElse;
  if (s == "and") return Tok::KwAnd;
  if (s == "or") return Tok::KwOr;
  if (s == "not") return Tok::KwNot;
  if (s == "true") return Tok::KwTrue;
  return Tok::Ident;
}

}  // namespace

std::vector<Token> lex(const std::string& src) {
  std::vector<Token> out;
  int line = 1, col = 1;
  size_t i = 0;
  const size_t n = src.size();

  auto push = [&](Tok k, std::string text, int l, int c) {
    Token t;
    t.kind = k;
    t.text = std::move(text);
    t.line = l;
    t.column = c;
    out.push_back(std::move(t));
  };

  while (i < n) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      col = 1;
      ++i;
      continue;
    }
    if (c == ' ' || c == '\t' || c == '\r') {
      ++col;
      ++i;
      continue;
    }
    if (c == '#') {  // comment to end of line
      while (i < n && src[i] != '\n') ++i;
      continue;
    }
    const int l0 = line, c0 = col;
    if (ident_start(c)) {
      size_t j = i;
      while (j < n && ident_char(src[j])) ++j;
      std::string word = src.substr(i, j - i);
      col += static_cast<int>(j - i);
      i = j;
      push(keyword(word), word, l0, c0);
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' ||
        (c == '-' && i + 1 < n &&
         (std::isdigit(static_cast<unsigned char>(src[i + 1])) || src[i + 1] == '.'))) {
      size_t j = i;
      if (src[j] == '-') ++j;
      bool is_int = true;
      while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      if (j < n && src[j] == '.') {
        is_int = false;
        ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      if (j < n && (src[j] == 'e' || src[j] == 'E')) {
        is_int = false;
        ++j;
        if (j < n && (src[j] == '+' || src[j] == '-')) ++j;
        while (j < n && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      }
      std::string text = src.substr(i, j - i);
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ParseError("malformed number '" + text + "'", l0, c0);
      }
      Token t;
      t.kind = Tok::Number;
      t.text = std::move(text);
      t.number = v;
      t.is_int = is_int;
      t.line = l0;
      t.column = c0;
      out.push_back(std::move(t));
      col += static_cast<int>(j - i);
      i = j;
      continue;
    }
    auto two = [&](char second) { return i + 1 < n && src[i + 1] == second; };
    switch (c) {
      case ':':
        push(Tok::Colon, ":", l0, c0);
        ++i;
        ++col;
        break;
      case ';':
        push(Tok::Semi, ";", l0, c0);
        ++i;
        ++col;
        break;
      case '(':
        push(Tok::LParen, "(", l0, c0);
        ++i;
        ++col;
        break;
      case ')':
        push(Tok::RParen, ")", l0, c0);
        ++i;
        ++col;
        break;
      case '<':
        if (two('=')) {
          push(Tok::Le, "<=", l0, c0);
          i += 2;
          col += 2;
        } else {
          push(Tok::Lt, "<", l0, c0);
          ++i;
          ++col;
        }
        break;
      case '>':
        if (two('=')) {
          push(Tok::Ge, ">=", l0, c0);
          i += 2;
          col += 2;
        } else {
          push(Tok::Gt, ">", l0, c0);
          ++i;
          ++col;
        }
        break;
      case '=':
        if (two('=')) {
          push(Tok::Eq, "==", l0, c0);
          i += 2;
          col += 2;
        } else {
          throw ParseError("unexpected '='; use '==' for comparison", l0, c0);
        }
        break;
      case '!':
        if (two('=')) {
          push(Tok::Ne, "!=", l0, c0);
          i += 2;
          col += 2;
        } else {
          throw ParseError("unexpected '!'", l0, c0);
        }
        break;
      default:
        throw ParseError(std::string("unexpected character '") + c + "'", l0, c0);
    }
  }
  Token end;
  end.kind = Tok::End;
  end.line = line;
  end.column = col;
  out.push_back(end);
  return out;
}

const char* tok_name(Tok t) {
  switch (t) {
    case Tok::Ident: return "identifier";
    case Tok::Number: return "number";
    case Tok::Colon: return "':'";
    case Tok::Semi: return "';'";
    case Tok::LParen: return "'('";
    case Tok::RParen: return "')'";
    case Tok::Lt: return "'<'";
    case Tok::Le: return "'<='";
    case Tok::Gt: return "'>'";
    case Tok::Ge: return "'>='";
    case Tok::Eq: return "'=='";
    case Tok::Ne: return "'!='";
    case Tok::KwStage: return "'stage'";
    case Tok::KwIf: return "'if'";
    case Tok::KwThen: return "'then'";
    case Tok::KwElse: return "'else'";
    case Tok::KwAnd: return "'and'";
    case Tok::KwOr: return "'or'";
    case Tok::KwNot: return "'not'";
    case Tok::KwTrue: return "'true'";
    case Tok::End: return "end of input";
  }
  return "?";
}

}  // namespace regimetest::dsl
