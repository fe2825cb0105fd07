// SPDX-License-Identifier: Apache-2.0
#include "lexer.hpp"

#include <cctype>
#include <cstdint>

#include "quarry/errors.hpp"

namespace quarry::sparql::detail {

namespace {

bool is_alpha(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalpha(u) || u >= 0x80;
}

bool is_name_char(char c) {
  auto u = static_cast<unsigned char>(c);
  return std::isalnum(u) || c == '_' || u >= 0x80;
}

bool is_digit(char c) { return c >= '0' && c <= '9'; }

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out += static_cast<char>(cp);
  } else if (cp < 0x800) {
    out += static_cast<char>(0xC0 | (cp >> 6));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else if (cp < 0x10000) {
    out += static_cast<char>(0xE0 | (cp >> 12));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  } else {
    out += static_cast<char>(0xF0 | (cp >> 18));
    out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
    out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
    out += static_cast<char>(0x80 | (cp & 0x3F));
  }
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  std::vector<Token> run() {
    std::vector<Token> tokens;
    while (true) {
      skip_space_and_comments();
      if (pos_ >= text_.size()) break;
      tokens.push_back(next());
    }
    tokens.push_back(Token{Tok::end, "", text_.size(), text_.size()});
    return tokens;
  }

 private:
  [[noreturn]] void fail(std::size_t at, const std::string& message) const {
    auto [line, col] = line_column(text_, at);
    throw SyntaxError(at, line, col, message);
  }

  char peek(std::size_t ahead = 0) const {
    return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
  }

  void skip_space_and_comments() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r') {
        ++pos_;
      } else if (c == '#') {
        while (pos_ < text_.size() && text_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  Token make(Tok type, std::size_t start, std::string text = {}) {
    return Token{type, std::move(text), start, pos_};
  }

  Token next() {
    const std::size_t start = pos_;
    const char c = peek();

    if (c == '<') return iri_or_operator(start);
    if (c == '"' || c == '\'') return string_literal(start);
    if (c == '?' || c == '$') {
      if (is_name_char(peek(1))) {
        ++pos_;
        std::string name;
        while (pos_ < text_.size() && is_name_char(text_[pos_])) name += text_[pos_++];
        return make(Tok::var, start, std::move(name));
      }
      if (c == '?') {
        ++pos_;
        return make(Tok::question, start);
      }
      fail(start, "'$' must be followed by a variable name");
    }
    if (c == '_' && peek(1) == ':') return blank_label(start);
    if (c == '@') return langtag(start);
    if (is_digit(c) || (c == '.' && is_digit(peek(1)))) return number(start);
    if (is_alpha(c) || c == ':') return name(start);

    ++pos_;
    switch (c) {
      case '{': return make(Tok::lbrace, start);
      case '}': return make(Tok::rbrace, start);
      case '(': return make(Tok::lparen, start);
      case ')': return make(Tok::rparen, start);
      case '[': return make(Tok::lbracket, start);
      case ']': return make(Tok::rbracket, start);
      case '.': return make(Tok::dot, start);
      case ',': return make(Tok::comma, start);
      case ';': return make(Tok::semicolon, start);
      case '*': return make(Tok::star, start);
      case '/': return make(Tok::slash, start);
      case '+': return make(Tok::plus, start);
      case '-': return make(Tok::minus, start);
      case '=': return make(Tok::eq, start);
      case '^':
        if (peek() == '^') {
          ++pos_;
          return make(Tok::caret2, start);
        }
        return make(Tok::caret, start);
      case '!':
        if (peek() == '=') {
          ++pos_;
          return make(Tok::ne, start);
        }
        return make(Tok::bang, start);
      case '>':
        if (peek() == '=') {
          ++pos_;
          return make(Tok::ge, start);
        }
        return make(Tok::gt, start);
      case '&':
        if (peek() == '&') {
          ++pos_;
          return make(Tok::and_, start);
        }
        break;
      case '|':
        if (peek() == '|') {
          ++pos_;
          return make(Tok::or_, start);
        }
        return make(Tok::pipe, start);
      default:
        break;
    }
    fail(start, std::string("unexpected character '") + c + "'");
  }

  Token iri_or_operator(std::size_t start) {
    std::size_t i = pos_ + 1;
    std::string content;
    while (i < text_.size()) {
      char ch = text_[i];
      if (ch == '>') {
        pos_ = i + 1;
        return make(Tok::iri, start, std::move(content));
      }
      auto u = static_cast<unsigned char>(ch);
      if (u <= 0x20 || ch == '<' || ch == '"' || ch == '{' || ch == '}' ||
          ch == '|' || ch == '^' || ch == '`' || ch == '\\') {
        break;
      }
      content += ch;
      ++i;
    }
    ++pos_;
    if (peek() == '=') {
      ++pos_;
      return make(Tok::le, start);
    }
    return make(Tok::lt, start);
  }

  Token string_literal(std::size_t start) {
    const char quote = peek();
    const bool long_form = peek(1) == quote && peek(2) == quote;
    pos_ += long_form ? 3 : 1;
    std::string value;
    while (true) {
      if (pos_ >= text_.size()) fail(start, "unterminated string literal");
      char ch = text_[pos_];
      if (long_form) {
        if (ch == quote && peek(1) == quote && peek(2) == quote) {
          pos_ += 3;
          break;
        }
      } else {
        if (ch == quote) {
          ++pos_;
          break;
        }
        if (ch == '\n' || ch == '\r') fail(start, "line break inside a short string literal");
      }
      if (ch == '\\') {
        value += escape(start);
        continue;
      }
      value += ch;
      ++pos_;
    }
    return make(Tok::string, start, std::move(value));
  }

  std::string escape(std::size_t start) {
    ++pos_;
    if (pos_ >= text_.size()) fail(start, "unterminated escape sequence");
    char e = text_[pos_++];
    switch (e) {
      case 't': return "\t";
      case 'b': return "\b";
      case 'n': return "\n";
      case 'r': return "\r";
      case 'f': return "\f";
      case '"': return "\"";
      case '\'': return "'";
      case '\\': return "\\";
      case 'u':
      case 'U': {
        std::size_t len = e == 'u' ? 4 : 8;
        if (pos_ + len > text_.size()) fail(start, "truncated unicode escape");
        std::uint32_t cp = 0;
        for (std::size_t k = 0; k < len; ++k) {
          char h = text_[pos_ + k];
          cp <<= 4;
          if (h >= '0' && h <= '9') cp |= static_cast<std::uint32_t>(h - '0');
          else if (h >= 'a' && h <= 'f') cp |= static_cast<std::uint32_t>(h - 'a' + 10);
          else if (h >= 'A' && h <= 'F') cp |= static_cast<std::uint32_t>(h - 'A' + 10);
          else fail(pos_, "invalid hex digit in unicode escape");
        }
        pos_ += len;
        std::string out;
        append_utf8(out, cp);
        return out;
      }
      default:
        fail(pos_ - 2, std::string("invalid escape sequence '\\") + e + "'");
    }
  }

  Token blank_label(std::size_t start) {
    pos_ += 2;
    std::string label;
    while (pos_ < text_.size() &&
           (is_name_char(text_[pos_]) || text_[pos_] == '-' || text_[pos_] == '.')) {
      label += text_[pos_++];
    }
    while (!label.empty() && label.back() == '.') {
      label.pop_back();
      --pos_;
    }
    if (label.empty()) fail(start, "blank node label expected after '_:'");
    return make(Tok::blank_label, start, std::move(label));
  }

  Token langtag(std::size_t start) {
    ++pos_;
    std::string tag;
    while (pos_ < text_.size() &&
           (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '-')) {
      tag += text_[pos_++];
    }
    if (tag.empty()) fail(start, "language tag expected after '@'");
    return make(Tok::langtag, start, std::move(tag));
  }

  Token number(std::size_t start) {
    std::string lexical;
    while (is_digit(peek())) lexical += text_[pos_++];
    Tok type = Tok::integer;
    if (peek() == '.' && is_digit(peek(1))) {
      type = Tok::decimal;
      lexical += text_[pos_++];
      while (is_digit(peek())) lexical += text_[pos_++];
    }
    if (peek() == 'e' || peek() == 'E') {
      std::size_t save = pos_;
      std::string exp(1, text_[pos_++]);
      if (peek() == '+' || peek() == '-') exp += text_[pos_++];
      if (is_digit(peek())) {
        while (is_digit(peek())) exp += text_[pos_++];
        lexical += exp;
        type = Tok::double_;
      } else {
        pos_ = save;
      }
    }
    return make(type, start, std::move(lexical));
  }

  Token name(std::size_t start) {
    std::size_t i = pos_;
    while (i < text_.size() &&
           (is_name_char(text_[i]) || text_[i] == '-' || text_[i] == '.')) {
      ++i;
    }
    // A prefix never ends with '.'.
    if (i < text_.size() && text_[i] == ':' && (i == pos_ || text_[i - 1] != '.')) {
      std::string prefix(text_.substr(pos_, i - pos_));
      pos_ = i + 1;
      std::string local = local_part();
      if (local.empty()) return make(Tok::pname_ns, start, std::move(prefix));
      return make(Tok::pname_ln, start, prefix + ":" + local);
    }
    std::string word;
    while (pos_ < text_.size() && is_name_char(text_[pos_])) word += text_[pos_++];
    if (word.empty()) fail(start, "unexpected character");
    return make(Tok::keyword, start, std::move(word));
  }

  std::string local_part() {
    std::string local;
    std::size_t consumed_dots = 0;
    while (pos_ < text_.size()) {
      char ch = text_[pos_];
      if (is_name_char(ch) || ch == '-' || ch == ':') {
        local += ch;
        ++pos_;
        consumed_dots = 0;
      } else if (ch == '.') {
        local += ch;
        ++pos_;
        ++consumed_dots;
      } else if (ch == '%' && pos_ + 2 < text_.size() &&
                 std::isxdigit(static_cast<unsigned char>(text_[pos_ + 1])) &&
                 std::isxdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
        local += text_.substr(pos_, 3);
        pos_ += 3;
        consumed_dots = 0;
      } else if (ch == '\\' && pos_ + 1 < text_.size() &&
                 std::string_view("_~.-!$&'()*+,;=/?#@%").find(text_[pos_ + 1]) !=
                     std::string_view::npos) {
        local += text_[pos_ + 1];
        pos_ += 2;
        consumed_dots = 0;
      } else {
        break;
      }
    }
    // Trailing dots terminate the triple, they are not part of the name.
    local.resize(local.size() - consumed_dots);
    pos_ -= consumed_dots;
    return local;
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<Token> tokenize(std::string_view text) { return Lexer(text).run(); }

std::pair<std::size_t, std::size_t> line_column(std::string_view text,
                                                std::size_t offset) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < offset && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::string describe(const Token& token) {
  switch (token.type) {
    case Tok::end: return "end of input";
    case Tok::iri: return "<" + token.text + ">";
    case Tok::pname_ns: return token.text + ":";
    case Tok::pname_ln: return token.text;
    case Tok::blank_label: return "_:" + token.text;
    case Tok::var: return "?" + token.text;
    case Tok::langtag: return "@" + token.text;
    case Tok::string: return "a string literal";
    case Tok::integer:
    case Tok::decimal:
    case Tok::double_:
    case Tok::keyword: return "'" + token.text + "'";
    case Tok::lbrace: return "'{'";
    case Tok::rbrace: return "'}'";
    case Tok::lparen: return "'('";
    case Tok::rparen: return "')'";
    case Tok::lbracket: return "'['";
    case Tok::rbracket: return "']'";
    case Tok::dot: return "'.'";
    case Tok::comma: return "','";
    case Tok::semicolon: return "';'";
    case Tok::star: return "'*'";
    case Tok::slash: return "'/'";
    case Tok::pipe: return "'|'";
    case Tok::caret: return "'^'";
    case Tok::caret2: return "'^^'";
    case Tok::bang: return "'!'";
    case Tok::question: return "'?'";
    case Tok::eq: return "'='";
    case Tok::ne: return "'!='";
    case Tok::lt: return "'<'";
    case Tok::gt: return "'>'";
    case Tok::le: return "'<='";
    case Tok::ge: return "'>='";
    case Tok::and_: return "'&&'";
    case Tok::or_: return "'||'";
    case Tok::plus: return "'+'";
    case Tok::minus: return "'-'";
  }
  return "token";
}

}  // namespace quarry::sparql::detail
