// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace quarry::sparql::detail {

enum class Tok {
  end,
  iri,          // text: IRI content without brackets
  pname_ns,     // text: prefix without ':'
  pname_ln,     // text: "prefix:local" (local unescaped)
  blank_label,  // text: label without "_:"
  var,          // text: name without '?'/'$'
  langtag,      // text: tag without '@'
  integer,
  decimal,
  double_,
  string,       // text: decoded value
  keyword,      // text: as written
  lbrace, rbrace, lparen, rparen, lbracket, rbracket,
  dot, comma, semicolon,
  star, slash, pipe, caret, caret2, bang, question,
  eq, ne, lt, gt, le, ge, and_, or_, plus, minus,
};

struct Token {
  Tok type = Tok::end;
  std::string text;
  std::size_t offset = 0;
  std::size_t end = 0;
};

/// Splits SPARQL/Turtle text into tokens. Throws SyntaxError on unterminated
/// strings or stray characters.
std::vector<Token> tokenize(std::string_view text);

/// 1-based line and column of a byte offset.
std::pair<std::size_t, std::size_t> line_column(std::string_view text,
                                                std::size_t offset);

std::string describe(const Token& token);

}  // namespace quarry::sparql::detail
