// SPDX-License-Identifier: Apache-2.0
#include "quarry/term.hpp"

namespace quarry {

Term Term::variable(std::string name) {
  return Term{Kind::variable, std::move(name), {}, {}};
}

Term Term::iri(std::string iri) { return Term{Kind::iri, std::move(iri), {}, {}}; }

Term Term::literal(std::string lexical, std::string datatype,
                   std::string language) {
  if (!language.empty()) {
    datatype = std::string(vocab::rdf_lang_string);
  }
  return Term{Kind::literal, std::move(lexical), std::move(datatype),
              std::move(language)};
}

Term Term::lang_literal(std::string lexical, std::string language) {
  return literal(std::move(lexical), {}, std::move(language));
}

Term Term::blank(std::string label) {
  return Term{Kind::blank, std::move(label), {}, {}};
}

Term Term::path(std::string text) { return Term{Kind::path, std::move(text), {}, {}}; }

std::string escape_string(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default: out += c;
    }
  }
  return out;
}

std::string Term::to_string() const {
  switch (kind) {
    case Kind::variable:
      return "?" + value;
    case Kind::iri:
      return "<" + value + ">";
    case Kind::blank:
      return "_:" + value;
    case Kind::path:
      return value;
    case Kind::literal: {
      std::string out = "\"" + escape_string(value) + "\"";
      if (!language.empty()) {
        out += "@" + language;
      } else if (!datatype.empty() && datatype != vocab::xsd_string) {
        out += "^^<" + datatype + ">";
      }
      return out;
    }
  }
  return value;
}

Term Term::from_string(std::string_view text) {
  if (text.size() > 1 && text.front() == '?') return variable(std::string(text.substr(1)));
  if (text.size() > 2 && text.substr(0, 2) == "_:") return blank(std::string(text.substr(2)));
  if (text.size() > 1 && text.front() == '<' && text.back() == '>' &&
      text.find_first_of("<> ", 1) == text.size() - 1) {
    return iri(std::string(text.substr(1, text.size() - 2)));
  }
  if (!text.empty() && text.front() == '"') {
    std::string lexical;
    std::size_t i = 1;
    for (; i < text.size() && text[i] != '"'; ++i) {
      if (text[i] != '\\' || i + 1 == text.size()) {
        lexical += text[i];
        continue;
      }
      switch (text[++i]) {
        case 'n': lexical += '\n'; break;
        case 'r': lexical += '\r'; break;
        case 't': lexical += '\t'; break;
        default: lexical += text[i];
      }
    }
    auto rest = i < text.size() ? text.substr(i + 1) : std::string_view();
    if (rest.empty()) return literal(std::move(lexical));
    if (rest.front() == '@') return lang_literal(std::move(lexical), std::string(rest.substr(1)));
    if (rest.size() > 4 && rest.substr(0, 3) == "^^<" && rest.back() == '>') {
      return literal(std::move(lexical), std::string(rest.substr(3, rest.size() - 4)));
    }
  }
  return path(std::string(text));
}

std::string_view to_string(Term::Kind kind) {
  switch (kind) {
    case Term::Kind::variable: return "variable";
    case Term::Kind::iri: return "iri";
    case Term::Kind::literal: return "literal";
    case Term::Kind::blank: return "blank";
    case Term::Kind::path: return "path";
  }
  return "unknown";
}

std::string_view local_name(std::string_view iri) {
  auto pos = iri.find_last_of("#/:");
  if (pos == std::string_view::npos || pos + 1 == iri.size()) {
    return iri;
  }
  return iri.substr(pos + 1);
}

}  // namespace quarry

std::size_t std::hash<quarry::Term>::operator()(
    const quarry::Term& t) const noexcept {
  std::size_t h = std::hash<std::string>{}(t.value);
  h ^= std::hash<std::string>{}(t.datatype) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= std::hash<std::string>{}(t.language) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  h ^= static_cast<std::size_t>(t.kind) * 0x100000001b3ULL;
  return h;
}
