// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <functional>
#include <string>
#include <string_view>

namespace quarry {

namespace vocab {
inline constexpr std::string_view rdf = "http://www.w3.org/1999/02/22-rdf-syntax-ns#";
inline constexpr std::string_view rdfs = "http://www.w3.org/2000/01/rdf-schema#";
inline constexpr std::string_view xsd = "http://www.w3.org/2001/XMLSchema#";
inline constexpr std::string_view owl = "http://www.w3.org/2002/07/owl#";
inline constexpr std::string_view rdf_type = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
inline constexpr std::string_view rdf_first = "http://www.w3.org/1999/02/22-rdf-syntax-ns#first";
inline constexpr std::string_view rdf_rest = "http://www.w3.org/1999/02/22-rdf-syntax-ns#rest";
inline constexpr std::string_view rdf_nil = "http://www.w3.org/1999/02/22-rdf-syntax-ns#nil";
inline constexpr std::string_view rdf_lang_string = "http://www.w3.org/1999/02/22-rdf-syntax-ns#langString";
inline constexpr std::string_view xsd_string = "http://www.w3.org/2001/XMLSchema#string";
inline constexpr std::string_view xsd_boolean = "http://www.w3.org/2001/XMLSchema#boolean";
inline constexpr std::string_view xsd_integer = "http://www.w3.org/2001/XMLSchema#integer";
inline constexpr std::string_view xsd_decimal = "http://www.w3.org/2001/XMLSchema#decimal";
inline constexpr std::string_view xsd_double = "http://www.w3.org/2001/XMLSchema#double";
}  // namespace vocab

/// One position of a triple pattern or one RDF value in a result row.
///
/// Literals always carry a datatype: plain literals are xsd:string and
/// language-tagged ones rdf:langString. `Path` terms hold the canonical text
/// of a multi-step property path (full IRIs, see sparql::path_to_string).
struct Term {
  enum class Kind { variable, iri, literal, blank, path };

  Kind kind = Kind::variable;
  std::string value;
  std::string datatype;
  std::string language;

  static Term variable(std::string name);
  static Term iri(std::string iri);
  static Term literal(std::string lexical,
                      std::string datatype = std::string(vocab::xsd_string),
                      std::string language = {});
  static Term lang_literal(std::string lexical, std::string language);
  static Term blank(std::string label);
  static Term path(std::string text);

  bool is_variable() const noexcept { return kind == Kind::variable; }
  bool is_iri() const noexcept { return kind == Kind::iri; }
  bool is_literal() const noexcept { return kind == Kind::literal; }
  bool is_blank() const noexcept { return kind == Kind::blank; }
  bool is_path() const noexcept { return kind == Kind::path; }

  /// N-Triples-like rendering: `?x`, `<iri>`, `"lex"@en`, `"1"^^<dt>`, `_:b`.
  std::string to_string() const;
  /// Inverse of to_string(). Text matching no other form becomes a path term.
  static Term from_string(std::string_view text);

  friend bool operator==(const Term&, const Term&) = default;
  friend auto operator<=>(const Term&, const Term&) = default;
};

std::string_view to_string(Term::Kind kind);

/// Escapes a lexical form for use inside a double-quoted SPARQL/Turtle string.
std::string escape_string(std::string_view text);

/// Local name of an IRI: the part after the last '#', '/' or ':'.
std::string_view local_name(std::string_view iri);

}  // namespace quarry

template <>
struct std::hash<quarry::Term> {
  std::size_t operator()(const quarry::Term& t) const noexcept;
};
