// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "quarry/errors.hpp"
#include "quarry/sparql/ast.hpp"

namespace quarry::sparql {

struct ParseOptions {
  /// Prefixes usable without a PREFIX declaration, on top of rdf, rdfs, xsd
  /// and owl (for instance the prefixes an endpoint publishes).
  std::map<std::string, std::string> extra_prefixes;
};

/// Parses a SPARQL 1.1 query (SELECT, ASK, CONSTRUCT, DESCRIBE).
/// Throws SyntaxError on malformed input, undeclared prefixes, and SPARQL
/// Update requests.
ParsedQuery parse_query(std::string_view text, const ParseOptions& options = {});

/// A triple in a named graph, or in the default graph when `graph` is empty.
struct Quad {
  Term subject;
  Term predicate;
  Term object;
  std::string graph;

  friend bool operator==(const Quad&, const Quad&) = default;
};

/// Parses Turtle, plus `GRAPH <g> { ... }` blocks for named graphs.
std::vector<Quad> parse_turtle(std::string_view text);

}  // namespace quarry::sparql
